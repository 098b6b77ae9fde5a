use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{apportion, ManifestEntry};
use crate::error::{Error, Result};

/// Document urls per split, each list sorted.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<String>,
    pub eval: Vec<String>,
    pub test: Vec<String>,
}

impl Splits {
    pub fn len(&self) -> usize {
        self.train.len() + self.eval.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Train/eval/test split stratified by (category, label). Within each stratum
/// the documents are shuffled with `seed` and cut by largest remainder, so
/// every split keeps the corpus's category and label proportions.
pub fn split(entries: &[&ManifestEntry], ratios: [f64; 3], seed: u64) -> Result<Splits> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
        return Err(Error::BadRatios(ratios.to_vec()));
    }
    let mut strata: BTreeMap<(&str, u8), Vec<&str>> = BTreeMap::new();
    for e in entries {
        strata
            .entry((e.category.as_str(), e.label))
            .or_default()
            .push(&e.url);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Splits::default();
    for (_, mut urls) in strata {
        urls.sort_unstable();
        urls.shuffle(&mut rng);
        let counts = apportion(urls.len(), &ratios);
        let mut it = urls.into_iter();
        for (dst, k) in [&mut out.train, &mut out.eval, &mut out.test]
            .into_iter()
            .zip(counts)
        {
            dst.extend(it.by_ref().take(k).map(str::to_string));
        }
    }
    out.train.sort();
    out.eval.sort();
    out.test.sort();
    Ok(out)
}
