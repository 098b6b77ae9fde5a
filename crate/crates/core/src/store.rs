//! Offline url → quality score store.
//!
//! On disk it is a tab-separated file sorted by url (tabs shown as spaces):
//!
//! ```text
//! # layoutrank score store v1
//! # schema_hash <hex>
//! # checkpoint_hash <hex>
//! url    score    model_version
//! https://a.example/    0.8731    <hex>
//! ```
//!
//! Scores are written in shortest round-trip form, so a loaded store returns
//! exactly the value that was written.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const STORE_VERSION: u32 = 1;
const MAGIC: &str = "# layoutrank score store v";
const COLUMNS: &str = "url\tscore\tmodel_version";

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreStore {
    pub schema_hash: String,
    /// Hash of the checkpoint that produced the scores; every row carries it
    /// as its `model_version`.
    pub model_version: String,
    entries: Vec<(String, f64)>,
}

impl ScoreStore {
    /// Builds a store, sorting by url. Duplicate urls and scores outside
    /// `[0, 1]` are rejected.
    pub fn new(
        schema_hash: impl Into<String>,
        model_version: impl Into<String>,
        mut entries: Vec<(String, f64)>,
    ) -> Result<Self> {
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Data(format!(
                "duplicate url in score store: {}",
                w[0].0
            )));
        }
        if let Some((url, s)) = entries.iter().find(|(_, s)| !(0.0..=1.0).contains(s)) {
            return Err(Error::Data(format!(
                "score {s} for {url} is outside [0, 1]"
            )));
        }
        if let Some((url, _)) = entries
            .iter()
            .find(|(u, _)| u.is_empty() || u.contains(['\t', '\n', '\r']))
        {
            return Err(Error::Data(format!("url {url:?} cannot be stored")));
        }
        Ok(ScoreStore {
            schema_hash: schema_hash.into(),
            model_version: model_version.into(),
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Binary search by url.
    pub fn get(&self, url: &str) -> Option<f64> {
        self.entries
            .binary_search_by(|(u, _)| u.as_str().cmp(url))
            .ok()
            .map(|i| self.entries[i].1)
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.entries.len() + 4));
        let _ = writeln!(s, "{MAGIC}{STORE_VERSION}");
        let _ = writeln!(s, "# schema_hash {}", self.schema_hash);
        let _ = writeln!(s, "# checkpoint_hash {}", self.model_version);
        s.push_str(COLUMNS);
        s.push('\n');
        for (url, score) in &self.entries {
            let _ = writeln!(s, "{url}\t{score}\t{}", self.model_version);
        }
        s
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let schema_err = |line: usize, message: String| Error::Schema { line, message };
        let mut lines = text.lines().enumerate();
        let mut header = |expect: &str| -> Result<String> {
            let (i, l) = lines
                .next()
                .ok_or_else(|| schema_err(0, "truncated score store header".into()))?;
            l.strip_prefix(expect)
                .map(str::to_string)
                .ok_or_else(|| schema_err(i + 1, format!("expected `{expect}...`, found `{l}`")))
        };
        let version = header(MAGIC)?;
        if version.trim() != STORE_VERSION.to_string() {
            return Err(Error::Version {
                expected: STORE_VERSION,
                found: version.trim().parse().unwrap_or(0),
            });
        }
        let schema_hash = header("# schema_hash ")?;
        let model_version = header("# checkpoint_hash ")?;
        let cols = header("")?;
        if cols != COLUMNS {
            return Err(schema_err(4, format!("expected columns `{COLUMNS}`")));
        }
        let mut entries = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [url, score, version] = fields[..] else {
                return Err(schema_err(i + 1, "expected 3 tab-separated fields".into()));
            };
            let score: f64 = score
                .parse()
                .map_err(|_| schema_err(i + 1, format!("bad score `{score}`")))?;
            if version != model_version {
                return Err(schema_err(
                    i + 1,
                    format!("row model_version {version} differs from header"),
                ));
            }
            entries.push((url.to_string(), score));
        }
        if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Data("score store rows are not sorted by url".into()));
        }
        ScoreStore::new(schema_hash, model_version, entries)
    }

    /// Writes through a temporary file and renames it into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_tsv()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_store_has_a_valid_header() {
        let s = ScoreStore::new("abc", "def", vec![]).unwrap();
        let text = s.to_tsv();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(ScoreStore::from_tsv(&text).unwrap(), s);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ScoreStore::new("a", "b", vec![("u".into(), 0.1), ("u".into(), 0.2)]).is_err());
        assert!(ScoreStore::new("a", "b", vec![("u".into(), 1.5)]).is_err());
        assert!(ScoreStore::new("a", "b", vec![("u\tv".into(), 0.5)]).is_err());
        let good = ScoreStore::new("a", "b", vec![("u".into(), 0.5)])
            .unwrap()
            .to_tsv();
        assert!(matches!(
            ScoreStore::from_tsv(&good.replace("v1", "v9")),
            Err(Error::Version { .. })
        ));
        assert!(matches!(
            ScoreStore::from_tsv(&good.replace("\tb\n", "\tc\n")),
            Err(Error::Schema { line: 5, .. })
        ));
        assert!(matches!(
            ScoreStore::from_tsv("nonsense"),
            Err(Error::Schema { .. })
        ));
    }

    proptest! {
        #[test]
        fn lookup_returns_written_scores(rows in proptest::collection::btree_map("[a-z/:.]{1,20}", 0.0f64..=1.0, 0..60)) {
            let entries: Vec<(String, f64)> = rows.iter().map(|(k, v)| (k.clone(), *v)).rev().collect();
            let s = ScoreStore::new("s", "m", entries).unwrap();
            let back = ScoreStore::from_tsv(&s.to_tsv()).unwrap();
            for (url, score) in &rows {
                prop_assert_eq!(back.get(url).map(f64::to_bits), Some(score.to_bits()));
            }
            prop_assert_eq!(back.get("not-there-\u{1}"), None);
        }
    }
}
