//! Feature pre-processing: fitted non-uniform buckets for continuous layout
//! features, vocabularies for discrete ones, and the index encoding that
//! selects embedding rows for each node.
//!
//! Index layout per feature table:
//! - continuous: `0..num_buckets` are buckets, `num_buckets` is MISSING.
//! - discrete: `0` is OOV, `1..=tokens` are vocabulary entries, the next index is MISSING.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dom::NodeType;
use crate::error::{Error, Result};
use crate::graph::LayoutGraph;
use crate::tensor::Tensor;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_MIN_COUNT: usize = 50;
pub const DEFAULT_NUM_QUANTILES: usize = 16;
pub const DEFAULT_EMBEDDING_DIM: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Discrete,
}

/// Which features apply to a node type: typography is meaningless on media nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Applies {
    All,
    NonMedia,
}

/// Node-level layout features, grouped as location, content, layout, others.
/// Page category is a graph-level input and deliberately absent here.
pub const NODE_FEATURES: [(&str, FeatureKind); 19] = [
    ("height", FeatureKind::Continuous),
    ("width", FeatureKind::Continuous),
    ("xpos", FeatureKind::Continuous),
    ("ypos", FeatureKind::Continuous),
    ("position", FeatureKind::Discrete),
    ("word_count", FeatureKind::Continuous),
    ("font_size", FeatureKind::Continuous),
    ("font_style", FeatureKind::Discrete),
    ("line_height", FeatureKind::Continuous),
    ("font_weight", FeatureKind::Discrete),
    ("text_align", FeatureKind::Discrete),
    ("border", FeatureKind::Continuous),
    ("padding", FeatureKind::Continuous),
    ("margin", FeatureKind::Continuous),
    ("visibility", FeatureKind::Discrete),
    ("display", FeatureKind::Discrete),
    ("outline_style", FeatureKind::Discrete),
    ("outline_width", FeatureKind::Continuous),
    ("tag_name", FeatureKind::Discrete),
];

fn applicability(name: &str) -> Applies {
    match name {
        "font_size" | "font_style" | "line_height" | "font_weight" | "text_align" => {
            Applies::NonMedia
        }
        _ => Applies::All,
    }
}

/// A raw, un-bucketed feature value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawValue {
    Num(f64),
    Tok(String),
}

pub type RawFeatures = BTreeMap<String, RawValue>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketSpec {
    pub feature_name: String,
    /// Strictly increasing cut points; a value `x` lands in the number of cuts `<= x`.
    pub boundaries: Vec<f64>,
}

impl BucketSpec {
    pub fn num_buckets(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn bucket(&self, x: f64) -> usize {
        self.boundaries.partition_point(|b| *b <= x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVocab {
    pub feature_name: String,
    /// Sorted tokens; token `tokens[i]` has index `i + 1`.
    pub tokens: Vec<String>,
}

impl FeatureVocab {
    pub const OOV: usize = 0;

    /// Number of indices including OOV.
    pub fn len(&self) -> usize {
        self.tokens.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index(&self, token: &str) -> usize {
        self.tokens
            .binary_search_by(|t| t.as_str().cmp(token))
            .map_or(Self::OOV, |i| i + 1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSpec {
    Continuous(BucketSpec),
    Discrete(FeatureVocab),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub name: String,
    pub spec: FeatureSpec,
    /// Training-sample count per bucket / vocabulary index seen during fitting.
    pub occupancy: Vec<usize>,
}

impl FeatureEntry {
    /// Embedding table height, MISSING row included.
    pub fn table_size(&self) -> usize {
        self.missing_index() + 1
    }

    pub fn missing_index(&self) -> usize {
        match &self.spec {
            FeatureSpec::Continuous(b) => b.num_buckets(),
            FeatureSpec::Discrete(v) => v.len(),
        }
    }

    pub fn encode(&self, value: Option<&RawValue>) -> usize {
        match (&self.spec, value) {
            (FeatureSpec::Continuous(b), Some(RawValue::Num(x))) if !x.is_nan() => b.bucket(*x),
            (FeatureSpec::Discrete(v), Some(RawValue::Tok(t))) => v.index(t),
            (FeatureSpec::Discrete(_), Some(RawValue::Num(_))) => FeatureVocab::OOV,
            _ => self.missing_index(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub version: u32,
    pub tag_table_version: u32,
    pub embedding_dim: usize,
    pub min_count: usize,
    pub features: Vec<FeatureEntry>,
    pub category_vocab: FeatureVocab,
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub min_count: usize,
    pub num_quantiles: usize,
    pub embedding_dim: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            min_count: DEFAULT_MIN_COUNT,
            num_quantiles: DEFAULT_NUM_QUANTILES,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
        }
    }
}

/// Fits bucket boundaries and vocabularies over every non-virtual node of the corpus.
pub fn fit_buckets<'a, I>(corpus: I, opts: &FitOptions) -> Result<FeatureSchema>
where
    I: IntoIterator<Item = &'a LayoutGraph>,
{
    let mut numeric: Vec<Vec<f64>> = vec![Vec::new(); NODE_FEATURES.len()];
    let mut tokens: Vec<HashMap<String, usize>> = vec![HashMap::new(); NODE_FEATURES.len()];
    let mut categories: HashMap<String, usize> = HashMap::new();
    let mut graphs = 0usize;

    for g in corpus {
        graphs += 1;
        *categories.entry(g.category.clone()).or_default() += 1;
        for (node_type, raw) in g.node_types.iter().zip(&g.raw_features).skip(1) {
            for (f, (name, kind)) in NODE_FEATURES.iter().enumerate() {
                if !applies_to(name, *node_type) {
                    continue;
                }
                match (kind, raw.get(*name)) {
                    (FeatureKind::Continuous, Some(RawValue::Num(x))) if x.is_finite() => {
                        numeric[f].push(*x)
                    }
                    (FeatureKind::Discrete, Some(RawValue::Tok(t))) => {
                        *tokens[f].entry(t.clone()).or_default() += 1
                    }
                    _ => {}
                }
            }
        }
    }
    if graphs == 0 {
        return Err(Error::EmptyCorpus);
    }

    let mut features = Vec::with_capacity(NODE_FEATURES.len());
    for (f, (name, kind)) in NODE_FEATURES.iter().enumerate() {
        let entry = match kind {
            FeatureKind::Continuous => {
                let mut values = std::mem::take(&mut numeric[f]);
                values.sort_by(f64::total_cmp);
                let boundaries = quantile_boundaries(&values, opts.num_quantiles, opts.min_count);
                let spec = BucketSpec {
                    feature_name: (*name).into(),
                    boundaries,
                };
                let mut occupancy = vec![0; spec.num_buckets()];
                for &x in &values {
                    occupancy[spec.bucket(x)] += 1;
                }
                FeatureEntry {
                    name: (*name).into(),
                    spec: FeatureSpec::Continuous(spec),
                    occupancy,
                }
            }
            FeatureKind::Discrete => {
                let counts = &tokens[f];
                let vocab = build_vocab(name, counts, opts.min_count);
                let mut occupancy = vec![0; vocab.len()];
                for (tok, &c) in counts {
                    occupancy[vocab.index(tok)] += c;
                }
                FeatureEntry {
                    name: (*name).into(),
                    spec: FeatureSpec::Discrete(vocab),
                    occupancy,
                }
            }
        };
        features.push(entry);
    }

    Ok(FeatureSchema {
        version: SCHEMA_VERSION,
        tag_table_version: crate::dom::tags::TAG_TABLE_VERSION,
        embedding_dim: opts.embedding_dim,
        min_count: opts.min_count,
        features,
        category_vocab: build_vocab("category", &categories, 1),
    })
}

fn build_vocab(name: &str, counts: &HashMap<String, usize>, min_count: usize) -> FeatureVocab {
    let mut tokens: Vec<String> = counts
        .iter()
        .filter(|(_, &c)| c >= min_count)
        .map(|(t, _)| t.clone())
        .collect();
    tokens.sort();
    FeatureVocab {
        feature_name: name.into(),
        tokens,
    }
}

/// Non-uniform cut points over sorted `values`.
///
/// Walks the distinct values, closing a bucket once it holds at least
/// `max(ceil(remaining / remaining_quantiles), min_count)` samples, so heavy
/// point masses get their own bucket and the rest is re-quantiled. A short
/// trailing bucket is merged into its predecessor. Always returns at least one
/// cut, so there are never fewer than two buckets.
pub fn quantile_boundaries(values: &[f64], num_quantiles: usize, min_count: usize) -> Vec<f64> {
    let Some(&first) = values.first() else {
        return vec![0.0];
    };
    let min_count = min_count.max(1);
    let mut remaining_n = values.len();
    let mut remaining_q = num_quantiles.max(1);
    let target = |n: usize, q: usize| n.div_ceil(q).max(min_count);
    let mut goal = target(remaining_n, remaining_q);
    let mut cuts: Vec<f64> = Vec::new();
    let mut current = 0usize;

    let mut i = 0;
    while i < values.len() {
        let v = values[i];
        let mut j = i;
        while j < values.len() && values[j] == v {
            j += 1;
        }
        if current > 0 && current >= goal {
            cuts.push(v);
            remaining_n -= current;
            remaining_q = (remaining_q - 1).max(1);
            goal = target(remaining_n, remaining_q);
            current = 0;
        }
        current += j - i;
        i = j;
    }
    if current < min_count && !cuts.is_empty() {
        cuts.pop();
    }
    if cuts.is_empty() {
        cuts.push(first);
    }
    cuts
}

fn applies_to(name: &str, node_type: NodeType) -> bool {
    match applicability(name) {
        Applies::All => node_type != NodeType::Virtual,
        Applies::NonMedia => !matches!(
            node_type,
            NodeType::Image | NodeType::Video | NodeType::Virtual
        ),
    }
}

impl FeatureSchema {
    pub fn table_sizes(&self) -> Vec<usize> {
        self.features.iter().map(FeatureEntry::table_size).collect()
    }

    pub fn num_categories(&self) -> usize {
        self.category_vocab.len()
    }

    /// One embedding index per feature. Features that do not apply to
    /// `node_type`, or are absent from `raw`, map to the feature's MISSING index.
    pub fn encode_node(&self, raw: &RawFeatures, node_type: NodeType) -> Vec<usize> {
        self.features
            .iter()
            .map(|f| {
                if applies_to(&f.name, node_type) {
                    f.encode(raw.get(&f.name))
                } else {
                    f.missing_index()
                }
            })
            .collect()
    }

    pub fn category_index(&self, category: &str) -> usize {
        self.category_vocab.index(category)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Content hash of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(&Sha256::digest(&json)[..16])
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schema: FeatureSchema = serde_json::from_str(&text)?;
        if schema.version != SCHEMA_VERSION {
            return Err(Error::Version {
                expected: SCHEMA_VERSION,
                found: schema.version,
            });
        }
        Ok(schema)
    }
}

/// `h_n^(0)`: the sum of the looked-up embedding rows, one per feature.
pub fn init_node_embedding(indices: &[usize], tables: &[Tensor]) -> Vec<f64> {
    assert_eq!(indices.len(), tables.len(), "one index per embedding table");
    let d = tables.first().map_or(0, |t| t.cols());
    let mut out = vec![0.0; d];
    for (&idx, table) in indices.iter().zip(tables) {
        assert!(idx < table.rows(), "embedding index {idx} out of range");
        for (o, v) in out.iter_mut().zip(table.row(idx)) {
            *o += v;
        }
    }
    out
}
