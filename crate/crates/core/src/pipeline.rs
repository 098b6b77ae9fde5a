//! Glue used by the command-line tool: ingestion of HTML or pre-rendered
//! files into layout graphs, label files, batch scoring into a
//! [`ScoreStore`], the rerank simulation and report deltas.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dom::{self, DomTree, Viewport};
use crate::error::{Error, Result};
use crate::features::FeatureSchema;
use crate::graph::{build_layout_graph, LayoutGraph};
use crate::metrics::{self, EvalReport, Judgments};
use crate::model::{encode_graph, score_graphs, Checkpoint, EncodedGraph};
use crate::store::ScoreStore;
use crate::synth::Document;
use crate::train::Example;

/// Parses HTML and estimates geometry.
pub fn ingest_html(source: &str, url: &str, category: &str, viewport: Viewport) -> Result<DomTree> {
    let mut tree = dom::parse_html(source)?;
    tree.source_url = url.to_string();
    tree.category = category.to_string();
    Ok(dom::estimate_geometry(tree, viewport))
}

/// Reads one input file: `.jsonl` files are pre-rendered trees, anything else is HTML.
pub fn ingest_file(
    path: &Path,
    url: Option<&str>,
    category: &str,
    viewport: Viewport,
) -> Result<DomTree> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        let mut tree = dom::load_prerendered(path)?;
        if let Some(u) = url {
            tree.source_url = u.to_string();
        }
        return Ok(tree);
    }
    let source = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let default_url = format!("file://{}", path.display());
    ingest_html(&source, url.unwrap_or(&default_url), category, viewport)
}

/// Layout graphs of generated documents, through the same path as real HTML.
pub fn graphs_from_documents(docs: &[Document], viewport: Viewport) -> Result<Vec<LayoutGraph>> {
    docs.iter()
        .map(|d| {
            Ok(build_layout_graph(&ingest_html(
                &d.html,
                &d.entry.url,
                &d.entry.category,
                viewport,
            )?))
        })
        .collect()
}

/// Reads `url<TAB>label` rows; a leading `url\tlabel` header is skipped.
pub fn parse_labels(text: &str) -> Result<BTreeMap<String, u8>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (i == 0 && line.trim() == "url\tlabel") {
            continue;
        }
        let bad = |m: &str| Error::Schema {
            line: i + 1,
            message: m.to_string(),
        };
        let (url, label) = line
            .split_once('\t')
            .ok_or_else(|| bad("expected url<TAB>label"))?;
        let label = match label.trim() {
            "0" => 0,
            "1" => 1,
            _ => return Err(bad("label must be 0 or 1")),
        };
        if out.insert(url.to_string(), label).is_some() {
            return Err(bad("duplicate url"));
        }
    }
    Ok(out)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<BTreeMap<String, u8>> {
    let path = path.as_ref();
    parse_labels(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

/// Pairs encoded graphs with their labels; every graph needs a label.
pub fn examples(
    graphs: &[LayoutGraph],
    schema: &FeatureSchema,
    labels: &BTreeMap<String, u8>,
) -> Result<Vec<Example>> {
    graphs
        .iter()
        .map(|g| {
            let label = *labels
                .get(&g.url)
                .ok_or_else(|| Error::Data(format!("no label for {}", g.url)))?;
            Ok(Example {
                graph: encode_graph(g, schema),
                label,
            })
        })
        .collect()
}

/// Scores every graph in eval mode and collects the results in a store.
pub fn score_batch(
    graphs: &[LayoutGraph],
    checkpoint: &Checkpoint,
    schema: &FeatureSchema,
    threads: usize,
) -> Result<ScoreStore> {
    checkpoint.check_schema(schema)?;
    let params = checkpoint.params()?;
    let encoded: Vec<EncodedGraph> = graphs.iter().map(|g| encode_graph(g, schema)).collect();
    let start = Instant::now();
    let scores = score_graphs(&params, &checkpoint.config, &encoded, threads)?;
    let secs = start.elapsed().as_secs_f64();
    log::info!(
        "scored {} graphs in {secs:.2}s ({:.1} graphs/s)",
        graphs.len(),
        graphs.len() as f64 / secs.max(1e-9)
    );
    let entries = graphs.iter().map(|g| g.url.clone()).zip(scores).collect();
    ScoreStore::new(schema.hash(), checkpoint.hash(), entries)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub url: String,
    pub relevance: f64,
    pub rel_grade: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query: String,
    pub results: Vec<RankedResult>,
}

pub fn parse_ranked_lists(text: &str) -> Result<Vec<RankedList>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Schema {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionChange {
    pub query: String,
    pub url: String,
    /// 1-based ranks.
    pub before: usize,
    pub after: usize,
    pub quality: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RerankReport {
    pub weight: f64,
    pub p: usize,
    pub dcg_before: f64,
    pub dcg_after: f64,
    pub delta: f64,
    /// Urls absent from the store, scored as 0.5.
    pub missing: Vec<String>,
    pub changes: Vec<PositionChange>,
}

pub const NEUTRAL_QUALITY: f64 = 0.5;

/// Reorders each list by `(1 - w) * relevance + w * quality` (stable, so
/// ties keep their input order) and reports DCG@p before and after.
///
/// Input lists are ranker output and must be ordered by non-increasing
/// relevance; with `w = 0` the output therefore equals the input.
pub fn rerank_sim(
    lists: &[RankedList],
    store: &ScoreStore,
    weight: f64,
    p: usize,
) -> Result<(Vec<RankedList>, RerankReport)> {
    if !(0.0..=1.0).contains(&weight) {
        return Err(Error::BadWeight(weight));
    }
    let mut missing = Vec::new();
    let mut changes = Vec::new();
    let mut out = Vec::with_capacity(lists.len());
    for list in lists {
        if let Some(r) = list.results.iter().find(|r| !r.relevance.is_finite()) {
            return Err(Error::Data(format!("non-finite relevance for {}", r.url)));
        }
        if let Some(w) = list
            .results
            .windows(2)
            .find(|w| w[0].relevance < w[1].relevance)
        {
            return Err(Error::Data(format!(
                "results for query {:?} are not ordered by relevance ({} before {})",
                list.query, w[0].relevance, w[1].relevance
            )));
        }
        let quality: Vec<f64> = list
            .results
            .iter()
            .map(|r| {
                store.get(&r.url).unwrap_or_else(|| {
                    log::warn!(
                        "{} is not in the score store; using {NEUTRAL_QUALITY}",
                        r.url
                    );
                    missing.push(r.url.clone());
                    NEUTRAL_QUALITY
                })
            })
            .collect();
        let key: Vec<f64> = list
            .results
            .iter()
            .zip(&quality)
            .map(|(r, q)| (1.0 - weight) * r.relevance + weight * q)
            .collect();
        let mut order: Vec<usize> = (0..list.results.len()).collect();
        // stable sort: equal keys keep their original order
        order.sort_by(|&a, &b| {
            key[b]
                .partial_cmp(&key[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for (new_pos, &old_pos) in order.iter().enumerate() {
            if new_pos != old_pos {
                changes.push(PositionChange {
                    query: list.query.clone(),
                    url: list.results[old_pos].url.clone(),
                    before: old_pos + 1,
                    after: new_pos + 1,
                    quality: quality[old_pos],
                });
            }
        }
        out.push(RankedList {
            query: list.query.clone(),
            results: order.iter().map(|&i| list.results[i].clone()).collect(),
        });
    }
    let judgments = |ls: &[RankedList]| -> Vec<Judgments> {
        ls.iter()
            .map(|l| Judgments {
                query: l.query.clone(),
                grades: l.results.iter().map(|r| r.rel_grade).collect(),
            })
            .collect()
    };
    let (dcg_before, dcg_after) = if lists.is_empty() {
        (0.0, 0.0)
    } else {
        (
            metrics::dcg_at(&judgments(lists), p)?.mean,
            metrics::dcg_at(&judgments(&out), p)?.mean,
        )
    };
    missing.sort();
    missing.dedup();
    let report = RerankReport {
        weight,
        p,
        dcg_before,
        dcg_after,
        delta: dcg_after - dcg_before,
        missing,
        changes,
    };
    Ok((out, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: String,
    pub baseline: f64,
    pub value: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub rows: Vec<MetricDelta>,
}

/// Metrics that are proportions are shown as percentage points.
fn is_proportion(metric: &str) -> bool {
    !(metric == "PNR" || metric.starts_with("DCG@"))
}

/// Per-metric difference `eval - baseline`. Both reports must carry the same metrics.
pub fn report_delta(eval: &EvalReport, baseline: &EvalReport) -> Result<DeltaReport> {
    let (a, b) = (eval.metrics(), baseline.metrics());
    let names = |m: &[(String, f64)]| m.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>();
    if names(&a) != names(&b) {
        return Err(Error::MetricMismatch(format!(
            "{:?} vs {:?}",
            names(&a),
            names(&b)
        )));
    }
    let rows = a
        .into_iter()
        .zip(b)
        .map(|((metric, value), (_, baseline))| MetricDelta {
            delta: if value == baseline {
                0.0
            } else {
                value - baseline
            },
            metric,
            baseline,
            value,
        })
        .collect();
    Ok(DeltaReport { rows })
}

impl DeltaReport {
    pub fn render(&self) -> String {
        let mut s = format!(
            "{:<16} {:>12} {:>12} {:>12}\n",
            "metric", "baseline", "value", "delta"
        );
        for r in &self.rows {
            let delta = if is_proportion(&r.metric) {
                format!("{:+.2}%", 100.0 * r.delta)
            } else {
                format!("{:+.4}", r.delta)
            };
            let _ = writeln!(
                s,
                "{:<16} {:>12.4} {:>12.4} {:>12}",
                r.metric, r.baseline, r.value, delta
            );
        }
        s
    }
}
