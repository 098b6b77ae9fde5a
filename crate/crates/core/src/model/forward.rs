use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{gat_layer, gin_layer, EdgeIndex};
use super::{Head, LayerVars, ModelConfig, ModelParams, ParamVars, Readout};
use crate::error::{Error, Result};
use crate::features::FeatureSchema;
use crate::graph::{LayoutGraph, VIRTUAL_NODE};
use crate::tensor::{Tape, Var};

/// A layout graph with features mapped to embedding indices.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedGraph {
    pub url: String,
    pub num_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    /// One index vector per DOM node (graph nodes `1..num_nodes`).
    pub features: Vec<Vec<usize>>,
    pub category: usize,
}

pub fn encode_graph(g: &LayoutGraph, schema: &FeatureSchema) -> EncodedGraph {
    EncodedGraph {
        url: g.url.clone(),
        num_nodes: g.num_nodes,
        edges: g.edges.clone(),
        features: g
            .raw_features
            .iter()
            .zip(&g.node_types)
            .skip(1)
            .map(|(raw, t)| schema.encode_node(raw, *t))
            .collect(),
        category: schema.category_index(&g.category),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active, masks drawn from a generator seeded with `seed`.
    Train {
        seed: u64,
    },
    Eval,
}

pub struct ForwardOutput {
    /// `[num_graphs, 1]`
    pub scores: Var,
    /// Final node states of the batched graph, `[total_nodes, d]`.
    pub node_states: Var,
    /// Attention coefficients per GAT layer and head (empty for GIN).
    pub attention: Vec<Vec<Var>>,
    pub edges: EdgeIndex,
    /// Index of each graph's virtual node in the batched graph.
    pub offsets: Vec<usize>,
}

/// Scores a batch of graphs as one disjoint union.
pub fn forward_batch(
    tape: &mut Tape,
    vars: &ParamVars,
    config: &ModelConfig,
    graphs: &[&EncodedGraph],
    mode: Mode,
) -> Result<ForwardOutput> {
    if graphs.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let num_tables = vars.feature_embeddings.len();
    let mut offsets = Vec::with_capacity(graphs.len());
    let mut total = 0usize;
    let mut edges = Vec::new();
    let mut lookups: Vec<Vec<(usize, usize)>> = Vec::new();
    for g in graphs {
        if g.num_nodes < 2 || g.features.len() + 1 != g.num_nodes {
            return Err(Error::Data(format!("graph {} is malformed", g.url)));
        }
        offsets.push(total);
        lookups.push(vec![(num_tables, 0)]);
        for f in &g.features {
            if f.len() != num_tables {
                return Err(Error::ShapeMismatch {
                    op: "forward",
                    detail: format!("{} feature indices for {num_tables} tables", f.len()),
                });
            }
            lookups.push(f.iter().copied().enumerate().collect());
        }
        edges.extend(g.edges.iter().map(|&(s, d)| (s + total, d + total)));
        total += g.num_nodes;
    }
    let edges = EdgeIndex::new(total, &edges);

    let mut tables = vars.feature_embeddings.clone();
    tables.push(vars.virtual_init);
    let mut h = tape.embedding_sum(&tables, lookups)?;

    let mut rng = match mode {
        Mode::Train { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        Mode::Eval => None,
    };
    let mut attention = Vec::new();
    for (k, layer) in vars.layers.iter().enumerate() {
        if k > 0 {
            if let Some(rng) = rng.as_mut() {
                h = tape.dropout(h, config.dropout, true, rng)?;
            }
        }
        h = match layer {
            LayerVars::Gat(heads) => {
                let (out, alphas) = gat_layer(tape, h, &edges, heads, config.leaky_slope)?;
                attention.push(alphas);
                out
            }
            LayerVars::Gin { eps, mlp0, mlp1 } => gin_layer(tape, h, &edges, *eps, *mlp0, *mlp1)?,
        };
    }

    let mut pooled = match config.readout {
        Readout::Virtual => tape.gather_rows(
            h,
            offsets.iter().map(|o| o + VIRTUAL_NODE).collect::<Vec<_>>(),
        )?,
        Readout::MeanPool => {
            let mut rows = Vec::with_capacity(total - graphs.len());
            let mut seg = Vec::with_capacity(total - graphs.len());
            for (i, (g, &o)) in graphs.iter().zip(&offsets).enumerate() {
                rows.extend(o + 1..o + g.num_nodes);
                seg.extend(std::iter::repeat_n(i, g.num_nodes - 1));
            }
            let content = tape.gather_rows(h, rows)?;
            tape.segment_mean(content, seg, graphs.len())?
        }
    };
    if config.use_category {
        let table = vars
            .category_embeddings
            .ok_or_else(|| Error::Config("use_category set but no category embeddings".into()))?;
        let rows = tape.value(table).rows();
        let idx: Rc<[usize]> = graphs
            .iter()
            .map(|g| if g.category < rows { g.category } else { 0 })
            .collect();
        let cat = tape.gather_rows(table, idx)?;
        pooled = tape.add(pooled, cat)?;
    }
    let logit = tape.linear(pooled, vars.readout_w)?;
    let logit = tape.add_row(logit, vars.readout_b)?;
    let scores = match config.head {
        Head::Sigmoid => tape.sigmoid(logit)?,
        Head::Linear => logit,
    };
    Ok(ForwardOutput {
        scores,
        node_states: h,
        attention,
        edges,
        offsets,
    })
}

const SCORE_CHUNK: usize = 32;

/// Eval-mode scores for every graph, in input order. Work is spread over
/// `threads` workers; results do not depend on the thread count.
pub fn score_graphs(
    params: &ModelParams,
    config: &ModelConfig,
    graphs: &[EncodedGraph],
    threads: usize,
) -> Result<Vec<f64>> {
    let chunks: Vec<&[EncodedGraph]> = graphs.chunks(SCORE_CHUNK).collect();
    let score_chunk = |chunk: &[EncodedGraph]| -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = ParamVars::register(&mut tape, params, false);
        let refs: Vec<&EncodedGraph> = chunk.iter().collect();
        let out = forward_batch(&mut tape, &vars, config, &refs, Mode::Eval)?;
        Ok(tape.value(out.scores).data().to_vec())
    };
    let threads = threads.max(1).min(chunks.len().max(1));
    let mut results: Vec<Option<Result<Vec<f64>>>> = (0..chunks.len()).map(|_| None).collect();
    if threads == 1 {
        for (slot, chunk) in results.iter_mut().zip(&chunks) {
            *slot = Some(score_chunk(chunk));
        }
    } else {
        let per = chunks.len().div_ceil(threads);
        std::thread::scope(|s| {
            for (slots, work) in results.chunks_mut(per).zip(chunks.chunks(per)) {
                let f = &score_chunk;
                s.spawn(move || {
                    for (slot, chunk) in slots.iter_mut().zip(work) {
                        *slot = Some(f(chunk));
                    }
                });
            }
        });
    }
    let mut scores = Vec::with_capacity(graphs.len());
    for r in results {
        scores.extend(r.expect("every chunk scored")?);
    }
    Ok(scores)
}
