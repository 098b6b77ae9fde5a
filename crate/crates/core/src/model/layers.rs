use std::rc::Rc;

use crate::error::Result;
use crate::tensor::{Tape, Var};

/// Directed edges `src -> dst` of a (possibly batched) graph. Messages flow
/// from `src` into `dst`, so `dst` identifies the softmax segment.
#[derive(Clone, Debug)]
pub struct EdgeIndex {
    pub num_nodes: usize,
    pub src: Rc<[usize]>,
    pub dst: Rc<[usize]>,
}

impl EdgeIndex {
    pub fn new(num_nodes: usize, edges: &[(usize, usize)]) -> Self {
        EdgeIndex {
            num_nodes,
            src: edges.iter().map(|e| e.0).collect(),
            dst: edges.iter().map(|e| e.1).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

/// One attention layer. `heads` holds `[W1, W2, W3]` per head; head outputs
/// are averaged before the ELU. Returns the new node states together with the
/// per-head attention coefficients (one per edge).
///
/// For node `n` with incoming neighbours `m`:
/// `e_nm = LeakyReLU(W3 · [W2 h_n ‖ W2 h_m])`, `α_nm = softmax_m(e_nm)`,
/// `h'_n = ELU(Σ_m α_nm W1 h_m)`.
pub fn gat_layer(
    tape: &mut Tape,
    h: Var,
    edges: &EdgeIndex,
    heads: &[[Var; 3]],
    slope: f64,
) -> Result<(Var, Vec<Var>)> {
    let n = edges.num_nodes;
    let mut agg: Option<Var> = None;
    let mut alphas = Vec::with_capacity(heads.len());
    for &[w1, w2, w3] in heads {
        let g = tape.linear(h, w2)?;
        let g_dst = tape.gather_rows(g, edges.dst.clone())?;
        let g_src = tape.gather_rows(g, edges.src.clone())?;
        let pair = tape.concat_cols(g_dst, g_src)?;
        let logits = tape.linear(pair, w3)?;
        let logits = tape.leaky_relu(logits, slope)?;
        let alpha = tape.segment_softmax(logits, edges.dst.clone(), n)?;
        let msg = tape.linear(h, w1)?;
        let msg = tape.gather_rows(msg, edges.src.clone())?;
        let msg = tape.mul_col(msg, alpha)?;
        let sum = tape.segment_sum(msg, edges.dst.clone(), n)?;
        agg = Some(match agg {
            None => sum,
            Some(acc) => tape.add(acc, sum)?,
        });
        alphas.push(alpha);
    }
    let mut out = agg.expect("at least one head");
    if heads.len() > 1 {
        out = tape.scale(out, 1.0 / heads.len() as f64)?;
    }
    Ok((tape.elu(out)?, alphas))
}

/// GIN layer: `h'_n = MLP((1 + ε) h_n + Σ_m h_m)` with a two-layer MLP
/// (no biases) and ELU after each linear map.
pub fn gin_layer(
    tape: &mut Tape,
    h: Var,
    edges: &EdgeIndex,
    eps: Var,
    mlp0: Var,
    mlp1: Var,
) -> Result<Var> {
    let neigh = tape.gather_rows(h, edges.src.clone())?;
    let neigh = tape.segment_sum(neigh, edges.dst.clone(), edges.num_nodes)?;
    let center = tape.scale_one_plus(h, eps)?;
    let z = tape.add(center, neigh)?;
    let z = tape.linear(z, mlp0)?;
    let z = tape.elu(z)?;
    let z = tape.linear(z, mlp1)?;
    tape.elu(z)
}
