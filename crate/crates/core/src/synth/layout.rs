//! The generator's own geometry computation.
//!
//! This is a second, self-contained implementation of the flow model used by
//! the ingest path, written against the generator's typed node tree. Its
//! output is recorded in the manifest and serves as the reference that
//! ingested geometry is checked against.

use super::GenNode;
use crate::dom::Geometry;

const WORD_EM: f64 = 3.0;
const LINE_RATIO: f64 = 1.2;

fn is_replaced(tag: &str) -> bool {
    matches!(tag, "img" | "video" | "input")
}

fn is_block(node: &GenNode) -> bool {
    matches!(node.decl.display, "block" | "list-item")
}

fn out_of_flow(node: &GenNode) -> bool {
    matches!(node.decl.position, Some("absolute") | Some("fixed"))
}

fn font_of(node: &GenNode, inherited: f64) -> f64 {
    node.decl.font_size.unwrap_or(inherited)
}

fn line_of(node: &GenNode, fs: f64) -> f64 {
    node.decl.line_height.map_or(LINE_RATIO * fs, |r| r * fs)
}

/// Intrinsic content width: explicit width, or text plus in-flow children laid in one row.
fn preferred(nodes: &[GenNode], id: usize, fs: f64) -> f64 {
    let n = &nodes[id];
    if let Some(w) = n.decl.width {
        return w;
    }
    let own = f64::from(n.words) * WORD_EM * fs;
    let kids: f64 = n
        .children
        .iter()
        .filter(|&&c| !out_of_flow(&nodes[c]))
        .map(|&c| preferred(nodes, c, font_of(&nodes[c], fs)))
        .sum();
    own + kids
}

fn width_in(nodes: &[GenNode], id: usize, fs: f64, avail: f64) -> f64 {
    let n = &nodes[id];
    match n.decl.width {
        Some(w) => w,
        None if is_block(n) && !is_replaced(n.tag) => avail,
        None => preferred(nodes, id, fs).min(avail),
    }
}

pub(super) fn compute(nodes: &[GenNode], viewport_width: f64) -> Vec<Geometry> {
    let mut out = vec![Geometry::default(); nodes.len()];
    place(nodes, &mut out, 0, 0.0, 0.0, viewport_width, 16.0);
    out
}

fn place(
    nodes: &[GenNode],
    out: &mut [Geometry],
    id: usize,
    x: f64,
    y: f64,
    avail: f64,
    inherited_fs: f64,
) -> (f64, f64) {
    let n = &nodes[id];
    let fs = font_of(n, inherited_fs);
    let w = width_in(nodes, id, fs, avail);
    let text_h = if n.words == 0 {
        0.0
    } else {
        let lines = if w > 0.0 {
            (f64::from(n.words) * WORD_EM * fs / w).ceil().max(1.0)
        } else {
            f64::from(n.words)
        };
        lines * line_of(n, fs)
    };

    let mut cy = y + text_h;
    let mut cx = x;
    let mut row = 0.0f64;
    for &c in &n.children {
        let child = &nodes[c];
        let cfs = font_of(child, fs);
        if out_of_flow(child) {
            let left = child.decl.left.unwrap_or(0.0);
            let top = child.decl.top.unwrap_or(0.0);
            place(
                nodes,
                out,
                c,
                (x + left).max(0.0),
                (y + top).max(0.0),
                w,
                fs,
            );
        } else if is_block(child) {
            if cx > x || row > 0.0 {
                cy += row;
                cx = x;
                row = 0.0;
            }
            let (_, ch) = place(nodes, out, c, x, cy, w, fs);
            cy += ch;
        } else {
            let want = width_in(nodes, c, cfs, w);
            if cx > x && cx + want > x + w {
                cy += row;
                cx = x;
                row = 0.0;
            }
            let (cw, ch) = place(nodes, out, c, cx, cy, (x + w - cx).max(0.0), fs);
            cx += cw;
            row = row.max(ch);
        }
    }
    cy += row;
    let h = n.decl.height.unwrap_or(cy - y);
    out[id] = Geometry {
        height: h,
        width: w,
        xpos: x,
        ypos: y,
    };
    (w, h)
}
