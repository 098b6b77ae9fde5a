//! Layout graph construction: a depth-first walk over the DOM tree that
//! records parent-child edges plus a global virtual node wired to every node.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dom::{parse_length, DomNode, DomTree, NodeType};
use crate::error::{Error, Result};
use crate::features::{RawFeatures, RawValue};

/// Index of the virtual node in every layout graph.
pub const VIRTUAL_NODE: usize = 0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutGraph {
    pub url: String,
    pub category: String,
    /// Includes the virtual node at index 0; DOM nodes follow in DFS pre-order.
    pub num_nodes: usize,
    /// Directed pairs `(src, dst)`; symmetric, sorted, no duplicates.
    pub edges: Vec<(usize, usize)>,
    pub node_types: Vec<NodeType>,
    pub raw_features: Vec<RawFeatures>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub depth: usize,
    pub type_histogram: BTreeMap<NodeType, usize>,
}

/// Builds the layout graph of `tree`.
///
/// Node `i + 1` of the graph is the `i`-th DOM node in DFS pre-order. The walk
/// emits `(virtual, root)` and, for each child, `(virtual, child)` and
/// `(child, parent)`; the edge set is then deduplicated and symmetrized.
pub fn build_layout_graph(tree: &DomTree) -> LayoutGraph {
    let order = tree.preorder();
    let mut index_of = vec![0usize; tree.nodes.len()];
    for (i, &id) in order.iter().enumerate() {
        index_of[id] = i + 1;
    }

    let mut directed: Vec<(usize, usize)> = vec![(VIRTUAL_NODE, index_of[tree.root_id])];
    for &id in &order {
        for &child in &tree.nodes[id].children {
            directed.push((VIRTUAL_NODE, index_of[child]));
            directed.push((index_of[child], index_of[id]));
        }
    }
    let mut seen = HashSet::with_capacity(directed.len() * 2);
    let mut edges = Vec::with_capacity(directed.len() * 2);
    for (a, b) in directed {
        for e in [(a, b), (b, a)] {
            if seen.insert(e) {
                edges.push(e);
            }
        }
    }
    edges.sort_unstable();

    let mut node_types = Vec::with_capacity(order.len() + 1);
    let mut raw_features = Vec::with_capacity(order.len() + 1);
    node_types.push(NodeType::Virtual);
    raw_features.push(RawFeatures::new());
    for &id in &order {
        let node = &tree.nodes[id];
        node_types.push(node.node_type);
        raw_features.push(raw_features_of(node));
    }

    LayoutGraph {
        url: tree.source_url.clone(),
        category: tree.category.clone(),
        num_nodes: order.len() + 1,
        edges,
        node_types,
        raw_features,
    }
}

/// Extracts the node-level layout features from a resolved DOM node.
pub fn raw_features_of(node: &DomNode) -> RawFeatures {
    let mut f = RawFeatures::new();
    let g = node.geometry;
    f.insert("height".into(), RawValue::Num(g.height));
    f.insert("width".into(), RawValue::Num(g.width));
    f.insert("xpos".into(), RawValue::Num(g.xpos));
    f.insert("ypos".into(), RawValue::Num(g.ypos));
    f.insert("word_count".into(), RawValue::Num(node.text_length as f64));
    f.insert("tag_name".into(), RawValue::Tok(node.tag_name.clone()));

    let style = &node.style;
    let font_size = style
        .get("font-size")
        .and_then(|v| parse_length(v, 16.0))
        .filter(|v| *v > 0.0);
    let tok = |key: &str| {
        style
            .get(key)
            .map(|v| RawValue::Tok(v.trim().to_ascii_lowercase()))
    };
    let num = |v: Option<f64>| v.map(RawValue::Num);

    let pairs: [(&str, Option<RawValue>); 12] = [
        ("position", tok("position")),
        ("font_size", num(font_size)),
        ("font_style", tok("font-style")),
        (
            "line_height",
            num(line_height(style.get("line-height"), font_size)),
        ),
        ("font_weight", tok("font-weight")),
        ("text_align", tok("text-align")),
        (
            "border",
            num(first_length(style, &["border-width", "border"])),
        ),
        ("padding", num(first_length(style, &["padding"]))),
        ("margin", num(first_length(style, &["margin"]))),
        ("visibility", tok("visibility")),
        ("display", tok("display")),
        (
            "outline_width",
            num(first_length(style, &["outline-width", "outline"])),
        ),
    ];
    for (k, v) in pairs {
        if let Some(v) = v {
            f.insert(k.into(), v);
        }
    }
    if let Some(s) = outline_style(style) {
        f.insert("outline_style".into(), RawValue::Tok(s));
    }
    f
}

const BORDER_STYLES: [&str; 10] = [
    "none", "hidden", "dotted", "dashed", "solid", "double", "groove", "ridge", "inset", "outset",
];

fn first_length(style: &BTreeMap<String, String>, keys: &[&str]) -> Option<f64> {
    keys.iter().find_map(|k| {
        style
            .get(*k)?
            .split_whitespace()
            .find_map(|tok| parse_length(tok, 16.0))
            .map(|v| v.max(0.0))
    })
}

fn line_height(value: Option<&String>, font_size: Option<f64>) -> Option<f64> {
    let v = value?.trim();
    let fs = font_size.unwrap_or(16.0);
    match v.parse::<f64>() {
        Ok(ratio) if ratio.is_finite() => Some(ratio * fs),
        _ => parse_length(v, fs),
    }
}

fn outline_style(style: &BTreeMap<String, String>) -> Option<String> {
    if let Some(v) = style.get("outline-style") {
        return Some(v.trim().to_ascii_lowercase());
    }
    style.get("outline")?.split_whitespace().find_map(|t| {
        let t = t.to_ascii_lowercase();
        BORDER_STYLES.contains(&t.as_str()).then_some(t)
    })
}

pub fn graph_stats(g: &LayoutGraph) -> GraphStats {
    let mut type_histogram = BTreeMap::new();
    for t in &g.node_types {
        *type_histogram.entry(*t).or_insert(0) += 1;
    }
    GraphStats {
        num_nodes: g.num_nodes,
        num_edges: g.edges.len(),
        depth: g.tree_depth(),
        type_histogram,
    }
}

impl LayoutGraph {
    /// Depth of the originating DOM tree, recovered from the non-virtual edges.
    pub fn tree_depth(&self) -> usize {
        if self.num_nodes < 2 {
            return 0;
        }
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(s, d) in &self.edges {
            if s != VIRTUAL_NODE && d != VIRTUAL_NODE {
                adj[s].push(d);
            }
        }
        let mut depth = vec![usize::MAX; self.num_nodes];
        depth[1] = 0;
        let mut queue = std::collections::VecDeque::from([1usize]);
        let mut best = 0;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if depth[v] == usize::MAX {
                    depth[v] = depth[u] + 1;
                    best = best.max(depth[v]);
                    queue.push_back(v);
                }
            }
        }
        best
    }

    /// Source and destination index lists of the edge set.
    pub fn edge_lists(&self) -> (Vec<usize>, Vec<usize>) {
        self.edges.iter().copied().unzip()
    }

    /// Number of undirected edges touching the virtual node.
    pub fn virtual_degree(&self) -> usize {
        self.edges
            .iter()
            .filter(|(s, _)| *s == VIRTUAL_NODE)
            .count()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Data(format!("graph {}: {m}", self.url)));
        if self.num_nodes < 2 {
            return bad("needs the virtual node and at least one page node".into());
        }
        if self.node_types.len() != self.num_nodes || self.raw_features.len() != self.num_nodes {
            return bad("per-node arrays disagree with num_nodes".into());
        }
        if self.node_types[VIRTUAL_NODE] != NodeType::Virtual {
            return bad("node 0 must be the virtual node".into());
        }
        let set: HashSet<_> = self.edges.iter().copied().collect();
        for &(s, d) in &self.edges {
            if s >= self.num_nodes || d >= self.num_nodes {
                return bad(format!("edge ({s},{d}) out of range"));
            }
            if !set.contains(&(d, s)) {
                return bad(format!("edge ({s},{d}) has no reverse"));
            }
        }
        let mut incoming = vec![false; self.num_nodes];
        for &(_, d) in &self.edges {
            incoming[d] = true;
        }
        if let Some(n) = incoming.iter().position(|x| !x) {
            return bad(format!("node {n} has no incoming edge"));
        }
        Ok(())
    }
}

pub fn write_graphs<'a, W: Write>(
    graphs: impl IntoIterator<Item = &'a LayoutGraph>,
    mut out: W,
) -> Result<()> {
    for g in graphs {
        serde_json::to_writer(&mut out, g)?;
        out.write_all(b"\n")
            .map_err(|e| Error::io("<graph output>", e))?;
    }
    Ok(())
}

pub fn read_graphs<R: BufRead>(reader: R) -> Result<Vec<LayoutGraph>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<graph input>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let g: LayoutGraph = serde_json::from_str(&line).map_err(|e| Error::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        g.validate().map_err(|e| Error::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(g);
    }
    Ok(out)
}

pub fn load_graphs(path: impl AsRef<Path>) -> Result<Vec<LayoutGraph>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_graphs(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::parse_html;

    fn undirected(g: &LayoutGraph) -> HashSet<(usize, usize)> {
        g.edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect()
    }

    #[test]
    fn root_with_two_children() {
        let tree = parse_html("<div><p></p><p></p></div>").unwrap();
        let g = build_layout_graph(&tree);
        assert_eq!(g.num_nodes, 4);
        // (v,root),(v,c1),(v,c2),(c1,root),(c2,root)
        let want: HashSet<_> = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3)]
            .into_iter()
            .collect();
        assert_eq!(undirected(&g), want);
        assert_eq!(g.edges.len(), 10);
        let stats = graph_stats(&g);
        assert_eq!((stats.num_nodes, stats.num_edges, stats.depth), (4, 10, 1));
        assert_eq!(stats.type_histogram[&NodeType::Text], 2);
        g.validate().unwrap();
    }

    #[test]
    fn single_node_tree() {
        let g = build_layout_graph(&parse_html("<div>").unwrap());
        assert_eq!(g.num_nodes, 2);
        assert_eq!(g.edges, vec![(0, 1), (1, 0)]);
        assert_eq!(graph_stats(&g).depth, 0);
    }

    #[test]
    fn chains_match_edge_enumeration() {
        for d in 1..=10 {
            let src = "<div>".repeat(d);
            let g = build_layout_graph(&parse_html(&src).unwrap());
            assert_eq!(g.num_nodes, d + 1);
            // brute force: d virtual edges and d-1 parent-child edges
            let mut want = HashSet::new();
            for i in 1..=d {
                want.insert((0, i));
                if i > 1 {
                    want.insert((i - 1, i));
                }
            }
            assert_eq!(undirected(&g), want);
            assert_eq!(undirected(&g).len(), d + d - 1);
            assert_eq!(g.virtual_degree(), g.num_nodes - 1);
            assert_eq!(g.tree_depth(), d - 1);
        }
    }

    #[test]
    fn raw_features_from_style() {
        let tree = parse_html(
            r#"<p style="border:2px solid red;padding:4px 8px;line-height:1.5;font-size:10px;outline:dashed 3px">a b c</p>"#,
        )
        .unwrap();
        let f = raw_features_of(&tree.nodes[0]);
        assert_eq!(f["border"], RawValue::Num(2.0));
        assert_eq!(f["padding"], RawValue::Num(4.0));
        assert_eq!(f["line_height"], RawValue::Num(15.0));
        assert_eq!(f["outline_style"], RawValue::Tok("dashed".into()));
        assert_eq!(f["outline_width"], RawValue::Num(3.0));
        assert_eq!(f["word_count"], RawValue::Num(3.0));
        assert_eq!(f["display"], RawValue::Tok("block".into()));
        assert!(!f.contains_key("margin"));
    }

    #[test]
    fn jsonl_round_trip() {
        let g = build_layout_graph(&parse_html("<div><img><span>x y</span></div>").unwrap());
        let mut buf = Vec::new();
        write_graphs([&g], &mut buf).unwrap();
        let back = read_graphs(&buf[..]).unwrap();
        assert_eq!(back, vec![g]);
    }
}
