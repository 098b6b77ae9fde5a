//! HTML ingestion: an error-recovering tag-soup parser, a fixed tag table with
//! per-tag default styles, a flow-layout geometry heuristic, and the
//! pre-rendered JSONL node format.

mod layout;
mod parser;
mod prerendered;
pub mod tags;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use layout::{estimate_geometry, parse_length, Viewport};
pub use parser::{parse_html, parse_style_attr};
pub use prerendered::{load_prerendered, read_prerendered, write_prerendered};

/// Coarse role of a node, derived from its tag name through [`tags::node_type_for`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeType {
    Text,
    Image,
    Video,
    Container,
    Interactive,
    Other,
    /// Reserved for the synthetic hub node of a layout graph; never produced by ingestion.
    Virtual,
}

impl NodeType {
    pub const ALL: [NodeType; 7] = [
        NodeType::Text,
        NodeType::Image,
        NodeType::Video,
        NodeType::Container,
        NodeType::Interactive,
        NodeType::Other,
        NodeType::Virtual,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeType::Text => "text",
            NodeType::Image => "image",
            NodeType::Video => "video",
            NodeType::Container => "container",
            NodeType::Interactive => "interactive",
            NodeType::Other => "other",
            NodeType::Virtual => "virtual",
        }
    }
}

/// Absolute page-space box of a node, in CSS pixels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub height: f64,
    pub width: f64,
    pub xpos: f64,
    pub ypos: f64,
}

impl Geometry {
    pub fn contains(&self, other: &Geometry, tol: f64) -> bool {
        other.xpos + tol >= self.xpos
            && other.ypos + tol >= self.ypos
            && other.xpos + other.width <= self.xpos + self.width + tol
            && other.ypos + other.height <= self.ypos + self.height + tol
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomNode {
    pub node_id: usize,
    pub parent_id: Option<usize>,
    pub tag_name: String,
    pub node_type: NodeType,
    /// Resolved style: the tag's default sheet overlaid with the inline `style` attribute.
    pub style: BTreeMap<String, String>,
    pub geometry: Geometry,
    /// Words of text directly inside this element.
    pub text_length: u32,
    pub children: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomTree {
    pub nodes: Vec<DomNode>,
    pub root_id: usize,
    pub source_url: String,
    pub category: String,
}

impl DomTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> &DomNode {
        &self.nodes[self.root_id]
    }

    pub fn total_words(&self) -> u64 {
        self.nodes.iter().map(|n| n.text_length as u64).sum()
    }

    /// Length in edges of the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        let mut best = 0;
        // node ids are assigned in pre-order, so parents precede children
        for id in self.preorder() {
            for &c in &self.nodes[id].children {
                depth[c] = depth[id] + 1;
                best = best.max(depth[c]);
            }
        }
        best
    }

    /// Node ids in depth-first pre-order starting from the root.
    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root_id];
        while let Some(id) = stack.pop() {
            out.push(id);
            for &c in self.nodes[id].children.iter().rev() {
                stack.push(c);
            }
        }
        out
    }

    /// Checks the structural invariants: contiguous ids, one root, every
    /// non-root node has exactly one parent and is reachable from the root.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.nodes.len();
        if n == 0 {
            return Err("tree has no nodes".into());
        }
        if self.root_id >= n {
            return Err(format!("root id {} out of range", self.root_id));
        }
        let mut parent_count = vec![0usize; n];
        for (i, node) in self.nodes.iter().enumerate() {
            if node.node_id != i {
                return Err(format!("node at position {i} has id {}", node.node_id));
            }
            for &c in &node.children {
                if c >= n {
                    return Err(format!("child id {c} out of range"));
                }
                if self.nodes[c].parent_id != Some(i) {
                    return Err(format!("child {c} does not point back to parent {i}"));
                }
                parent_count[c] += 1;
            }
            let g = node.geometry;
            for v in [g.height, g.width, g.xpos, g.ypos] {
                if !v.is_finite() || v < 0.0 {
                    return Err(format!("node {i} has invalid geometry {g:?}"));
                }
            }
        }
        for (i, &count) in parent_count.iter().enumerate() {
            let expected = usize::from(i != self.root_id);
            if count != expected {
                return Err(format!("node {i} has {count} parents"));
            }
        }
        if self.preorder().len() != n {
            return Err("not every node is reachable from the root".into());
        }
        Ok(())
    }
}
