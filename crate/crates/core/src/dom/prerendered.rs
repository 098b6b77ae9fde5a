//! Pre-rendered JSONL node records.
//!
//! Line 1 is a document header `{"url": .., "category": ..}`; every further
//! line is one node:
//! `{"node_id":0,"parent_id":null,"tag_name":"div","style":{..},"geometry":{..},"text_length":3}`.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{tags, DomNode, DomTree, Geometry};
use crate::error::{Error, Result};

#[derive(Serialize)]
struct Header<'a> {
    url: &'a str,
    category: &'a str,
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    node_id: usize,
    parent_id: Option<usize>,
    tag_name: String,
    style: BTreeMap<String, String>,
    geometry: Geometry,
    text_length: u32,
}

const REQUIRED: [&str; 6] = [
    "node_id",
    "parent_id",
    "tag_name",
    "style",
    "geometry",
    "text_length",
];

pub fn write_prerendered<W: Write>(tree: &DomTree, mut out: W) -> Result<()> {
    let header = Header {
        url: &tree.source_url,
        category: &tree.category,
    };
    let io = |e| Error::io("<prerendered output>", e);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n").map_err(io)?;
    for node in &tree.nodes {
        let rec = NodeRecord {
            node_id: node.node_id,
            parent_id: node.parent_id,
            tag_name: node.tag_name.clone(),
            style: node.style.clone(),
            geometry: node.geometry,
            text_length: node.text_length,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n").map_err(io)?;
    }
    Ok(())
}

pub fn load_prerendered(path: impl AsRef<Path>) -> Result<DomTree> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_prerendered(BufReader::new(file))
}

pub fn read_prerendered<R: BufRead>(reader: R) -> Result<DomTree> {
    let schema = |line: usize, message: String| Error::Schema { line, message };
    let mut header: Option<(String, String)> = None;
    let mut records: Vec<(usize, NodeRecord)> = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io("<prerendered input>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line)
            .map_err(|e| schema(lineno, format!("invalid json: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| schema(lineno, "expected a json object".into()))?;
        if header.is_none() {
            let field = |k: &str| {
                obj.get(k)
                    .and_then(Value::as_str)
                    .map(str::to_string)
                    .ok_or_else(|| schema(lineno, format!("header missing string field `{k}`")))
            };
            header = Some((field("url")?, field("category")?));
            continue;
        }
        if let Some(missing) = REQUIRED.iter().find(|k| !obj.contains_key(**k)) {
            return Err(schema(
                lineno,
                format!("missing required field `{missing}`"),
            ));
        }
        let rec: NodeRecord =
            serde_json::from_value(value).map_err(|e| schema(lineno, e.to_string()))?;
        let g = rec.geometry;
        if [g.height, g.width, g.xpos, g.ypos]
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(schema(
                lineno,
                "geometry values must be finite and >= 0".into(),
            ));
        }
        records.push((lineno, rec));
    }

    let (url, category) = header.ok_or_else(|| schema(1, "missing document header".into()))?;
    if records.is_empty() {
        return Err(Error::EmptyDocument);
    }
    records.sort_by_key(|(_, r)| r.node_id);
    let n = records.len();
    for (pos, (lineno, rec)) in records.iter().enumerate() {
        if rec.node_id != pos {
            return Err(schema(
                *lineno,
                format!("node ids must be contiguous from 0, found {}", rec.node_id),
            ));
        }
        if let Some(p) = rec.parent_id {
            if p >= n || p == rec.node_id {
                return Err(schema(*lineno, format!("parent id {p} is invalid")));
            }
        }
    }
    let roots: Vec<usize> = records
        .iter()
        .filter(|(_, r)| r.parent_id.is_none())
        .map(|(_, r)| r.node_id)
        .collect();
    if roots.len() != 1 {
        let line = records.last().map_or(1, |(l, _)| *l);
        return Err(schema(
            line,
            format!("expected exactly one root, found {}", roots.len()),
        ));
    }

    let mut nodes: Vec<DomNode> = records
        .into_iter()
        .map(|(_, r)| DomNode {
            node_id: r.node_id,
            parent_id: r.parent_id,
            node_type: tags::node_type_for(&r.tag_name),
            tag_name: r.tag_name,
            style: r.style,
            geometry: r.geometry,
            text_length: r.text_length,
            children: Vec::new(),
        })
        .collect();
    for id in 0..n {
        if let Some(p) = nodes[id].parent_id {
            nodes[p].children.push(id);
        }
    }
    let tree = DomTree {
        nodes,
        root_id: roots[0],
        source_url: url,
        category,
    };
    tree.validate().map_err(|m| schema(1, m))?;
    Ok(tree)
}
