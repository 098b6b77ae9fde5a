use std::collections::BTreeMap;

use super::{tags, DomNode, DomTree, Geometry};
use crate::error::{Error, Result};

/// Parses HTML source into a [`DomTree`].
///
/// The parser is a forgiving tag-soup reader: unmatched end tags are ignored,
/// unclosed elements are closed at end of input, a handful of implied-end rules
/// (`p`, `li`, `option`, table rows and cells) are honoured, and comments,
/// doctype/processing instructions and `script`/`style` blocks are skipped.
/// Elements that appear after the first root closes are adopted by the root.
///
/// Geometry is left zeroed; run [`super::estimate_geometry`] afterwards.
pub fn parse_html(source: &str) -> Result<DomTree> {
    let mut builder = TreeBuilder::default();
    let bytes = source.as_bytes();
    let mut i = 0;
    let mut text_start = 0;

    while i < bytes.len() {
        if bytes[i] != b'<' {
            i += 1;
            continue;
        }
        let rest = &source[i..];
        let consumed = if let Some(body) = rest.strip_prefix("<!--") {
            Some(match body.find("-->") {
                Some(end) => 4 + end + 3,
                None => rest.len(),
            })
        } else if rest.starts_with("<!") || rest.starts_with("<?") {
            Some(rest.find('>').map_or(rest.len(), |e| e + 1))
        } else if let Some(closing) = rest.strip_prefix("</") {
            match read_name(closing) {
                Some(name) => {
                    let len = rest.find('>').map_or(rest.len(), |e| e + 1);
                    builder.text(&source[text_start..i]);
                    builder.close(&name);
                    text_start = i + len;
                    i += len;
                    continue;
                }
                None => None,
            }
        } else {
            match read_name(&rest[1..]) {
                Some(name) => {
                    let (attrs, len, self_closing) = read_attributes(rest, 1 + name.len());
                    builder.text(&source[text_start..i]);
                    i += len;
                    if tags::is_skipped(&name) {
                        if !self_closing {
                            i += skip_raw_text(&source[i..], &name);
                        }
                    } else {
                        builder.open(&name, &attrs, self_closing || tags::is_void(&name));
                    }
                    text_start = i;
                    continue;
                }
                None => None,
            }
        };
        match consumed {
            Some(len) => {
                builder.text(&source[text_start..i]);
                i += len;
                text_start = i;
            }
            // a stray '<' is ordinary text
            None => i += 1,
        }
    }
    builder.text(&source[text_start..]);
    builder.finish()
}

/// Splits an inline `style` attribute into lower-cased property names and trimmed values.
pub fn parse_style_attr(style: &str) -> BTreeMap<String, String> {
    style
        .split(';')
        .filter_map(|decl| {
            let (prop, value) = decl.split_once(':')?;
            let prop = prop.trim().to_ascii_lowercase();
            let value = value.trim();
            if prop.is_empty() || value.is_empty() {
                return None;
            }
            Some((prop, value.to_string()))
        })
        .collect()
}

fn read_name(s: &str) -> Option<String> {
    let first = s.chars().next()?;
    if !first.is_ascii_alphabetic() {
        return None;
    }
    let end = s
        .find(|c: char| !(c.is_ascii_alphanumeric() || c == '-' || c == ':' || c == '_'))
        .unwrap_or(s.len());
    Some(s[..end].to_ascii_lowercase())
}

/// Reads attributes after the tag name. Returns the attributes, the total
/// length of the tag including `>`, and whether it ended in `/>`.
fn read_attributes(tag: &str, start: usize) -> (Vec<(String, String)>, usize, bool) {
    let b = tag.as_bytes();
    let mut attrs = Vec::new();
    let mut i = start;
    let mut self_closing = false;
    loop {
        while i < b.len() && b[i].is_ascii_whitespace() {
            i += 1;
        }
        if i >= b.len() {
            return (attrs, b.len(), self_closing);
        }
        match b[i] {
            b'>' => return (attrs, i + 1, self_closing),
            b'/' => {
                self_closing = true;
                i += 1;
                continue;
            }
            _ => {}
        }
        self_closing = false;
        let name_start = i;
        while i < b.len() && !b[i].is_ascii_whitespace() && !matches!(b[i], b'=' | b'>' | b'/') {
            i += 1;
        }
        let name = tag[name_start..i].to_ascii_lowercase();
        while i < b.len() && b[i].is_ascii_whitespace() {
            i += 1;
        }
        let mut value = String::new();
        if i < b.len() && b[i] == b'=' {
            i += 1;
            while i < b.len() && b[i].is_ascii_whitespace() {
                i += 1;
            }
            if i < b.len() && (b[i] == b'"' || b[i] == b'\'') {
                let quote = b[i];
                let v_start = i + 1;
                let v_end = b[v_start..]
                    .iter()
                    .position(|&c| c == quote)
                    .map_or(b.len(), |p| v_start + p);
                value = tag[v_start..v_end].to_string();
                i = (v_end + 1).min(b.len());
            } else {
                let v_start = i;
                while i < b.len() && !b[i].is_ascii_whitespace() && b[i] != b'>' {
                    i += 1;
                }
                value = tag[v_start..i].to_string();
            }
        }
        if !name.is_empty() {
            attrs.push((name, value));
        } else if i == name_start {
            // unparseable byte; step over it to guarantee progress
            i += 1;
        }
    }
}

fn skip_raw_text(s: &str, name: &str) -> usize {
    let lower = s.to_ascii_lowercase();
    let needle = format!("</{name}");
    match lower.find(&needle) {
        Some(pos) => pos + s[pos..].find('>').map_or(s.len() - pos, |e| e + 1),
        None => s.len(),
    }
}

fn count_words(text: &str) -> u32 {
    text.split_whitespace().count() as u32
}

/// Deeper elements are flattened into their ancestor at this depth.
const MAX_NESTING: usize = 256;

#[derive(Default)]
struct TreeBuilder {
    nodes: Vec<DomNode>,
    stack: Vec<usize>,
}

impl TreeBuilder {
    fn text(&mut self, text: &str) {
        if let Some(&top) = self.stack.last() {
            self.nodes[top].text_length += count_words(text);
        }
    }

    fn open(&mut self, name: &str, attrs: &[(String, String)], is_void: bool) {
        self.apply_implied_end(name);
        let id = self.nodes.len();
        let parent = match self.stack.last() {
            Some(&p) => Some(p),
            None if id > 0 => Some(0),
            None => None,
        };

        let mut style: BTreeMap<String, String> = BTreeMap::new();
        style.insert("display".into(), tags::default_display(name).into());
        for (k, v) in tags::default_style(name) {
            style.insert((*k).into(), (*v).into());
        }
        for (k, v) in attrs {
            if k == "style" {
                style.extend(parse_style_attr(v));
            }
        }

        self.nodes.push(DomNode {
            node_id: id,
            parent_id: parent,
            tag_name: name.to_string(),
            node_type: tags::node_type_for(name),
            style,
            geometry: Geometry::default(),
            text_length: 0,
            children: Vec::new(),
        });
        if let Some(p) = parent {
            self.nodes[p].children.push(id);
        }
        if !is_void && self.stack.len() < MAX_NESTING {
            self.stack.push(id);
        }
    }

    fn apply_implied_end(&mut self, name: &str) {
        let closes: &[&str] = match name {
            "p" | "div" | "ul" | "ol" | "table" | "section" | "article" | "header" | "footer"
            | "nav" | "aside" | "main" | "form" | "h1" | "h2" | "h3" | "h4" | "h5" | "h6"
            | "blockquote" | "pre" | "figure" | "dl" | "hr" => &["p"],
            "li" => &["li", "p"],
            "option" => &["option"],
            "tr" => &["tr", "td", "th"],
            "td" | "th" => &["td", "th"],
            "dt" | "dd" => &["dt", "dd"],
            _ => &[],
        };
        if closes.is_empty() {
            return;
        }
        // only close if the element is open within the current scope boundary
        let boundary: &[&str] = match name {
            "li" => &["ul", "ol"],
            "tr" | "td" | "th" => &["table"],
            _ => &[
                "div", "section", "article", "body", "html", "td", "th", "li",
            ],
        };
        for target in closes {
            for pos in (0..self.stack.len()).rev() {
                let tag = self.nodes[self.stack[pos]].tag_name.as_str();
                if tag == *target {
                    self.stack.truncate(pos);
                    return;
                }
                if boundary.contains(&tag) {
                    break;
                }
            }
        }
    }

    fn close(&mut self, name: &str) {
        if let Some(pos) = self
            .stack
            .iter()
            .rposition(|&id| self.nodes[id].tag_name == name)
        {
            self.stack.truncate(pos);
        }
    }

    fn finish(self) -> Result<DomTree> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyDocument);
        }
        Ok(DomTree {
            nodes: self.nodes,
            root_id: 0,
            source_url: String::new(),
            category: String::new(),
        })
    }
}
