//! Synthetic labeled webpage corpora.
//!
//! Three layout profiles stand in for human quality labels:
//! `rich` pages (headings, text paragraphs next to figures, navigation and
//! forms) are labeled 1; `thin` pages (one shallow branch, under 30 words) and
//! `chaotic` pages (overlapping absolute boxes, clashing typography) are
//! labeled 0. Every document comes with a manifest entry recording the
//! structure, geometry and raw features the generator intended, computed
//! without going through the ingest code.

mod layout;
mod split;

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dom::{DomNode, DomTree, Geometry};
use crate::error::{Error, Result};
use crate::features::{RawFeatures, RawValue};

pub use split::{split, Splits};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Rich,
    Thin,
    Chaotic,
}

impl Profile {
    pub const ALL: [Profile; 3] = [Profile::Rich, Profile::Thin, Profile::Chaotic];

    pub fn label(self) -> u8 {
        match self {
            Profile::Rich => 1,
            Profile::Thin | Profile::Chaotic => 0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Rich => "rich",
            Profile::Thin => "thin",
            Profile::Chaotic => "chaotic",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "rich" => Ok(Profile::Rich),
            "thin" => Ok(Profile::Thin),
            "chaotic" => Ok(Profile::Chaotic),
            other => Err(Error::BadSpec(format!("unknown profile `{other}`"))),
        }
    }
}

/// Parses `rich:0.3,thin:0.4,chaotic:0.3`.
pub fn parse_profile_mix(s: &str) -> Result<Vec<(Profile, f64)>> {
    let mut out = Vec::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let (name, w) = part
            .split_once(':')
            .ok_or_else(|| Error::BadSpec(format!("expected profile:weight, got `{part}`")))?;
        let w: f64 = w
            .trim()
            .parse()
            .map_err(|_| Error::BadSpec(format!("bad weight in `{part}`")))?;
        out.push((name.parse()?, w));
    }
    Ok(out)
}

const CATEGORY_NAMES: [&str; 8] = [
    "news",
    "shopping",
    "health",
    "forum",
    "reference",
    "travel",
    "finance",
    "education",
];

pub fn category_name(i: usize) -> String {
    CATEGORY_NAMES
        .get(i)
        .map_or_else(|| format!("category{i}"), |s| (*s).to_string())
}

/// Parameters of one document template.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub category: String,
    pub profile: Profile,
    /// Inclusive range for the number of top-level content units (sections for
    /// rich pages, floating boxes for chaotic pages, leaves for thin pages).
    pub size: (usize, usize),
    /// Largest font size used by chaotic pages, in px.
    pub max_font_px: f64,
    pub viewport_width: f64,
    pub seed: u64,
}

impl TemplateSpec {
    pub fn new(category: impl Into<String>, profile: Profile, seed: u64) -> Self {
        let size = match profile {
            Profile::Rich => (2, 4),
            Profile::Thin => (1, 3),
            Profile::Chaotic => (4, 9),
        };
        TemplateSpec {
            category: category.into(),
            profile,
            size,
            max_font_px: 40.0,
            viewport_width: 1280.0,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.size.0 == 0 || self.size.0 > self.size.1 {
            return Err(Error::BadSpec(format!(
                "size range {:?} is empty",
                self.size
            )));
        }
        if self.profile == Profile::Thin && self.size.1 > 3 {
            return Err(Error::BadSpec("thin pages hold at most 3 leaves".into()));
        }
        if !(self.max_font_px >= 10.0 && self.max_font_px.is_finite()) {
            return Err(Error::BadSpec("max_font_px must be at least 10".into()));
        }
        if !(self.viewport_width > 0.0 && self.viewport_width.is_finite()) {
            return Err(Error::BadSpec("viewport width must be positive".into()));
        }
        if self.category.trim().is_empty() || self.category.contains(char::is_whitespace) {
            return Err(Error::BadSpec("category must be a non-empty token".into()));
        }
        Ok(())
    }
}

/// Declared style of a generated node. Only what is set here is emitted.
#[derive(Clone, Debug, Default, PartialEq)]
pub(crate) struct Decl {
    pub display: &'static str,
    pub position: Option<&'static str>,
    pub left: Option<f64>,
    pub top: Option<f64>,
    pub width: Option<f64>,
    pub height: Option<f64>,
    pub font_size: Option<f64>,
    /// Unitless multiple of the node's font size.
    pub line_height: Option<f64>,
    pub font_style: Option<&'static str>,
    pub font_weight: Option<&'static str>,
    pub text_align: Option<&'static str>,
    pub border: Option<f64>,
    pub padding: Option<f64>,
    pub margin: Option<f64>,
    pub visibility: Option<&'static str>,
    pub outline: Option<(f64, &'static str)>,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct GenNode {
    pub tag: &'static str,
    pub decl: Decl,
    pub words: u32,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

fn px(v: f64) -> String {
    format!("{v}px")
}

impl Decl {
    fn style_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        put("display", Some(self.display.to_string()));
        put("position", self.position.map(str::to_string));
        put("left", self.left.map(px));
        put("top", self.top.map(px));
        put("width", self.width.map(px));
        put("height", self.height.map(px));
        put("font-size", self.font_size.map(px));
        put("line-height", self.line_height.map(|r| r.to_string()));
        put("font-style", self.font_style.map(str::to_string));
        put("font-weight", self.font_weight.map(str::to_string));
        put("text-align", self.text_align.map(str::to_string));
        put("border-width", self.border.map(px));
        put("padding", self.padding.map(px));
        put("margin", self.margin.map(px));
        put("visibility", self.visibility.map(str::to_string));
        put("outline-width", self.outline.map(|o| px(o.0)));
        put("outline-style", self.outline.map(|o| o.1.to_string()));
        m
    }

    /// Raw layout features implied by the declaration, following the feature
    /// definitions: lengths in px, line height relative to the node's own
    /// declared font size (16px when undeclared), tokens lower-cased.
    fn raw_features(&self, out: &mut RawFeatures) {
        let tok = |s: &str| RawValue::Tok(s.to_ascii_lowercase());
        out.insert("display".into(), tok(self.display));
        let mut num = |k: &str, v: Option<f64>| {
            if let Some(v) = v {
                out.insert(k.into(), RawValue::Num(v));
            }
        };
        num("font_size", self.font_size);
        num(
            "line_height",
            self.line_height.map(|r| r * self.font_size.unwrap_or(16.0)),
        );
        num("border", self.border);
        num("padding", self.padding);
        num("margin", self.margin);
        num("outline_width", self.outline.map(|o| o.0));
        for (k, v) in [
            ("position", self.position),
            ("font_style", self.font_style),
            ("font_weight", self.font_weight),
            ("text_align", self.text_align),
            ("visibility", self.visibility),
            ("outline_style", self.outline.map(|o| o.1)),
        ] {
            if let Some(v) = v {
                out.insert(k.into(), tok(v));
            }
        }
    }
}

const LEXICON: [&str; 48] = [
    "layout", "quality", "river", "garden", "market", "signal", "window", "paper", "orbit",
    "canvas", "thread", "harbor", "lantern", "meadow", "circuit", "galaxy", "pixel", "summit",
    "forest", "violet", "engine", "silver", "anchor", "breeze", "cobalt", "delta", "ember",
    "falcon", "glacier", "horizon", "island", "jungle", "kernel", "lagoon", "marble", "nectar",
    "oasis", "prism", "quartz", "raven", "saddle", "timber", "umbra", "valley", "willow", "xenon",
    "yonder", "zephyr",
];

struct Builder<'a> {
    nodes: Vec<GenNode>,
    rng: &'a mut ChaCha8Rng,
}

impl Builder<'_> {
    fn add(&mut self, parent: Option<usize>, tag: &'static str, decl: Decl, words: u32) -> usize {
        let id = self.nodes.len();
        self.nodes.push(GenNode {
            tag,
            decl,
            words,
            parent,
            children: Vec::new(),
        });
        if let Some(p) = parent {
            self.nodes[p].children.push(id);
        }
        id
    }

    fn block(&mut self, parent: usize, tag: &'static str, words: u32) -> usize {
        self.add(
            Some(parent),
            tag,
            Decl {
                display: "block",
                ..Decl::default()
            },
            words,
        )
    }

    fn range(&mut self, lo: u32, hi: u32) -> u32 {
        self.rng.gen_range(lo..=hi)
    }

    fn heading(&mut self, parent: usize, tag: &'static str, font: f64, words: u32) -> usize {
        let decl = Decl {
            display: "block",
            font_size: Some(font),
            font_weight: Some("bold"),
            margin: Some(8.0),
            ..Decl::default()
        };
        self.add(Some(parent), tag, decl, words)
    }

    fn link(&mut self, parent: usize, words: u32) -> usize {
        let decl = Decl {
            display: "inline",
            padding: Some(4.0),
            ..Decl::default()
        };
        self.add(Some(parent), "a", decl, words)
    }

    fn image(&mut self, parent: usize, w: f64, h: f64) -> usize {
        let decl = Decl {
            display: "inline-block",
            width: Some(w),
            height: Some(h),
            ..Decl::default()
        };
        self.add(Some(parent), "img", decl, 0)
    }
}

fn rich(b: &mut Builder<'_>, spec: &TemplateSpec, cat: usize) {
    let body_font = 16.0;
    let html = b.add(
        None,
        "html",
        Decl {
            display: "block",
            ..Decl::default()
        },
        0,
    );
    let body = b.add(
        Some(html),
        "body",
        Decl {
            display: "block",
            font_size: Some(body_font),
            margin: Some(0.0),
            ..Decl::default()
        },
        0,
    );
    let header = b.add(
        Some(body),
        "header",
        Decl {
            display: "block",
            padding: Some(12.0),
            ..Decl::default()
        },
        0,
    );
    let w = b.range(3, 8);
    b.heading(header, "h1", 32.0, w);
    let nav = b.add(
        Some(header),
        "nav",
        Decl {
            display: "block",
            border: Some(1.0),
            ..Decl::default()
        },
        0,
    );
    for _ in 0..b.range(3, 6) {
        let w = b.range(1, 2);
        b.link(nav, w);
    }

    let main = b.add(
        Some(body),
        "main",
        Decl {
            display: "block",
            ..Decl::default()
        },
        0,
    );
    let article = b.block(main, "article", 0);
    let align = if cat.is_multiple_of(2) {
        "left"
    } else {
        "justify"
    };
    let sections = b.rng.gen_range(spec.size.0..=spec.size.1);
    for s in 0..sections {
        let section = b.add(
            Some(article),
            "section",
            Decl {
                display: "block",
                margin: Some(16.0),
                ..Decl::default()
            },
            0,
        );
        let w = b.range(2, 6);
        b.heading(section, "h2", 24.0, w);
        let p = Decl {
            display: "block",
            line_height: Some(1.5),
            text_align: Some(align),
            ..Decl::default()
        };
        let w = b.range(30, 80);
        b.add(Some(section), "p", p, w);
        // figure next to the paragraph; shopping-like categories carry more of them
        if s % 2 == 0 || cat == 1 {
            let fig = b.block(section, "figure", 0);
            let iw = f64::from(b.range(24, 60)) * 10.0;
            let ih = f64::from(b.range(15, 40)) * 10.0;
            b.image(fig, iw, ih);
            let cap = Decl {
                display: "block",
                font_size: Some(14.0),
                font_style: Some("italic"),
                ..Decl::default()
            };
            let w = b.range(4, 10);
            b.add(Some(fig), "figcaption", cap, w);
        }
        if b.rng.gen_bool(0.5) {
            let ul = b.add(
                Some(section),
                "ul",
                Decl {
                    display: "block",
                    padding: Some(20.0),
                    ..Decl::default()
                },
                0,
            );
            for _ in 0..b.range(2, 4) {
                let w = b.range(4, 12);
                b.add(
                    Some(ul),
                    "li",
                    Decl {
                        display: "list-item",
                        ..Decl::default()
                    },
                    w,
                );
            }
        }
    }
    let form = b.add(
        Some(main),
        "form",
        Decl {
            display: "block",
            margin: Some(12.0),
            ..Decl::default()
        },
        0,
    );
    let input = Decl {
        display: "inline-block",
        width: Some(200.0),
        height: Some(24.0),
        border: Some(1.0),
        ..Decl::default()
    };
    b.add(Some(form), "input", input, 0);
    let button = Decl {
        display: "inline-block",
        padding: Some(6.0),
        outline: Some((1.0, "solid")),
        ..Decl::default()
    };
    b.add(Some(form), "button", button, 1);

    let footer = b.add(
        Some(body),
        "footer",
        Decl {
            display: "block",
            font_size: Some(12.0),
            ..Decl::default()
        },
        0,
    );
    let w = b.range(5, 12);
    b.block(footer, "p", w);
}

fn thin(b: &mut Builder<'_>, spec: &TemplateSpec) {
    let html = b.add(
        None,
        "html",
        Decl {
            display: "block",
            ..Decl::default()
        },
        0,
    );
    let body = b.block(html, "body", 0);
    let div = b.block(body, "div", 0);
    let leaves = b.rng.gen_range(spec.size.0..=spec.size.1);
    // at most one heading (<= 5 words) and paragraphs of <= 8 words keep the
    // page under 30 words
    for i in 0..leaves {
        match (i, b.rng.gen_range(0..3)) {
            (0, 0) => {
                let w = b.range(2, 5);
                b.heading(div, "h1", 32.0, w);
            }
            (_, 1) => {
                b.image(div, 300.0, 200.0);
            }
            _ => {
                let w = b.range(3, 8);
                b.block(div, "p", w);
            }
        }
    }
}

const FONT_STYLES: [&str; 3] = ["normal", "italic", "oblique"];
const FONT_WEIGHTS: [&str; 6] = ["100", "300", "normal", "bold", "800", "900"];
const ALIGNS: [&str; 4] = ["left", "right", "center", "justify"];
const OUTLINES: [&str; 4] = ["dotted", "dashed", "double", "groove"];

fn chaotic(b: &mut Builder<'_>, spec: &TemplateSpec) {
    let max_font = spec.max_font_px.round() as u32;
    let html = b.add(
        None,
        "html",
        Decl {
            display: "block",
            ..Decl::default()
        },
        0,
    );
    let body_font = f64::from(b.range(9, max_font));
    let body = b.add(
        Some(html),
        "body",
        Decl {
            display: "block",
            font_size: Some(body_font),
            ..Decl::default()
        },
        0,
    );

    let clash = |b: &mut Builder<'_>| Decl {
        display: "block",
        font_size: Some(f64::from(b.range(9, max_font))),
        font_style: Some(FONT_STYLES[b.rng.gen_range(0..3)]),
        font_weight: Some(FONT_WEIGHTS[b.rng.gen_range(0..6)]),
        text_align: Some(ALIGNS[b.rng.gen_range(0..4)]),
        ..Decl::default()
    };

    let boxes = b.rng.gen_range(spec.size.0..=spec.size.1);
    for _ in 0..boxes {
        // overlapping floating boxes crowded into the first screen
        let decl = Decl {
            display: "block",
            position: Some("absolute"),
            left: Some(f64::from(b.range(0, 60)) * 10.0),
            top: Some(f64::from(b.range(0, 40)) * 10.0),
            width: Some(f64::from(b.range(20, 60)) * 10.0),
            height: Some(f64::from(b.range(10, 40)) * 10.0),
            border: Some(f64::from(b.range(0, 6))),
            outline: b
                .rng
                .gen_bool(0.5)
                .then(|| (f64::from(b.range(1, 5)), OUTLINES[b.rng.gen_range(0..4)])),
            ..Decl::default()
        };
        let floating = b.add(Some(body), "div", decl, 0);
        match b.rng.gen_range(0..3) {
            0 => {
                let iw = f64::from(b.range(10, 40)) * 10.0;
                let ih = f64::from(b.range(5, 20)) * 10.0;
                b.image(floating, iw, ih);
            }
            1 => {
                let d = clash(b);
                let w = b.range(1, 20);
                b.add(Some(floating), "p", d, w);
            }
            _ => {
                for _ in 0..b.range(2, 5) {
                    let mut d = clash(b);
                    d.display = "inline";
                    let w = b.range(1, 4);
                    b.add(Some(floating), "span", d, w);
                }
            }
        }
    }
    // a link farm and a deep chain of nested wrappers in normal flow
    let farm = b.block(body, "div", 0);
    for _ in 0..b.range(4, 12) {
        let w = b.range(1, 3);
        b.link(farm, w);
    }
    let mut cur = body;
    for _ in 0..b.range(3, 7) {
        let d = clash(b);
        cur = b.add(Some(cur), "div", d, 0);
    }
    let mut d = clash(b);
    d.display = "inline";
    let w = b.range(1, 6);
    b.add(Some(cur), "span", d, w);
}

fn render_html(nodes: &[GenNode], rng: &mut ChaCha8Rng) -> String {
    fn style_attr(decl: &Decl) -> String {
        decl.style_map()
            .iter()
            .map(|(k, v)| format!("{k}:{v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
    fn emit(nodes: &[GenNode], id: usize, words: &[Vec<&str>], out: &mut String) {
        let n = &nodes[id];
        let _ = write!(out, "<{} style=\"{}\">", n.tag, style_attr(&n.decl));
        if n.tag == "img" || n.tag == "input" {
            return;
        }
        if !words[id].is_empty() {
            out.push_str(&words[id].join(" "));
        }
        for &c in &n.children {
            emit(nodes, c, words, out);
        }
        let _ = write!(out, "</{}>", n.tag);
    }
    let words: Vec<Vec<&str>> = nodes
        .iter()
        .map(|n| {
            (0..n.words)
                .map(|_| *LEXICON.choose(rng).expect("lexicon"))
                .collect()
        })
        .collect();
    let mut out = String::from("<!DOCTYPE html>\n");
    emit(nodes, 0, &words, &mut out);
    out.push('\n');
    out
}

/// Ground truth for one generated document. Node `i` is the `i`-th element
/// in document order, matching the ids assigned by the HTML parser.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestNode {
    pub tag_name: String,
    pub parent_id: Option<usize>,
    pub style: BTreeMap<String, String>,
    pub geometry: Geometry,
    pub text_length: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub url: String,
    pub category: String,
    pub profile: Profile,
    pub label: u8,
    /// HTML file path relative to the corpus directory.
    pub html: String,
    pub nodes: Vec<ManifestNode>,
    /// Raw layout features per node, in node order.
    pub raw_features: Vec<RawFeatures>,
}

impl ManifestEntry {
    pub fn total_words(&self) -> u64 {
        self.nodes.iter().map(|n| u64::from(n.text_length)).sum()
    }

    pub fn depth(&self) -> usize {
        let mut depth = vec![1usize; self.nodes.len()];
        for i in 1..self.nodes.len() {
            if let Some(p) = self.nodes[i].parent_id {
                depth[i] = depth[p] + 1;
            }
        }
        depth.into_iter().max().unwrap_or(0)
    }

    /// Pairs of absolutely positioned boxes whose rectangles intersect.
    pub fn overlapping_pairs(&self) -> usize {
        let abs: Vec<&Geometry> = self
            .nodes
            .iter()
            .filter(|n| n.style.get("position").map(String::as_str) == Some("absolute"))
            .map(|n| &n.geometry)
            .collect();
        let mut count = 0;
        for i in 0..abs.len() {
            for j in i + 1..abs.len() {
                let (a, b) = (abs[i], abs[j]);
                if a.xpos < b.xpos + b.width
                    && b.xpos < a.xpos + a.width
                    && a.ypos < b.ypos + b.height
                    && b.ypos < a.ypos + a.height
                {
                    count += 1;
                }
            }
        }
        count
    }

    /// The document as a tree in the pre-rendered form.
    pub fn to_tree(&self) -> DomTree {
        let mut nodes: Vec<DomNode> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| DomNode {
                node_id: i,
                parent_id: n.parent_id,
                tag_name: n.tag_name.clone(),
                node_type: crate::dom::tags::node_type_for(&n.tag_name),
                style: n.style.clone(),
                geometry: n.geometry,
                text_length: n.text_length,
                children: Vec::new(),
            })
            .collect();
        for i in 0..nodes.len() {
            if let Some(p) = nodes[i].parent_id {
                nodes[p].children.push(i);
            }
        }
        DomTree {
            nodes,
            root_id: 0,
            source_url: self.url.clone(),
            category: self.category.clone(),
        }
    }
}

/// A generated document: its HTML source and manifest entry.
#[derive(Clone, Debug, PartialEq)]
pub struct Document {
    pub html: String,
    pub entry: ManifestEntry,
}

/// Generates one document from `spec`, identified as `id`.
pub fn generate_document(spec: &TemplateSpec, id: &str) -> Result<Document> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let cat_index = CATEGORY_NAMES
        .iter()
        .position(|c| *c == spec.category)
        .unwrap_or(0);
    let mut b = Builder {
        nodes: Vec::new(),
        rng: &mut rng,
    };
    match spec.profile {
        Profile::Rich => rich(&mut b, spec, cat_index),
        Profile::Thin => thin(&mut b, spec),
        Profile::Chaotic => chaotic(&mut b, spec),
    }
    let nodes = b.nodes;
    let html = render_html(&nodes, &mut rng);
    let geometry = layout::compute(&nodes, spec.viewport_width);

    // Builders add nodes in document order, so generator ids equal parser ids.
    let manifest_nodes: Vec<ManifestNode> = nodes
        .iter()
        .zip(&geometry)
        .map(|(n, g)| ManifestNode {
            tag_name: n.tag.to_string(),
            parent_id: n.parent,
            style: n.decl.style_map(),
            geometry: *g,
            text_length: n.words,
        })
        .collect();
    let raw_features = nodes
        .iter()
        .zip(&geometry)
        .map(|(n, g)| {
            let mut f = RawFeatures::new();
            f.insert("height".into(), RawValue::Num(g.height));
            f.insert("width".into(), RawValue::Num(g.width));
            f.insert("xpos".into(), RawValue::Num(g.xpos));
            f.insert("ypos".into(), RawValue::Num(g.ypos));
            f.insert("word_count".into(), RawValue::Num(f64::from(n.words)));
            f.insert("tag_name".into(), RawValue::Tok(n.tag.to_string()));
            n.decl.raw_features(&mut f);
            f
        })
        .collect();
    Ok(Document {
        html,
        entry: ManifestEntry {
            id: id.to_string(),
            url: format!("https://synth.example/{}/{id}.html", spec.category),
            category: spec.category.clone(),
            profile: spec.profile,
            label: spec.profile.label(),
            html: format!("html/{id}.html"),
            nodes: manifest_nodes,
            raw_features,
        },
    })
}

/// `n` documents of a single template, with per-document derived seeds.
pub fn generate(spec: &TemplateSpec, n: usize) -> Result<Vec<Document>> {
    if n == 0 {
        return Err(Error::BadSpec("n must be at least 1".into()));
    }
    (0..n)
        .map(|i| {
            let doc_spec = TemplateSpec {
                seed: derive_seed(spec.seed, i as u64),
                ..spec.clone()
            };
            generate_document(
                &doc_spec,
                &format!("{}-{}-{i:05}", spec.category, spec.profile),
            )
        })
        .collect()
}

fn derive_seed(seed: u64, i: u64) -> u64 {
    let mut z = seed ^ i.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Whole-corpus parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub n: usize,
    pub categories: usize,
    pub profile_mix: Vec<(Profile, f64)>,
    /// Optional per-category share of `rich` pages, overriding the global mix
    /// for that category; the remaining share is split between the label-0
    /// profiles in their global proportion.
    pub rich_share_by_category: Option<Vec<f64>>,
    pub seed: u64,
    pub viewport_width: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n: 2000,
            categories: 5,
            profile_mix: vec![
                (Profile::Rich, 0.3),
                (Profile::Thin, 0.4),
                (Profile::Chaotic, 0.3),
            ],
            rich_share_by_category: None,
            seed: 7,
            viewport_width: 1280.0,
        }
    }
}

/// Splits `total` into integer parts proportional to `weights` (largest remainder).
pub fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut parts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut left = total - parts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        parts[i] += 1;
        left -= 1;
    }
    parts
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.categories == 0 {
            return Err(Error::BadSpec("n and categories must be positive".into()));
        }
        if self.profile_mix.is_empty()
            || self
                .profile_mix
                .iter()
                .any(|(_, w)| !(*w >= 0.0 && w.is_finite()))
        {
            return Err(Error::BadSpec(
                "profile weights must be finite and non-negative".into(),
            ));
        }
        if self.profile_mix.iter().map(|(_, w)| w).sum::<f64>() <= 0.0 {
            return Err(Error::BadSpec("profile weights sum to zero".into()));
        }
        if let Some(shares) = &self.rich_share_by_category {
            if shares.len() != self.categories || shares.iter().any(|s| !(0.0..=1.0).contains(s)) {
                return Err(Error::BadSpec(
                    "rich_share_by_category needs one share in [0,1] per category".into(),
                ));
            }
        }
        Ok(())
    }

    /// Exact document counts per (category, profile).
    pub fn plan(&self) -> Result<Vec<(String, Profile, usize)>> {
        self.validate()?;
        let per_cat = apportion(self.n, &vec![1.0; self.categories]);
        let weight = |p: Profile| {
            self.profile_mix
                .iter()
                .filter(|(q, _)| *q == p)
                .map(|(_, w)| w)
                .sum::<f64>()
        };
        let mut out = Vec::new();
        for (c, &n_c) in per_cat.iter().enumerate() {
            let weights: Vec<f64> = match &self.rich_share_by_category {
                None => Profile::ALL.iter().map(|&p| weight(p)).collect(),
                Some(shares) => {
                    let (t, ch) = (weight(Profile::Thin), weight(Profile::Chaotic));
                    let rest = 1.0 - shares[c];
                    let (t, ch) = if t + ch > 0.0 {
                        (rest * t / (t + ch), rest * ch / (t + ch))
                    } else {
                        (rest, 0.0)
                    };
                    vec![shares[c], t, ch]
                }
            };
            for (p, k) in Profile::ALL.iter().zip(apportion(n_c, &weights)) {
                out.push((category_name(c), *p, k));
            }
        }
        Ok(out)
    }
}

/// Generates the full corpus in a deterministic order.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Vec<Document>> {
    let plan = spec.plan()?;
    let mut docs = Vec::with_capacity(spec.n);
    let mut serial = 0u64;
    for (category, profile, count) in plan {
        for _ in 0..count {
            let t = TemplateSpec {
                viewport_width: spec.viewport_width,
                ..TemplateSpec::new(category.clone(), profile, derive_seed(spec.seed, serial))
            };
            docs.push(generate_document(&t, &format!("doc{serial:05}"))?);
            serial += 1;
        }
    }
    Ok(docs)
}

/// Paths written by [`write_corpus`].
#[derive(Clone, Debug)]
pub struct CorpusFiles {
    pub manifest: PathBuf,
    pub labels: PathBuf,
    pub splits: PathBuf,
}

/// Writes `html/`, `manifest.jsonl`, `labels.tsv`, `splits.json` and, with
/// `prerendered`, one pre-rendered JSONL tree per document under `prerendered/`.
pub fn write_corpus(
    docs: &[Document],
    dir: &Path,
    split_ratios: [f64; 3],
    seed: u64,
    prerendered: bool,
) -> Result<CorpusFiles> {
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |e| Error::io(p.clone(), e)
    };
    let html_dir = dir.join("html");
    std::fs::create_dir_all(&html_dir).map_err(io(&html_dir))?;
    if prerendered {
        let pre = dir.join("prerendered");
        std::fs::create_dir_all(&pre).map_err(io(&pre))?;
    }
    let manifest = dir.join("manifest.jsonl");
    let mut m = std::io::BufWriter::new(std::fs::File::create(&manifest).map_err(io(&manifest))?);
    let mut labels = String::from("url\tlabel\n");
    for d in docs {
        let path = dir.join(&d.entry.html);
        std::fs::write(&path, &d.html).map_err(io(&path))?;
        serde_json::to_writer(&mut m, &d.entry)?;
        m.write_all(b"\n").map_err(io(&manifest))?;
        let _ = writeln!(labels, "{}\t{}", d.entry.url, d.entry.label);
        if prerendered {
            let path = dir
                .join("prerendered")
                .join(format!("{}.jsonl", d.entry.id));
            let mut buf = Vec::new();
            crate::dom::write_prerendered(&d.entry.to_tree(), &mut buf)?;
            std::fs::write(&path, buf).map_err(io(&path))?;
        }
    }
    m.flush().map_err(io(&manifest))?;
    let labels_path = dir.join("labels.tsv");
    std::fs::write(&labels_path, labels).map_err(io(&labels_path))?;
    let entries: Vec<&ManifestEntry> = docs.iter().map(|d| &d.entry).collect();
    let splits = split(&entries, split_ratios, seed)?;
    let splits_path = dir.join("splits.json");
    std::fs::write(&splits_path, serde_json::to_string_pretty(&splits)? + "\n")
        .map_err(io(&splits_path))?;
    Ok(CorpusFiles {
        manifest,
        labels: labels_path,
        splits: splits_path,
    })
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Depth / word-count / overlap rule used as a separability floor check.
pub fn heuristic_label(e: &ManifestEntry) -> u8 {
    if e.overlapping_pairs() > 0 || e.total_words() < 30 || e.depth() > 9 {
        0
    } else {
        1
    }
}

#[cfg(test)]
mod tests;
