//! Flow-layout geometry heuristic.
//!
//! Block boxes take the full available width of their parent and stack
//! vertically. Inline boxes shrink to their preferred width and share rows,
//! wrapping when a row is full. Explicit `width`/`height` override the
//! computed size; `position: absolute|fixed` boxes are taken out of flow and
//! placed at `left`/`top` relative to their parent. Text contributes
//! `ceil(words * word_width / width)` lines of `line-height` each.

use super::{tags, DomTree, Geometry};

/// Average rendered width of one word (including its trailing space), in `em`.
pub const WORD_WIDTH_EM: f64 = 3.0;
pub const DEFAULT_FONT_SIZE: f64 = 16.0;
pub const DEFAULT_LINE_HEIGHT_RATIO: f64 = 1.2;
/// Pixel values are clamped to this magnitude to keep geometry finite.
pub const MAX_PX: f64 = 1.0e6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Viewport {
    pub width: f64,
    pub height: f64,
}

impl Default for Viewport {
    fn default() -> Self {
        Viewport {
            width: 1280.0,
            height: 2000.0,
        }
    }
}

impl std::str::FromStr for Viewport {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("viewport must look like 1280x2000, got {s:?}"))?;
        let width: f64 = w.trim().parse().map_err(|_| format!("bad width {w:?}"))?;
        let height: f64 = h.trim().parse().map_err(|_| format!("bad height {h:?}"))?;
        if !(width > 0.0 && width.is_finite() && height >= 0.0 && height.is_finite()) {
            return Err(format!("viewport dimensions out of range: {s}"));
        }
        Ok(Viewport { width, height })
    }
}

/// Parses a CSS length into pixels. Supports unitless numbers, `px`, `pt`,
/// `em` (relative to `font_size`) and `rem`. Percentages and keywords yield `None`.
pub fn parse_length(value: &str, font_size: f64) -> Option<f64> {
    let v = value.trim();
    let end = v
        .char_indices()
        .find(|&(i, c)| !(c.is_ascii_digit() || c == '.' || (i == 0 && (c == '-' || c == '+'))))
        .map_or(v.len(), |(i, _)| i);
    let number: f64 = v[..end].parse().ok()?;
    let unit = v[end..].trim().to_ascii_lowercase();
    let px = match unit.as_str() {
        "" | "px" => number,
        "pt" => number * 4.0 / 3.0,
        "em" => number * font_size,
        "rem" => number * DEFAULT_FONT_SIZE,
        _ => return None,
    };
    px.is_finite().then(|| px.clamp(-MAX_PX, MAX_PX))
}

/// Fills `geometry` for every node of `tree` using the flow heuristic.
pub fn estimate_geometry(mut tree: DomTree, viewport: Viewport) -> DomTree {
    let n = tree.nodes.len();
    if n == 0 {
        return tree;
    }
    let mut boxes = vec![BoxStyle::default(); n];
    for id in tree.preorder() {
        let parent_fs = tree.nodes[id]
            .parent_id
            .map_or(DEFAULT_FONT_SIZE, |p| boxes[p].font_size);
        boxes[id] = BoxStyle::resolve(&tree, id, parent_fs);
    }
    let mut preferred = vec![0.0; n];
    for &id in tree.preorder().iter().rev() {
        preferred[id] = preferred_width(&tree, &boxes, &preferred, id);
    }
    let mut engine = Engine {
        tree: &tree,
        boxes: &boxes,
        preferred: &preferred,
        out: vec![Geometry::default(); n],
    };
    engine.place(tree.root_id, 0.0, 0.0, viewport.width.max(0.0));
    let out = engine.out;
    for (node, g) in tree.nodes.iter_mut().zip(out) {
        node.geometry = g;
    }
    tree
}

#[derive(Clone, Debug, Default)]
struct BoxStyle {
    hidden: bool,
    block: bool,
    out_of_flow: bool,
    left: f64,
    top: f64,
    width: Option<f64>,
    height: Option<f64>,
    width_pct: Option<f64>,
    font_size: f64,
    line_height: f64,
    intrinsic: Option<(f64, f64)>,
    words: f64,
}

impl BoxStyle {
    fn resolve(tree: &DomTree, id: usize, parent_font_size: f64) -> Self {
        let node = &tree.nodes[id];
        let style = &node.style;
        let display = style
            .get("display")
            .map(|d| d.trim().to_ascii_lowercase())
            .unwrap_or_else(|| tags::default_display(&node.tag_name).to_string());
        let font_size = style
            .get("font-size")
            .and_then(|v| parse_length(v, parent_font_size))
            .filter(|v| *v > 0.0)
            .unwrap_or(parent_font_size);
        let line_height = style
            .get("line-height")
            .and_then(|v| {
                let v = v.trim();
                match v.parse::<f64>() {
                    Ok(ratio) if ratio.is_finite() => Some(ratio * font_size),
                    _ => parse_length(v, font_size),
                }
            })
            .filter(|v| *v > 0.0)
            .unwrap_or(DEFAULT_LINE_HEIGHT_RATIO * font_size);
        let position = style
            .get("position")
            .map(|p| p.trim().to_ascii_lowercase())
            .unwrap_or_default();
        let len = |key: &str| {
            style
                .get(key)
                .and_then(|v| parse_length(v, font_size))
                .map(|v| v.max(0.0))
        };
        let width_pct = style.get("width").and_then(|v| {
            let v = v.trim().strip_suffix('%')?;
            v.trim()
                .parse::<f64>()
                .ok()
                .filter(|p| p.is_finite())
                .map(|p| p.clamp(0.0, 100.0))
        });
        BoxStyle {
            hidden: display == "none",
            block: tags::is_block_display(&display),
            out_of_flow: position == "absolute" || position == "fixed",
            left: style
                .get("left")
                .and_then(|v| parse_length(v, font_size))
                .unwrap_or(0.0),
            top: style
                .get("top")
                .and_then(|v| parse_length(v, font_size))
                .unwrap_or(0.0),
            width: len("width"),
            height: len("height"),
            width_pct,
            font_size,
            line_height,
            intrinsic: tags::intrinsic_size(&node.tag_name),
            words: node.text_length as f64,
        }
    }

    fn text_width(&self) -> f64 {
        self.words * WORD_WIDTH_EM * self.font_size
    }

    fn text_height(&self, width: f64) -> f64 {
        if self.words == 0.0 {
            return 0.0;
        }
        let lines = if width > 0.0 {
            (self.text_width() / width).ceil().max(1.0)
        } else {
            self.words
        };
        lines * self.line_height
    }
}

fn preferred_width(tree: &DomTree, boxes: &[BoxStyle], preferred: &[f64], id: usize) -> f64 {
    let b = &boxes[id];
    if b.hidden {
        return 0.0;
    }
    if let Some(w) = b.width {
        return w;
    }
    if let Some((w, _)) = b.intrinsic {
        return w;
    }
    let children: f64 = tree.nodes[id]
        .children
        .iter()
        .filter(|&&c| !boxes[c].out_of_flow)
        .map(|&c| preferred[c])
        .sum();
    (b.text_width() + children).min(MAX_PX)
}

struct Engine<'a> {
    tree: &'a DomTree,
    boxes: &'a [BoxStyle],
    preferred: &'a [f64],
    out: Vec<Geometry>,
}

impl Engine<'_> {
    fn used_width(&self, id: usize, avail: f64) -> f64 {
        let b = &self.boxes[id];
        if let Some(w) = b.width {
            return w;
        }
        if let Some(pct) = b.width_pct {
            return avail * pct / 100.0;
        }
        if b.block && b.intrinsic.is_none() {
            avail
        } else {
            self.preferred[id].min(avail)
        }
    }

    fn collapse(&mut self, id: usize, x: f64, y: f64) {
        let tree = self.tree;
        self.out[id] = Geometry {
            height: 0.0,
            width: 0.0,
            xpos: x,
            ypos: y,
        };
        for &c in &tree.nodes[id].children {
            self.collapse(c, x, y);
        }
    }

    /// Lays out `id` with its top-left corner at `(x, y)`; returns `(width, height)`.
    fn place(&mut self, id: usize, x: f64, y: f64, avail: f64) -> (f64, f64) {
        let (tree, boxes) = (self.tree, self.boxes);
        let b = &boxes[id];
        if b.hidden {
            self.collapse(id, x, y);
            return (0.0, 0.0);
        }
        let width = self.used_width(id, avail).clamp(0.0, MAX_PX);
        let text_height = b.text_height(width);
        let (explicit_h, intrinsic) = (b.height, b.intrinsic);

        let mut cursor_y = y + text_height;
        let mut cursor_x = x;
        let mut row_h: f64 = 0.0;
        for &c in &tree.nodes[id].children {
            let cb = &boxes[c];
            if cb.hidden {
                self.collapse(c, x, cursor_y);
                continue;
            }
            if cb.out_of_flow {
                let (cx, cy) = ((x + cb.left).max(0.0), (y + cb.top).max(0.0));
                self.place(c, cx, cy, width);
                continue;
            }
            if cb.block {
                if cursor_x > x || row_h > 0.0 {
                    cursor_y += row_h;
                    cursor_x = x;
                    row_h = 0.0;
                }
                let (_, ch) = self.place(c, x, cursor_y, width);
                cursor_y += ch;
            } else {
                let cw = self.used_width(c, width);
                if cursor_x > x && cursor_x + cw > x + width {
                    cursor_y += row_h;
                    cursor_x = x;
                    row_h = 0.0;
                }
                let remaining = (x + width - cursor_x).max(0.0);
                let (cw, ch) = self.place(c, cursor_x, cursor_y, remaining);
                cursor_x += cw;
                row_h = row_h.max(ch);
            }
        }
        cursor_y += row_h;

        let height = match (explicit_h, intrinsic) {
            (Some(h), _) => h,
            (None, Some((iw, ih))) => {
                // keep the aspect ratio when only the width was given
                if b.width.is_some() && iw > 0.0 {
                    width * ih / iw
                } else {
                    ih
                }
            }
            (None, None) => cursor_y - y,
        }
        .clamp(0.0, MAX_PX);
        self.out[id] = Geometry {
            height,
            width,
            xpos: x.min(MAX_PX),
            ypos: y.min(MAX_PX),
        };
        (width, height)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::parse_html;

    fn layout(src: &str, width: f64) -> DomTree {
        estimate_geometry(
            parse_html(src).unwrap(),
            Viewport {
                width,
                height: 2000.0,
            },
        )
    }

    #[test]
    fn single_div_fills_viewport() {
        let t = layout("<div></div>", 1000.0);
        let g = t.root().geometry;
        assert_eq!((g.width, g.xpos, g.ypos), (1000.0, 0.0, 0.0));
    }

    #[test]
    fn blocks_stack_vertically() {
        let t = layout(
            r#"<body><div style="height:100px"></div><div style="height:200px"></div></body>"#,
            1000.0,
        );
        assert_eq!(t.nodes[1].geometry.ypos, 0.0);
        assert_eq!(t.nodes[2].geometry.ypos, 100.0);
        assert_eq!(t.root().geometry.height, 300.0);
    }

    #[test]
    fn inline_boxes_share_rows_and_wrap() {
        let t = layout(
            r#"<div><img style="width:400px;height:50px"><img style="width:400px;height:80px"><img style="width:400px;height:10px"></div>"#,
            1000.0,
        );
        let g: Vec<_> = t.nodes[1..].iter().map(|n| n.geometry).collect();
        assert_eq!((g[0].xpos, g[0].ypos), (0.0, 0.0));
        assert_eq!((g[1].xpos, g[1].ypos), (400.0, 0.0));
        assert_eq!((g[2].xpos, g[2].ypos), (0.0, 80.0));
        assert_eq!(t.root().geometry.height, 90.0);
    }

    #[test]
    fn text_lines_and_absolute_positioning() {
        // 10 words at 16px: 480px of text in a 200px box -> 3 lines of 19.2px
        let t = layout(
            r#"<div style="width:200px">a b c d e f g h i j<span style="position:absolute;left:5px;top:700px">x</span></div>"#,
            1000.0,
        );
        assert!((t.root().geometry.height - 3.0 * 19.2).abs() < 1e-9);
        let span = t.nodes[1].geometry;
        assert_eq!((span.xpos, span.ypos), (5.0, 700.0));
    }

    #[test]
    fn display_none_collapses() {
        let t = layout(
            r#"<div><p style="display:none">a b c</p><p>x</p></div>"#,
            500.0,
        );
        assert_eq!(t.nodes[1].geometry.height, 0.0);
        assert_eq!(t.nodes[2].geometry.ypos, 0.0);
    }

    #[test]
    fn lengths() {
        assert_eq!(parse_length("12px", 16.0), Some(12.0));
        assert_eq!(parse_length("2em", 10.0), Some(20.0));
        assert_eq!(parse_length("1.5rem", 10.0), Some(24.0));
        assert_eq!(parse_length("12pt", 16.0), Some(16.0));
        assert_eq!(parse_length("auto", 16.0), None);
        assert_eq!(parse_length("50%", 16.0), None);
        assert_eq!(parse_length("1e400px", 16.0), None);
        assert_eq!("1280x2000".parse::<Viewport>().unwrap().width, 1280.0);
        assert!("0x10".parse::<Viewport>().is_err());
    }
}
