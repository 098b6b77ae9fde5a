//! Fixed tag table: tag name to node type, default display, and the small
//! per-tag default style sheet applied before inline styles.
//!
//! Table version 1. Changing any mapping changes downstream feature encodings,
//! so bump [`TAG_TABLE_VERSION`] together with it.

use super::NodeType;

pub const TAG_TABLE_VERSION: u32 = 1;

pub fn node_type_for(tag: &str) -> NodeType {
    match tag {
        "p" | "span" | "h1" | "h2" | "h3" | "h4" | "h5" | "h6" | "b" | "i" | "em" | "strong"
        | "label" | "li" | "blockquote" | "pre" | "code" | "small" | "font" | "td" | "th"
        | "dt" | "dd" | "figcaption" | "caption" | "title" | "u" | "mark" | "q" | "cite" => {
            NodeType::Text
        }
        "img" | "picture" | "svg" | "canvas" => NodeType::Image,
        "video" | "audio" | "embed" | "object" => NodeType::Video,
        "html" | "body" | "div" | "section" | "article" | "main" | "header" | "footer" | "nav"
        | "aside" | "ul" | "ol" | "table" | "tbody" | "thead" | "tfoot" | "tr" | "form"
        | "figure" | "dl" | "fieldset" => NodeType::Container,
        "a" | "button" | "input" | "select" | "textarea" | "option" | "details" | "summary" => {
            NodeType::Interactive
        }
        _ => NodeType::Other,
    }
}

/// Default `display` for a tag; unknown tags are inline.
pub fn default_display(tag: &str) -> &'static str {
    match tag {
        "html" | "body" | "div" | "section" | "article" | "main" | "header" | "footer" | "nav"
        | "aside" | "p" | "h1" | "h2" | "h3" | "h4" | "h5" | "h6" | "ul" | "ol" | "table"
        | "tbody" | "thead" | "tfoot" | "tr" | "form" | "figure" | "blockquote" | "pre" | "dl"
        | "dt" | "dd" | "fieldset" | "figcaption" | "details" | "summary" | "hr" | "address"
        | "caption" => "block",
        "li" => "list-item",
        "td" | "th" => "table-cell",
        "img" | "video" | "canvas" | "svg" | "input" | "button" | "select" | "textarea"
        | "audio" | "embed" | "object" | "picture" => "inline-block",
        "head" | "meta" | "link" | "title" | "source" | "track" | "param" | "template" | "base" => {
            "none"
        }
        _ => "inline",
    }
}

/// The default sheet entries for a tag, excluding `display` which always applies.
pub fn default_style(tag: &str) -> &'static [(&'static str, &'static str)] {
    match tag {
        "h1" => &[("font-size", "32px"), ("font-weight", "bold")],
        "h2" => &[("font-size", "24px"), ("font-weight", "bold")],
        "h3" => &[("font-size", "18.72px"), ("font-weight", "bold")],
        "h4" => &[("font-size", "16px"), ("font-weight", "bold")],
        "h5" => &[("font-size", "13.28px"), ("font-weight", "bold")],
        "h6" => &[("font-size", "10.72px"), ("font-weight", "bold")],
        "b" | "strong" => &[("font-weight", "bold")],
        "th" => &[("font-weight", "bold"), ("text-align", "center")],
        "caption" => &[("text-align", "center")],
        "i" | "em" | "cite" => &[("font-style", "italic")],
        "small" => &[("font-size", "13px")],
        _ => &[],
    }
}

pub fn is_void(tag: &str) -> bool {
    matches!(
        tag,
        "area"
            | "base"
            | "br"
            | "col"
            | "embed"
            | "hr"
            | "img"
            | "input"
            | "link"
            | "meta"
            | "param"
            | "source"
            | "track"
            | "wbr"
    )
}

/// Elements whose content is raw text and which are dropped entirely.
pub fn is_skipped(tag: &str) -> bool {
    matches!(tag, "script" | "style" | "noscript")
}

/// Replaced elements get an intrinsic size when no explicit size is set.
pub fn intrinsic_size(tag: &str) -> Option<(f64, f64)> {
    match tag {
        "img" | "video" | "canvas" | "svg" | "embed" | "object" | "iframe" | "picture" => {
            Some((300.0, 150.0))
        }
        "input" | "select" => Some((150.0, 20.0)),
        "textarea" => Some((300.0, 40.0)),
        "audio" => Some((300.0, 32.0)),
        _ => None,
    }
}

pub fn is_block_display(display: &str) -> bool {
    matches!(
        display,
        "block" | "flex" | "grid" | "list-item" | "table" | "table-row" | "flow-root"
    )
}
