use std::fmt::Write as _;

use super::interpret::{DissectedNode, NodeValue};
use crate::traces::escape_html;

/// Byte range, or `byte.bit` positions when either end is inside a byte.
pub fn format_range(node: &DissectedNode) -> String {
    let (s, e) = (node.bit_start, node.bit_end);
    if s % 8 == 0 && e % 8 == 0 {
        format!("[{}..{})", s / 8, e / 8)
    } else {
        format!("[{}.{}..{}.{})", s / 8, s % 8, e / 8, e % 8)
    }
}

const HEX_LIMIT: usize = 32;

pub fn format_value(node: &DissectedNode) -> Option<String> {
    match &node.value {
        NodeValue::Structure => None,
        NodeValue::Uint(v) => Some(v.to_string()),
        NodeValue::Bytes => Some(format_bytes(&node.raw)),
        NodeValue::Error(m) => Some(format!("error: {m}")),
        NodeValue::Undissected => Some(format!("{} ({} bytes)", format_hex(&node.raw), node.raw.len())),
    }
}

fn format_hex(bytes: &[u8]) -> String {
    if bytes.len() > HEX_LIMIT {
        format!("{}..", hex::encode(&bytes[..HEX_LIMIT]))
    } else {
        hex::encode(bytes)
    }
}

fn format_bytes(bytes: &[u8]) -> String {
    if bytes.is_empty() {
        return "(empty)".into();
    }
    let text = bytes.iter().all(|b| b.is_ascii_graphic() || matches!(b, b' ' | b'\r' | b'\n' | b'\t'));
    if text && bytes.iter().any(u8::is_ascii_alphanumeric) {
        let escaped: String = bytes.iter().flat_map(|b| std::ascii::escape_default(*b)).map(char::from).collect();
        format!("\"{escaped}\" ({} bytes)", bytes.len())
    } else {
        format!("{} ({} bytes)", format_hex(bytes), bytes.len())
    }
}

/// Content of a subtree without positions; equal signatures render alike.
fn signature(node: &DissectedNode, out: &mut String) {
    let _ = write!(out, "{}={:?}(", node.name, format_value(node));
    for c in &node.children {
        signature(c, out);
    }
    out.push(')');
}

/// Splits siblings into runs of identical subtrees, such as PADDING.
fn runs(nodes: &[DissectedNode]) -> Vec<&[DissectedNode]> {
    let sigs: Vec<String> = nodes
        .iter()
        .map(|n| {
            let mut s = String::new();
            signature(n, &mut s);
            s
        })
        .collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < nodes.len() {
        let mut j = i + 1;
        while j < nodes.len() && sigs[j] == sigs[i] && !nodes[i].is_error() {
            j += 1;
        }
        out.push(&nodes[i..j]);
        i = j;
    }
    out
}

fn run_head(run: &[DissectedNode]) -> (String, String) {
    let first = &run[0];
    let last = &run[run.len() - 1];
    let span = DissectedNode { bit_start: first.bit_start, bit_end: last.bit_end, ..first.clone() };
    let name = if run.len() > 1 { format!("{} x{}", first.name, run.len()) } else { first.name.clone() };
    (name, format_range(&span))
}

/// Indented `name [range] = value` listing; repeated identical siblings
/// are folded into one entry.
pub fn render_text(tree: &DissectedNode) -> String {
    let mut out = String::new();
    text_run(std::slice::from_ref(tree), 0, &mut out);
    out
}

fn text_run(run: &[DissectedNode], depth: usize, out: &mut String) {
    let (name, range) = run_head(run);
    let _ = write!(out, "{:indent$}{name} {range}", "", indent = depth * 2);
    if let Some(v) = format_value(&run[0]) {
        let _ = write!(out, " = {v}");
    }
    out.push('\n');
    for r in runs(&run[0].children) {
        text_run(r, depth + 1, out);
    }
}

/// Nested-list HTML fragment.
pub fn render_html(tree: &DissectedNode) -> String {
    let mut out = String::from("<ul class=\"dissection\">");
    html_run(std::slice::from_ref(tree), &mut out);
    out.push_str("</ul>");
    out
}

fn html_run(run: &[DissectedNode], out: &mut String) {
    let (name, range) = run_head(run);
    let class = match run[0].value {
        NodeValue::Error(_) => " class=\"error\"",
        NodeValue::Undissected => " class=\"undissected\"",
        _ => "",
    };
    let _ = write!(
        out,
        "<li{class}><span class=\"name\">{}</span> <span class=\"range\">{}</span>",
        escape_html(&name),
        escape_html(&range)
    );
    if let Some(v) = format_value(&run[0]) {
        let _ = write!(out, " = <span class=\"value\">{}</span>", escape_html(&v));
    }
    if !run[0].children.is_empty() {
        out.push_str("<ul>");
        for r in runs(&run[0].children) {
            html_run(r, out);
        }
        out.push_str("</ul>");
    }
    out.push_str("</li>");
}
