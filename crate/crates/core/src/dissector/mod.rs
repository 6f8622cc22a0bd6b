//! Packet dissection driven by YAML protocol descriptions.
//!
//! A description lists named structures made of typed fields; the
//! interpreter walks cleartext packet bytes against it and produces a field
//! tree whose leaves tile the input exactly. The grammar is documented at
//! the top of `descriptions/quic-v1.yaml`, which is also the description
//! used for the traces this crate writes. Each protocol version gets its own
//! file, and several can be loaded side by side in a [`DescriptionSet`].

mod description;
mod interpret;
mod render;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

pub use description::{load_description, ProtocolDescription};
pub use interpret::{dissect, DissectedNode, NodeValue, UNDISSECTED};
pub use render::{format_range, format_value, render_html, render_text};

use crate::traces::{escape_html, Trace};

pub const QUIC_V1_YAML: &str = include_str!("../../descriptions/quic-v1.yaml");

/// Parameter naming the destination connection ID length of short headers.
pub const SHORT_DCID_LEN: &str = "short_dcid_len";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DescriptionError {
    #[error("malformed description: {0}")]
    Yaml(String),
    #[error("{location}: {message}")]
    Invalid { location: String, message: String },
}

impl ProtocolDescription {
    /// The shipped QUIC version 1 description.
    pub fn quic_v1() -> Self {
        load_description(QUIC_V1_YAML).expect("shipped description is valid")
    }
}

/// Descriptions keyed by version tag.
#[derive(Debug, Clone)]
pub struct DescriptionSet {
    by_version: BTreeMap<String, ProtocolDescription>,
    fallback: String,
}

impl DescriptionSet {
    pub fn new(fallback: ProtocolDescription) -> Self {
        let tag = fallback.version.clone();
        DescriptionSet { by_version: BTreeMap::from([(tag.clone(), fallback)]), fallback: tag }
    }

    pub fn builtin() -> Self {
        Self::new(ProtocolDescription::quic_v1())
    }

    /// Adds or replaces the description for its version tag.
    pub fn insert(&mut self, desc: ProtocolDescription) {
        self.by_version.insert(desc.version.clone(), desc);
    }

    pub fn get(&self, version: &str) -> Option<&ProtocolDescription> {
        self.by_version.get(version)
    }

    pub fn versions(&self) -> impl Iterator<Item = &str> {
        self.by_version.keys().map(String::as_str)
    }

    /// Picks the description for a packet by the version field of a long
    /// header, written as decimal or `0x` hex in the tag. Short headers,
    /// Version Negotiation and unknown versions use the fallback.
    pub fn for_packet(&self, bytes: &[u8]) -> &ProtocolDescription {
        let version = match bytes {
            [first, a, b, c, d, ..] if first & 0x80 != 0 => u32::from_be_bytes([*a, *b, *c, *d]),
            _ => 0,
        };
        let decimal = version.to_string();
        let hex = format!("0x{version:08x}");
        [decimal, hex]
            .iter()
            .find_map(|tag| self.by_version.get(tag))
            .filter(|_| version != 0)
            .unwrap_or(&self.by_version[&self.fallback])
    }

    pub fn dissect(&self, bytes: &[u8], short_dcid_len: u8) -> DissectedNode {
        dissect(bytes, self.for_packet(bytes), &[(SHORT_DCID_LEN, u64::from(short_dcid_len))])
    }
}

const PAGE_STYLE: &str = "body{font-family:sans-serif;margin:1em}\
pre,ul.dissection{font-family:monospace;font-size:90%}\
ul.dissection,ul.dissection ul{list-style:none;padding-left:1.2em}\
.range{color:#777}.error{color:#b00}.undissected{color:#a60}\
.packet{border-top:1px solid #ccc;margin-top:1em}";

/// A self-contained HTML page for one trace with every packet dissected.
pub fn render_trace_page(trace: &Trace, descriptions: &DescriptionSet) -> String {
    let title = format!("{} / {}", trace.target.name, trace.scenario);
    let meaning = crate::scenarios::describe(&trace.scenario, trace.error_code).unwrap_or("unknown code");
    let mut html = String::new();
    let _ = write!(
        html,
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{t}</title><style>{PAGE_STYLE}</style>\
         </head><body>\n<h1>{t}</h1>\n<p>{date}, {host}:{port}, error code <b>{code}</b>: {meaning}</p>\n",
        t = escape_html(&title),
        date = escape_html(&trace.run_date()),
        host = escape_html(&trace.target.host),
        port = trace.target.port,
        code = trace.error_code,
        meaning = escape_html(meaning),
    );
    let results = serde_json::to_string_pretty(&trace.results).unwrap_or_default();
    let _ = write!(html, "<h2>Results</h2>\n<pre>{}</pre>\n<h2>Packets</h2>\n", escape_html(&results));
    for (i, p) in trace.packets.iter().enumerate() {
        let _ = write!(
            html,
            "<div class=\"packet\"><p>#{i} {dir:?} at {ms} ms, {level}, connection {conn}</p>",
            dir = p.direction,
            ms = p.timestamp_ms,
            level = p.level,
            conn = p.connection,
        );
        match p.cleartext() {
            Some(bytes) => html.push_str(&render_html(&descriptions.dissect(&bytes, p.dcid_len))),
            None => html.push_str("<p class=\"error\">cleartext is not valid hex</p>"),
        }
        html.push_str("</div>\n");
    }
    html.push_str("</body></html>\n");
    html
}

#[cfg(test)]
mod tests;
