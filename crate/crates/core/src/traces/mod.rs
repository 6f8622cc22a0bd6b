//! Trace data model, persistence and postprocessing.
//!
//! A corpus is a directory with one subdirectory per run date (UTC) and one
//! JSON file per (target, scenario) inside it.

mod grid;
pub mod metrics;
mod model;
mod store;

pub(crate) use grid::escape_html;
pub use grid::{render_grid, Grid, GridCell, GridRow};
pub use metrics::Outcome;
pub use model::{PacketDirection, PacketLog, PacketRecord, TargetInfo, Trace, TRACE_FORMAT};
pub use store::{
    read_corpus, read_trace, trace_path, write_trace, Corpus, CorpusEntry, CorpusWarning,
    TraceError,
};
