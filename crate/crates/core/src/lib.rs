//! Active black-box conformance testing for QUIC servers.
//!
//! The crate is organised as a toolbox plus the machinery built on it:
//!
//! * [`wire`]: varints, headers, frames and transport parameters.
//! * [`protection`]: Initial key schedule, packet protection and the
//!   handshake-provider boundary.
//! * [`conn`]: the per-connection event bus and the composable client agents.
//! * [`scenarios`]: conformance scenarios and the suite runner.
//! * [`traces`]: trace files, postprocess metrics and the results grid.
//! * [`dissector`]: a packet dissector driven by YAML protocol descriptions.
//! * [`faultsrv`]: a small QUIC responder with injectable faults.

pub mod conn;
pub mod dissector;
pub mod faultsrv;
pub mod protection;
pub mod scenarios;
pub mod traces;
pub mod wire;
