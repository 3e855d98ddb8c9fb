//! Deterministic discrete-event simulator of a single HSDPA cell.
//!
//! One end user holds a multi-flow session — a packet-voice call and a
//! concurrent TCP file download — while background users run single-flow
//! downloads. The Node-B MAC-hs queue of the multi-flow user runs one of
//! three buffer-management policies: plain FIFO, Time-Space Priority (TSP),
//! or enhanced TSP with credit-based Iub flow control. The simulator
//! measures end-to-end NRT throughput and VoIP delay against cell load.
//!
//! Start from [`config::RunConfig`] and [`sim::Simulation`] for single runs,
//! or [`experiment`] for policy/load/seed sweeps with CSV output. The
//! `examples/` directory holds one runnable example per major capability.

pub mod config;
pub mod experiment;
pub mod kernel;
pub mod metrics;
pub mod nodeb;
pub mod radio;
pub mod rnc;
pub mod sim;
pub mod traffic;
pub mod ue;

pub use config::{Policy, RunConfig};
pub use metrics::{RunOutput, RunSummary};
pub use sim::{run_once, Simulation};
