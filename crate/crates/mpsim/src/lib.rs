//! Deterministic packet-level simulator for multipath transport.
//!
//! The crate models hosts, drop-tail bottleneck links, TCP-like flows and
//! multipath connections at packet granularity on a discrete-event engine.
//! It ships a bandwidth-coupled BBR variant and an adaptive
//! redundancy/arrival-prediction scheduler next to the classic baselines
//! (NewReno, BBR, LIA/OLIA/BALIA; round-robin, min-RTT, redundant), plus a
//! scenario/preset harness that writes machine-readable results.

pub mod cc;
pub mod conn;
pub mod engine;
pub mod metrics;
pub mod net;
pub mod presets;
pub mod rng;
pub mod runner;
pub mod scenario;
pub mod sched;
pub mod time;

pub use engine::{Engine, EventHandle};
pub use rng::{RandomSource, StreamId};
pub use time::SimTime;
