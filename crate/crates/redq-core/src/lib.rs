//! Deterministic discrete-event simulator and verifier for redundant-request
//! queueing systems.
//!
//! A request ("batch") of `r` jobs is served by any `k` of `n` servers; the
//! crate simulates the centralized-buffer and per-server-buffer variants of
//! that model, classifies service laws as heavy- or light-everywhere, replays
//! coupled event sequences to check sample-path dominance, and ships the
//! experiment presets behind the `redq` CLI.

pub mod config;
pub mod coupling;
pub mod dist;
pub mod engine;
pub mod experiments;
pub mod metrics;
pub mod model;
pub mod queue;
pub mod runner;
pub mod streams;
pub mod workload;

pub use config::{BufferMode, Horizon, SystemConfig};
pub use dist::{ClassGrid, ClassReport, EverywhereVerdict, MinOfNMethod, ServiceDistribution};
pub use metrics::LatencyStats;
pub use model::{BatchId, BatchSpec, ServerId, ServerSet, StepRecord};
