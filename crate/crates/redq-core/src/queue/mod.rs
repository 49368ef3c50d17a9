//! The two queue models: one common infinite buffer, or one FIFO buffer per
//! server. Both serve batches of `r` jobs k-of-r on distinct servers with
//! FCFS job assignment and sibling removal.

pub mod central;
pub mod distributed;

pub use central::CentralSystem;
pub use distributed::{DispatchPolicy, DistributedSystem};

use crate::model::{BatchSpec, ModelError, StepRecord};

/// Driver-facing surface shared by both buffer modes.
pub trait QueueSystem {
    /// Enqueue an arrival event; the batch is created when the event fires.
    fn schedule_arrival(&mut self, time: f64, spec: BatchSpec) -> Result<(), ModelError>;

    /// Dispatch the next event. `Ok(None)` when the event set is exhausted.
    fn step(&mut self) -> Result<Option<StepRecord>, ModelError>;

    /// Time of the next pending event.
    fn peek_time(&mut self) -> Option<f64>;

    fn now(&self) -> f64;

    /// Live batches currently in the system.
    fn in_system(&self) -> u64;

    fn n(&self) -> u32;
}

pub(crate) fn check_degree(r: u32, k: u32, limit: u32) -> Result<(), ModelError> {
    if r < k || r > limit {
        return Err(ModelError::InvalidRequestDegree { r, k, limit });
    }
    Ok(())
}
