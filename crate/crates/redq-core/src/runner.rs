//! Drives one or more replications of a configured system and collects
//! per-replication measurements.
//!
//! Open runs discard the first 10% of departures as warm-up; saturated runs
//! measure only the first 80% of the backlog so the 100%-utilization premise
//! holds over the whole measured window. Occupancy is accumulated as
//! time-at-level over the measured window.

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{BufferMode, Horizon, SystemConfig};
use crate::metrics::{self, LatencyStats, MetricsError};
use crate::model::{BatchSpec, ModelError, StepKind, StepRecord, StreamDraws};
use crate::queue::{CentralSystem, DistributedSystem, QueueSystem};
use crate::streams::{stream_rng, StreamKind};
use crate::workload::{sample_eligible_set, ArrivalStream, LoadRegime};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Measurements from one replication, over its measured window.
#[derive(Debug, Clone)]
pub struct ReplicationResult {
    pub retained_departures: u64,
    pub total_departures: u64,
    /// Mean latency of retained departures (NaN when none departed).
    pub mean_latency: f64,
    /// Retained departures per unit time of the measured window.
    pub throughput: f64,
    /// Length of the measured window.
    pub window: f64,
    /// Time spent with exactly `level` batches in the system.
    pub time_at_level: Vec<f64>,
    pub end_time: f64,
    pub latencies: Option<Vec<f64>>,
}

impl ReplicationResult {
    pub fn occupancy_mean(&self) -> f64 {
        if self.window <= 0.0 {
            return 0.0;
        }
        self.time_at_level
            .iter()
            .enumerate()
            .map(|(level, &t)| level as f64 * t)
            .sum::<f64>()
            / self.window
    }

    /// Complementary CDF `P(B > x)` of the time-averaged occupancy.
    pub fn occupancy_ccdf(&self) -> Vec<f64> {
        metrics::ccdf_from_time_at_level(&self.time_at_level, self.window)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub trace: bool,
    pub keep_latencies: bool,
}

/// Per-batch request-degree and eligible-set generator.
struct SpecGen {
    cfg_r: crate::workload::RequestDegreePolicy,
    m: Option<u32>,
    n: u32,
    eligibility_rng: rand_chacha::ChaCha8Rng,
    next_index: u64,
}

impl SpecGen {
    fn new(cfg: &SystemConfig, replication: u64) -> Self {
        Self {
            cfg_r: cfg.request_degree.clone(),
            m: cfg.m,
            n: cfg.n,
            eligibility_rng: stream_rng(cfg.seed, replication, StreamKind::Eligibility),
            next_index: 0,
        }
    }

    fn next(&mut self) -> BatchSpec {
        let r = self.cfg_r.degree_for(self.next_index);
        self.next_index += 1;
        let eligible = match self.m {
            Some(m) if m < self.n => sample_eligible_set(m, self.n, &mut self.eligibility_rng),
            _ => crate::model::ServerSet::full(self.n),
        };
        BatchSpec { r, eligible }
    }
}

/// Run one replication. The replication index seeds all rng streams together
/// with the config seed.
pub fn run_replication(
    cfg: &SystemConfig,
    replication: u64,
    opts: RunOptions,
) -> Result<(ReplicationResult, Option<Vec<StepRecord>>), RunError> {
    let draws = StreamDraws::new(
        cfg.service.clone(),
        cfg.removal.clone(),
        cfg.n,
        cfg.seed,
        replication,
    );
    match cfg.buffer_mode {
        BufferMode::Central => {
            let mut sys = CentralSystem::new(cfg.n, cfg.k, draws)?;
            drive(&mut sys, cfg, replication, opts)
        }
        BufferMode::Distributed => {
            let mut sys = DistributedSystem::new(
                cfg.n,
                cfg.k,
                draws,
                cfg.dispatch,
                cfg.seed,
                replication,
            )?;
            drive(&mut sys, cfg, replication, opts)
        }
    }
}

fn drive<S: QueueSystem>(
    sys: &mut S,
    cfg: &SystemConfig,
    replication: u64,
    opts: RunOptions,
) -> Result<(ReplicationResult, Option<Vec<StepRecord>>), RunError> {
    let mut specs = SpecGen::new(cfg, replication);
    let mut arrivals = ArrivalStream::new(
        cfg.arrivals.clone(),
        stream_rng(cfg.seed, replication, StreamKind::Arrivals),
    );

    // (target retained departures, warm-up discard count)
    let (stop_at_departures, warm) = match cfg.regime {
        LoadRegime::Saturated { backlog } => {
            for _ in 0..backlog {
                sys.schedule_arrival(0.0, specs.next())?;
            }
            let measured = (f64::from(backlog) * 0.8).ceil() as u64;
            (Some(measured.max(1)), 0)
        }
        LoadRegime::Open => {
            if let Some(t) = arrivals.next_arrival() {
                sys.schedule_arrival(t, specs.next())?;
            }
            match cfg.horizon {
                Horizon::Batches(b) => (Some(b), b / 10),
                Horizon::Time(_) => (None, 0), // warm-up applied post hoc by count
            }
        }
    };
    let time_cutoff = match (cfg.regime, cfg.horizon) {
        (LoadRegime::Open, Horizon::Time(t)) => Some(t),
        _ => None,
    };

    let mut trace = if opts.trace { Some(Vec::new()) } else { None };
    let mut latencies: Vec<f64> = Vec::new();
    let mut departures = 0u64;
    let mut time_at_level: Vec<f64> = Vec::new();
    let mut prev_level = 0u64;
    let mut last_time = 0.0f64;
    let mut window_start = 0.0f64;
    let mut window_end = 0.0f64;
    let mut latency_sum = 0.0f64;

    loop {
        if let Some(stop) = stop_at_departures {
            if departures >= stop {
                break;
            }
        }
        if let Some(cutoff) = time_cutoff {
            match sys.peek_time() {
                Some(t) if t > cutoff => {
                    accumulate(&mut time_at_level, prev_level, cutoff - last_time);
                    last_time = cutoff;
                    break;
                }
                None => break,
                _ => {}
            }
        }
        let Some(rec) = sys.step()? else {
            break;
        };
        accumulate(&mut time_at_level, prev_level, rec.time - last_time);
        prev_level = rec.in_system;
        last_time = rec.time;

        if rec.kind == StepKind::Arrival {
            if let Some(t) = arrivals.next_arrival() {
                sys.schedule_arrival(t, specs.next())?;
            }
        }
        if let Some(dep) = rec.departure {
            departures += 1;
            if departures <= warm {
                // Warm-up boundary: restart the measured window here.
                if departures == warm {
                    window_start = rec.time;
                    time_at_level.clear();
                    // the system stays at its current level from this instant
                }
            } else {
                latency_sum += dep.latency();
                latencies.push(dep.latency());
                window_end = rec.time;
            }
        }
        if let Some(t) = trace.as_mut() {
            t.push(rec);
        }
    }

    // For time horizons the warm-up is a post-hoc count discard; the
    // occupancy window stays the full run.
    let retained: Vec<f64> = if time_cutoff.is_some() {
        let cut = latencies.len() / 10;
        window_end = last_time;
        latencies.drain(..cut);
        latency_sum = latencies.iter().sum();
        latencies.clone()
    } else {
        latencies
    };

    if window_end <= window_start {
        window_end = last_time;
    }
    let window = (window_end - window_start).max(0.0);
    // Drop the time-at-level tail beyond the window end (only relevant for
    // departure-count stops, where trailing events were not simulated).
    let retained_count = retained.len() as u64;
    let mean_latency = if retained_count > 0 {
        latency_sum / retained_count as f64
    } else {
        f64::NAN
    };
    let throughput = if window > 0.0 {
        retained_count as f64 / window
    } else {
        0.0
    };

    let result = ReplicationResult {
        retained_departures: retained_count,
        total_departures: departures,
        mean_latency,
        throughput,
        window,
        time_at_level,
        end_time: last_time,
        latencies: opts.keep_latencies.then_some(retained),
    };
    Ok((result, trace))
}

/// Header of the trace CSV; distributed mode appends the acting server's own
/// queue length.
pub fn trace_csv_header(mode: BufferMode) -> &'static str {
    match mode {
        BufferMode::Central => "event_seq,time,kind,server_id,batch_id,buffer_len,in_system",
        BufferMode::Distributed => {
            "event_seq,time,kind,server_id,batch_id,buffer_len,in_system,buffer_of_server"
        }
    }
}

pub fn trace_csv_row(rec: &StepRecord, mode: BufferMode) -> String {
    let opt = |v: Option<String>| v.unwrap_or_default();
    let mut row = format!(
        "{seq},{time},{kind},{server},{batch},{buf},{live}",
        seq = rec.seq,
        time = rec.time,
        kind = rec.kind.as_str(),
        server = opt(rec.server.map(|s| s.to_string())),
        batch = opt(rec.batch.map(|b| b.to_string())),
        buf = rec.buffer_len,
        live = rec.in_system,
    );
    if mode == BufferMode::Distributed {
        row.push(',');
        row.push_str(&opt(rec.buffer_of_server.map(|b| b.to_string())));
    }
    row
}

fn accumulate(time_at_level: &mut Vec<f64>, level: u64, dt: f64) {
    if dt <= 0.0 {
        return;
    }
    let idx = level as usize;
    if time_at_level.len() <= idx {
        time_at_level.resize(idx + 1, 0.0);
    }
    time_at_level[idx] += dt;
}

/// Run all replications (in parallel) and pool them.
pub fn run(cfg: &SystemConfig) -> Result<LatencyStats, RunError> {
    let results = run_replications(cfg)?;
    Ok(metrics::summarize(&results)?)
}

pub fn run_replications(cfg: &SystemConfig) -> Result<Vec<ReplicationResult>, RunError> {
    (0..u64::from(cfg.replications))
        .into_par_iter()
        .map(|rep| run_replication(cfg, rep, RunOptions::default()).map(|(r, _)| r))
        .collect()
}
