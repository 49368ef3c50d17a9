//! Pooled statistics over independent replications, occupancy-distribution
//! dominance checks, and policy comparison sweeps.
//!
//! Confidence intervals are Student-t over replication means, never over
//! within-run autocorrelated samples.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::config::SystemConfig;
use crate::runner::{self, ReplicationResult, RunError};
use crate::workload::RequestDegreePolicy;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no replications to summarize")]
    Empty,
    #[error("confidence interval needs at least 2 replications, got {got}")]
    InsufficientReplications { got: usize },
}

/// Pooled latency/throughput/occupancy statistics.
#[derive(Debug, Clone, Serialize)]
pub struct LatencyStats {
    pub replications: u32,
    /// Total retained departures across replications.
    pub departures: u64,
    /// Mean of replication means.
    pub mean_latency: f64,
    /// Sample variance across replication means.
    pub variance: f64,
    /// 95% Student-t half-width over replication means; `None` for a single
    /// replication.
    pub ci_halfwidth: Option<f64>,
    /// Retained departures per unit time, pooled over the measured windows.
    pub throughput: f64,
    /// Time-averaged number of batches in system.
    pub occupancy_mean: f64,
    /// Time-averaged `P(B > x)` for integer x, pooled across replications.
    pub occupancy_ccdf: Vec<f64>,
}

/// 95% t half-width of the mean of `means`.
pub fn t_ci_halfwidth(means: &[f64]) -> Result<f64, MetricsError> {
    if means.len() < 2 {
        return Err(MetricsError::InsufficientReplications { got: means.len() });
    }
    let n = means.len() as f64;
    let mean = means.iter().sum::<f64>() / n;
    let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Ok(0.0);
    }
    let t = StudentsT::new(0.0, 1.0, n - 1.0)
        .expect("valid t distribution")
        .inverse_cdf(0.975);
    Ok(t * (var / n).sqrt())
}

#[allow(clippy::needless_range_loop)]
pub fn ccdf_from_time_at_level(time_at_level: &[f64], window: f64) -> Vec<f64> {
    if window <= 0.0 || time_at_level.is_empty() {
        return Vec::new();
    }
    // P(B > x) = time spent above level x / window
    let mut ccdf = vec![0.0; time_at_level.len()];
    let mut above = 0.0;
    for x in (0..time_at_level.len()).rev() {
        ccdf[x] = above / window;
        above += time_at_level[x];
    }
    ccdf
}

/// Pool replication results: mean of means, t-interval, time-weighted
/// occupancy.
pub fn summarize(runs: &[ReplicationResult]) -> Result<LatencyStats, MetricsError> {
    if runs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let means: Vec<f64> = runs.iter().map(|r| r.mean_latency).collect();
    let n = means.len() as f64;
    let mean_latency = means.iter().sum::<f64>() / n;
    let variance = if runs.len() >= 2 {
        means.iter().map(|m| (m - mean_latency) * (m - mean_latency)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let ci_halfwidth = if runs.len() >= 2 {
        Some(t_ci_halfwidth(&means).expect("checked length"))
    } else {
        None
    };

    let total_window: f64 = runs.iter().map(|r| r.window).sum();
    let departures: u64 = runs.iter().map(|r| r.retained_departures).sum();
    let throughput = if total_window > 0.0 {
        departures as f64 / total_window
    } else {
        0.0
    };

    let levels = runs.iter().map(|r| r.time_at_level.len()).max().unwrap_or(0);
    let mut time_at_level = vec![0.0; levels];
    for run in runs {
        for (level, &t) in run.time_at_level.iter().enumerate() {
            time_at_level[level] += t;
        }
    }
    let occupancy_mean = if total_window > 0.0 {
        time_at_level
            .iter()
            .enumerate()
            .map(|(level, &t)| level as f64 * t)
            .sum::<f64>()
            / total_window
    } else {
        0.0
    };
    let occupancy_ccdf = ccdf_from_time_at_level(&time_at_level, total_window);

    Ok(LatencyStats {
        replications: runs.len() as u32,
        departures,
        mean_latency,
        variance,
        ci_halfwidth,
        throughput,
        occupancy_mean,
        occupancy_ccdf,
    })
}

/// Relative gap `|L - lambda * W| / L` between time-averaged occupancy and
/// throughput times mean latency; small for stable stationary runs.
pub fn littles_law_gap(stats: &LatencyStats) -> f64 {
    if stats.occupancy_mean <= 0.0 {
        return f64::INFINITY;
    }
    (stats.occupancy_mean - stats.throughput * stats.mean_latency).abs() / stats.occupancy_mean
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Dominance {
    ADominatesB,
    BDominatesA,
    Incomparable,
}

/// Pointwise ccdf comparison with additive slack. `A` dominates `B` when
/// `P_A(B > x) >= P_B(B > x) - slack` everywhere and exceeds it by more than
/// the slack somewhere; shorter ccdfs are zero-padded.
pub fn dominance_check(a: &[f64], b: &[f64], slack: f64) -> Dominance {
    let len = a.len().max(b.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let mut a_ge = true;
    let mut b_ge = true;
    let mut a_strict = false;
    let mut b_strict = false;
    for x in 0..len {
        let (pa, pb) = (at(a, x), at(b, x));
        if pa < pb - slack {
            a_ge = false;
        }
        if pb < pa - slack {
            b_ge = false;
        }
        if pa > pb + slack {
            a_strict = true;
        }
        if pb > pa + slack {
            b_strict = true;
        }
    }
    if a_ge && a_strict {
        Dominance::ADominatesB
    } else if b_ge && b_strict {
        Dominance::BDominatesA
    } else {
        Dominance::Incomparable
    }
}

#[derive(Debug, Clone)]
pub struct PolicyRow {
    pub r: u32,
    pub stats: LatencyStats,
}

/// Run the same config once per request degree, sharing arrival seeds across
/// degrees (common random numbers).
pub fn compare_policies(base: &SystemConfig, degrees: &[u32]) -> Result<Vec<PolicyRow>, RunError> {
    let mut rows = Vec::with_capacity(degrees.len());
    for &r in degrees {
        let cfg = SystemConfig {
            request_degree: RequestDegreePolicy::Fixed(r),
            ..base.clone()
        };
        let stats = runner::run(&cfg)?;
        rows.push(PolicyRow { r, stats });
    }
    Ok(rows)
}

pub const RESULTS_CSV_HEADER: &str =
    "r,regime,lambda,mean_latency,ci_halfwidth,throughput,replications,seed";

/// One results row; `lambda` and the CI column are left empty when absent.
/// `r` is a label so per-batch degree lists can be rendered too.
pub fn results_csv_row(
    r: &str,
    regime: &str,
    lambda: Option<f64>,
    stats: &LatencyStats,
    seed: u64,
) -> String {
    let lambda = lambda.map(|l| l.to_string()).unwrap_or_default();
    let ci = stats.ci_halfwidth.map(|c| c.to_string()).unwrap_or_default();
    format!(
        "{r},{regime},{lambda},{mean},{ci},{thr},{reps},{seed}",
        mean = stats.mean_latency,
        thr = stats.throughput,
        reps = stats.replications,
    )
}
