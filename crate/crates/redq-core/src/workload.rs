//! Arrival processes, load regimes, per-batch request degrees, and
//! eligible-server sampling.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::model::{ServerId, ServerSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkloadError {
    #[error("cannot parse arrival spec `{spec}`: {reason}")]
    Parse { spec: String, reason: String },
    #[error("arrival trace line {line}: {reason}")]
    TraceLine { line: usize, reason: String },
    #[error("invalid request degree {r} for batch {batch}: must satisfy {k} <= r <= {limit}")]
    InvalidRequestDegree { r: u32, batch: u64, k: u32, limit: u32 },
}

/// How batches enter the system. Arrivals are generated independently of the
/// system state.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ArrivalProcess {
    Poisson {
        rate: f64,
    },
    Deterministic {
        interval: f64,
    },
    /// Fixed, sorted list of arrival times.
    Trace(Vec<f64>),
    /// No arrivals; used only with a saturated backlog.
    #[default]
    None,
}

impl ArrivalProcess {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let err = |reason: String| WorkloadError::Parse {
            spec: self.to_string(),
            reason,
        };
        match self {
            ArrivalProcess::Poisson { rate } => {
                if !rate.is_finite() || *rate <= 0.0 {
                    return Err(err(format!("rate must be positive, got {rate}")));
                }
            }
            ArrivalProcess::Deterministic { interval } => {
                if !interval.is_finite() || *interval <= 0.0 {
                    return Err(err(format!("interval must be positive, got {interval}")));
                }
            }
            ArrivalProcess::Trace(times) => {
                let mut last = 0.0f64;
                for (i, &t) in times.iter().enumerate() {
                    if !t.is_finite() || t < 0.0 {
                        return Err(WorkloadError::TraceLine {
                            line: i + 1,
                            reason: format!("time must be a nonnegative number, got {t}"),
                        });
                    }
                    if t < last {
                        return Err(WorkloadError::TraceLine {
                            line: i + 1,
                            reason: format!("times must be non-decreasing, {t} after {last}"),
                        });
                    }
                    last = t;
                }
            }
            ArrivalProcess::None => {}
        }
        Ok(())
    }

    /// Poisson rate when the process has one.
    pub fn rate(&self) -> Option<f64> {
        match self {
            ArrivalProcess::Poisson { rate } => Some(*rate),
            _ => None,
        }
    }
}

impl fmt::Display for ArrivalProcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArrivalProcess::Poisson { rate } => write!(f, "poisson({rate})"),
            ArrivalProcess::Deterministic { interval } => write!(f, "deterministic({interval})"),
            ArrivalProcess::Trace(times) => write!(f, "trace[{} times]", times.len()),
            ArrivalProcess::None => write!(f, "none"),
        }
    }
}

impl FromStr for ArrivalProcess {
    type Err = WorkloadError;

    /// `poisson(rate)`, `deterministic(interval)`, `none`, or
    /// `trace(<path>)`, which reads a one-time-per-line file.
    fn from_str(s: &str) -> Result<Self, WorkloadError> {
        let spec = s.trim();
        let err = |reason: &str| WorkloadError::Parse {
            spec: spec.to_string(),
            reason: reason.to_string(),
        };
        if spec == "none" {
            return Ok(ArrivalProcess::None);
        }
        let (name, rest) = spec.split_once('(').ok_or_else(|| {
            err("expected `poisson(rate)`, `deterministic(interval)`, `trace(path)`, or `none`")
        })?;
        let body = rest
            .strip_suffix(')')
            .ok_or_else(|| err("missing closing parenthesis"))?;
        if name.trim() == "trace" {
            let text = std::fs::read_to_string(body.trim())
                .map_err(|e| err(&format!("cannot read trace file `{}`: {e}", body.trim())))?;
            return Ok(ArrivalProcess::Trace(parse_trace(&text)?));
        }
        let value: f64 = body
            .trim()
            .parse()
            .map_err(|_| err(&format!("`{body}` is not a number")))?;
        let process = match name.trim() {
            "poisson" => ArrivalProcess::Poisson { rate: value },
            "deterministic" => ArrivalProcess::Deterministic { interval: value },
            other => return Err(err(&format!("unknown arrival process `{other}`"))),
        };
        process.validate()?;
        Ok(process)
    }
}

impl Serialize for ArrivalProcess {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            ArrivalProcess::Trace(times) => times.serialize(serializer),
            other => serializer.collect_str(other),
        }
    }
}

impl<'de> Deserialize<'de> for ArrivalProcess {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Spec(String),
            Times(Vec<f64>),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Spec(s) => s.parse().map_err(D::Error::custom),
            Repr::Times(times) => {
                let p = ArrivalProcess::Trace(times);
                p.validate().map_err(D::Error::custom)?;
                Ok(p)
            }
        }
    }
}

/// Parse the arrival trace file format: one nonnegative decimal time per
/// line, sorted; blank lines and `#` comments are ignored.
pub fn parse_trace(text: &str) -> Result<Vec<f64>, WorkloadError> {
    let mut times = Vec::new();
    let mut last = 0.0f64;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let v: f64 = t.parse().map_err(|_| WorkloadError::TraceLine {
            line,
            reason: format!("`{t}` is not a number"),
        })?;
        if !v.is_finite() || v < 0.0 {
            return Err(WorkloadError::TraceLine {
                line,
                reason: format!("time must be a nonnegative number, got {v}"),
            });
        }
        if v < last {
            return Err(WorkloadError::TraceLine {
                line,
                reason: format!("times must be non-decreasing, {v} after {last}"),
            });
        }
        last = v;
        times.push(v);
    }
    Ok(times)
}

/// Stateful arrival-time generator over one replication.
pub struct ArrivalStream<R: Rng> {
    process: ArrivalProcess,
    rng: R,
    last_time: f64,
    index: usize,
}

impl<R: Rng> ArrivalStream<R> {
    pub fn new(process: ArrivalProcess, rng: R) -> Self {
        Self {
            process,
            rng,
            last_time: 0.0,
            index: 0,
        }
    }

    /// Next arrival time, or `None` when the process is exhausted.
    pub fn next_arrival(&mut self) -> Option<f64> {
        match &self.process {
            ArrivalProcess::Poisson { rate } => {
                let gap = -(1.0 - self.rng.gen::<f64>()).ln() / rate;
                self.last_time += gap;
                Some(self.last_time)
            }
            ArrivalProcess::Deterministic { interval } => {
                self.last_time += interval;
                Some(self.last_time)
            }
            ArrivalProcess::Trace(times) => {
                let t = times.get(self.index).copied()?;
                self.index += 1;
                Some(t)
            }
            ArrivalProcess::None => None,
        }
    }
}

/// Open system fed by arrivals, or a pre-loaded backlog with no arrivals
/// (the 100%-utilization regime of the saturated experiments).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadRegime {
    Open,
    Saturated { backlog: u32 },
}

impl Serialize for LoadRegime {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LoadRegime {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl LoadRegime {
    pub fn is_saturated(&self) -> bool {
        matches!(self, LoadRegime::Saturated { .. })
    }
}

impl fmt::Display for LoadRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadRegime::Open => write!(f, "open"),
            LoadRegime::Saturated { backlog } => write!(f, "saturated({backlog})"),
        }
    }
}

impl FromStr for LoadRegime {
    type Err = WorkloadError;

    fn from_str(s: &str) -> Result<Self, WorkloadError> {
        let spec = s.trim();
        if spec == "open" {
            return Ok(LoadRegime::Open);
        }
        if let Some(rest) = spec.strip_prefix("saturated(") {
            if let Some(body) = rest.strip_suffix(')') {
                let backlog: u32 = body.trim().parse().map_err(|_| WorkloadError::Parse {
                    spec: spec.to_string(),
                    reason: format!("`{body}` is not a batch count"),
                })?;
                if backlog == 0 {
                    return Err(WorkloadError::Parse {
                        spec: spec.to_string(),
                        reason: "backlog must be at least 1".into(),
                    });
                }
                return Ok(LoadRegime::Saturated { backlog });
            }
        }
        Err(WorkloadError::Parse {
            spec: spec.to_string(),
            reason: "expected `open` or `saturated(B0)`".into(),
        })
    }
}

/// Uniformly random `m`-subset of `0..n`, fresh per batch.
pub fn sample_eligible_set<R: Rng>(m: u32, n: u32, rng: &mut R) -> ServerSet {
    assert!(m <= n, "eligible subset larger than the system");
    if m == n {
        return ServerSet::full(n);
    }
    // Partial Fisher-Yates: the first m slots are a uniform m-subset.
    let mut ids: Vec<ServerId> = (0..n).collect();
    for i in 0..m as usize {
        let j = rng.gen_range(i..n as usize);
        ids.swap(i, j);
    }
    ids[..m as usize].iter().copied().collect()
}

/// Request degree per batch: one fixed value, or an explicit per-batch list
/// (cycled past its end).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RequestDegreePolicy {
    Fixed(u32),
    PerBatchList(Vec<u32>),
}

impl RequestDegreePolicy {
    pub fn degree_for(&self, batch_index: u64) -> u32 {
        match self {
            RequestDegreePolicy::Fixed(r) => *r,
            RequestDegreePolicy::PerBatchList(list) => list[(batch_index % list.len() as u64) as usize],
        }
    }

    /// Every degree this policy can produce.
    pub fn degrees(&self) -> Vec<u32> {
        match self {
            RequestDegreePolicy::Fixed(r) => vec![*r],
            RequestDegreePolicy::PerBatchList(list) => list.clone(),
        }
    }

    /// Check `k <= r <= limit` for every degree the policy can emit.
    pub fn validate(&self, k: u32, limit: u32) -> Result<(), WorkloadError> {
        for (i, r) in self.degrees().into_iter().enumerate() {
            if r < k || r > limit {
                return Err(WorkloadError::InvalidRequestDegree {
                    r,
                    batch: i as u64,
                    k,
                    limit,
                });
            }
        }
        Ok(())
    }
}
