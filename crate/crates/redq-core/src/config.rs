//! Simulation configuration: JSON loading, defaults, and validation.
//!
//! Config files are JSON objects with the keys
//! `n, k, request_degree, buffer_mode, service, removal, arrivals, regime,
//! m, seed, replications, horizon` (plus the optional `dispatch` policy for
//! distributed buffers). Distributions use the compact syntax (`exp(1)`), the
//! regime is `open` or `saturated(B0)`, and `request_degree` is a number or a
//! per-batch list.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::dist::ServiceDistribution;
use crate::model::MAX_SERVERS;
use crate::queue::DispatchPolicy;
use crate::workload::{ArrivalProcess, LoadRegime, RequestDegreePolicy};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {key}: {constraint}")]
    Validation { key: &'static str, constraint: String },
}

fn invalid(key: &'static str, constraint: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        key,
        constraint: constraint.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BufferMode {
    Central,
    Distributed,
}

impl fmt::Display for BufferMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BufferMode::Central => write!(f, "central"),
            BufferMode::Distributed => write!(f, "distributed"),
        }
    }
}

/// Run length: a departure count or a simulated-time cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Batches(u64),
    Time(f64),
}

impl Serialize for Horizon {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(1))?;
        match self {
            Horizon::Batches(b) => map.serialize_entry("batches", b)?,
            Horizon::Time(t) => map.serialize_entry("time", t)?,
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Horizon {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Bare(u64),
            Keyed { batches: Option<u64>, time: Option<f64> },
        }
        match Repr::deserialize(deserializer)? {
            Repr::Bare(b) => Ok(Horizon::Batches(b)),
            Repr::Keyed { batches: Some(b), time: None } => Ok(Horizon::Batches(b)),
            Repr::Keyed { batches: None, time: Some(t) } => Ok(Horizon::Time(t)),
            _ => Err(D::Error::custom("horizon needs exactly one of `batches` or `time`")),
        }
    }
}

mod degree_serde {
    use super::*;

    pub fn serialize<S: Serializer>(
        policy: &RequestDegreePolicy,
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        match policy {
            RequestDegreePolicy::Fixed(r) => serializer.serialize_u32(*r),
            RequestDegreePolicy::PerBatchList(list) => list.serialize(serializer),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> Result<RequestDegreePolicy, D::Error> {
        use serde::de::Error;
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Fixed(u32),
            List(Vec<u32>),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Fixed(r) => Ok(RequestDegreePolicy::Fixed(r)),
            Repr::List(list) if !list.is_empty() => Ok(RequestDegreePolicy::PerBatchList(list)),
            Repr::List(_) => Err(D::Error::custom("request_degree list must be nonempty")),
        }
    }
}

fn default_removal() -> ServiceDistribution {
    ServiceDistribution::zero()
}

fn default_buffer_mode() -> BufferMode {
    BufferMode::Central
}

fn default_regime() -> LoadRegime {
    LoadRegime::Open
}

fn default_replications() -> u32 {
    5
}

fn default_horizon() -> Horizon {
    Horizon::Batches(100_000)
}

/// Fully resolved simulation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub n: u32,
    pub k: u32,
    #[serde(with = "degree_serde")]
    pub request_degree: RequestDegreePolicy,
    #[serde(default = "default_buffer_mode")]
    pub buffer_mode: BufferMode,
    #[serde(default)]
    pub dispatch: DispatchPolicy,
    pub service: ServiceDistribution,
    #[serde(default = "default_removal")]
    pub removal: ServiceDistribution,
    #[serde(default)]
    pub arrivals: ArrivalProcess,
    #[serde(default = "default_regime")]
    pub regime: LoadRegime,
    /// Size of the per-batch eligible server subset; absent means all n.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<u32>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: u32,
    #[serde(default = "default_horizon")]
    pub horizon: Horizon,
}

impl SystemConfig {
    /// Load and fully validate a config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: SystemConfig =
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// The effective per-batch eligible pool size.
    pub fn eligible_limit(&self) -> u32 {
        self.m.unwrap_or(self.n)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k < 1 {
            return Err(invalid("k", "k must be at least 1"));
        }
        if self.n < self.k {
            return Err(invalid("k", format!("k exceeds n ({} > {})", self.k, self.n)));
        }
        if self.n > MAX_SERVERS {
            return Err(invalid("n", format!("n must be at most {MAX_SERVERS}")));
        }
        if let Some(m) = self.m {
            if m > self.n {
                return Err(invalid("m", format!("eligible set exceeds n ({m} > {})", self.n)));
            }
            if m < self.k {
                return Err(invalid("m", format!("eligible set smaller than k ({m} < {})", self.k)));
            }
        }
        self.request_degree
            .validate(self.k, self.eligible_limit())
            .map_err(|e| match e {
                crate::workload::WorkloadError::InvalidRequestDegree { r, .. } if r > self.eligible_limit() => {
                    invalid("request_degree", format!("request degree exceeds eligible set ({r} > {})", self.eligible_limit()))
                }
                crate::workload::WorkloadError::InvalidRequestDegree { r, k, .. } => {
                    invalid("request_degree", format!("request degree below k ({r} < {k})"))
                }
                other => invalid("request_degree", other.to_string()),
            })?;
        self.service
            .validate()
            .map_err(|e| invalid("service", e.to_string()))?;
        if self.service.mean() <= 0.0 {
            return Err(invalid("service", "service law must have positive mean"));
        }
        self.removal
            .validate()
            .map_err(|e| invalid("removal", e.to_string()))?;
        self.arrivals
            .validate()
            .map_err(|e| invalid("arrivals", e.to_string()))?;
        match self.regime {
            LoadRegime::Open => {
                if self.arrivals == ArrivalProcess::None {
                    return Err(invalid("arrivals", "open regime requires an arrival process"));
                }
            }
            LoadRegime::Saturated { backlog } => {
                if backlog == 0 {
                    return Err(invalid("regime", "saturated backlog must be at least 1"));
                }
                if self.arrivals != ArrivalProcess::None {
                    return Err(invalid(
                        "arrivals",
                        "saturated regime forbids an arrival process (arrivals must be `none`)",
                    ));
                }
            }
        }
        if self.replications < 1 {
            return Err(invalid("replications", "at least one replication required"));
        }
        match self.horizon {
            Horizon::Batches(0) => {
                return Err(invalid("horizon", "batch horizon must be positive"));
            }
            Horizon::Time(t) if !(t > 0.0 && t.is_finite()) => {
                return Err(invalid("horizon", "time horizon must be positive and finite"));
            }
            _ => {}
        }
        Ok(())
    }
}
