//! Shared fixtures for the criterion benchmarks.

use redq_core::config::SystemConfig;

/// M/M/1-equivalent open system (n=4, k=1, r=4), one replication.
pub fn mm1_like(batches: u64) -> SystemConfig {
    SystemConfig::from_json(&format!(
        r#"{{"n":4,"k":1,"request_degree":4,"service":"exp(1)","arrivals":"poisson(2)",
            "replications":1,"horizon":{{"batches":{batches}}},"seed":1}}"#
    ))
    .expect("valid bench config")
}

/// General-k sweep point of the latency figures (n=10, k=5, r=8).
pub fn fig_like(batches: u64) -> SystemConfig {
    SystemConfig::from_json(&format!(
        r#"{{"n":10,"k":5,"request_degree":8,"service":"exp(1)","arrivals":"poisson(1.5)",
            "replications":1,"horizon":{{"batches":{batches}}},"seed":1}}"#
    ))
    .expect("valid bench config")
}
