//! `redq`: run, sweep, replay, classify, reproduce, trace, validate.
//!
//! Exit codes: 0 success, 2 config error, 3 runtime error, 4 property
//! violation (a dominance replay found a violating sequence). The last one
//! exists so CI pipelines fail loudly if a dominance check ever breaks.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use redq_core::config::SystemConfig;
use redq_core::coupling::{parse_sequence, random_sequence, replay_general_k, replay_k1, ReplayOutcome};
use redq_core::dist::{classify_everywhere, ClassGrid, ServiceDistribution};
use redq_core::experiments::{self, PresetOverrides, PRESET_NAMES};
use redq_core::metrics::{self, RESULTS_CSV_HEADER};
use redq_core::runner::{self, RunOptions};
use redq_core::streams::{stream_rng, StreamKind};
use redq_core::workload::{ArrivalProcess, LoadRegime, RequestDegreePolicy};

#[derive(Parser)]
#[command(name = "redq", version, about = "Redundant-request queueing simulator and verifier")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReplayMode {
    /// k=1 coupling with the busy-first permutation (degrees r vs r2)
    K1,
    /// general-k coupling with fixed identities (degree r vs r=n)
    Generalk,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a config file and emit one results row
    Run {
        config: PathBuf,
        /// Write the CSV here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a grid of arrival rates and request degrees over a config
    Sweep {
        config: PathBuf,
        /// Comma-separated request degrees, e.g. 1,2,4
        #[arg(long, value_delimiter = ',', required = true)]
        degrees: Vec<u32>,
        /// Arrival rates: `start:end:step` or a comma list
        #[arg(long, required = true)]
        lambdas: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check sample-path dominance over random or file-provided sequences
    Replay {
        #[arg(long, value_enum)]
        mode: ReplayMode,
        #[arg(long)]
        n: u32,
        /// Jobs needed per batch (generalk mode)
        #[arg(long, default_value_t = 1)]
        k: u32,
        /// Request degree of the smaller system
        #[arg(long)]
        r: u32,
        /// Second degree for k1 mode (default n)
        #[arg(long)]
        r2: Option<u32>,
        #[arg(long, default_value_t = 10_000)]
        sequences: u64,
        #[arg(long, default_value_t = 1_000)]
        len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Check one sequence from a file (`A` / `T<i>` per line) instead
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Classify a service distribution as heavy-/light-everywhere
    Classify {
        /// Distribution spec, e.g. "mixexp(0.2:0.1,0.8:1)"
        spec: String,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
    },
    /// Re-run a named experiment preset and write its CSV
    Reproduce {
        /// One of: fig3 fig4 fig5 fig6 fig8 thm3 thm4 thm5
        preset: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        replications: Option<u32>,
        #[arg(long)]
        batches: Option<u64>,
        #[arg(long)]
        backlog: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Dump the first events of one traced replication as CSV
    Trace {
        config: PathBuf,
        #[arg(long, default_value_t = 50)]
        events: usize,
    },
    /// Load and validate a config file, echoing the resolved form
    Validate { config: PathBuf },
}

enum AppError {
    Config(String),
    Runtime(String),
    Violation(String),
}

impl AppError {
    fn code(&self) -> u8 {
        match self {
            AppError::Config(_) => 2,
            AppError::Runtime(_) => 3,
            AppError::Violation(_) => 4,
        }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Config(m) => write!(f, "config error: {m}"),
            AppError::Runtime(m) => write!(f, "runtime error: {m}"),
            AppError::Violation(m) => write!(f, "property violation: {m}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("redq: {err}");
            ExitCode::from(err.code())
        }
    }
}

fn load_config(path: &Path) -> Result<SystemConfig, AppError> {
    let mut cfg = SystemConfig::load(path).map_err(|e| AppError::Config(e.to_string()))?;
    if let Some(seed) = seed_env()? {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn seed_env() -> Result<Option<u64>, AppError> {
    experiments::seed_from_env().map_err(|e| AppError::Config(e.to_string()))
}

fn emit(out: Option<PathBuf>, content: &str) -> Result<(), AppError> {
    match out {
        Some(path) => {
            std::fs::write(&path, content).map_err(|e| AppError::Runtime(e.to_string()))?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn regime_label(cfg: &SystemConfig) -> String {
    let load = match cfg.regime {
        LoadRegime::Open => "open",
        LoadRegime::Saturated { .. } => "saturated",
    };
    format!("{}:{}", cfg.buffer_mode, load)
}

fn degree_label(cfg: &SystemConfig) -> String {
    match &cfg.request_degree {
        RequestDegreePolicy::Fixed(r) => r.to_string(),
        RequestDegreePolicy::PerBatchList(list) => list
            .iter()
            .map(u32::to_string)
            .collect::<Vec<_>>()
            .join("|"),
    }
}

fn dispatch(cmd: Cmd) -> Result<(), AppError> {
    match cmd {
        Cmd::Run { config, out } => {
            let cfg = load_config(&config)?;
            let stats = runner::run(&cfg).map_err(|e| AppError::Runtime(e.to_string()))?;
            let mut csv = String::from(RESULTS_CSV_HEADER);
            csv.push('\n');
            csv.push_str(&metrics::results_csv_row(
                &degree_label(&cfg),
                &regime_label(&cfg),
                cfg.arrivals.rate(),
                &stats,
                cfg.seed,
            ));
            csv.push('\n');
            emit(out, &csv)
        }
        Cmd::Sweep {
            config,
            degrees,
            lambdas,
            out,
        } => {
            let base = load_config(&config)?;
            if base.regime.is_saturated() {
                return Err(AppError::Config(
                    "sweep requires an open-regime config (arrival rates are swept)".into(),
                ));
            }
            let lambdas = parse_lambdas(&lambdas)?;
            let mut csv = String::from(RESULTS_CSV_HEADER);
            csv.push('\n');
            for &lambda in &lambdas {
                for &r in &degrees {
                    let mut cfg = base.clone();
                    cfg.arrivals = ArrivalProcess::Poisson { rate: lambda };
                    cfg.request_degree = RequestDegreePolicy::Fixed(r);
                    cfg.validate().map_err(|e| AppError::Config(e.to_string()))?;
                    let stats = runner::run(&cfg).map_err(|e| AppError::Runtime(e.to_string()))?;
                    csv.push_str(&metrics::results_csv_row(
                        &r.to_string(),
                        &regime_label(&cfg),
                        Some(lambda),
                        &stats,
                        cfg.seed,
                    ));
                    csv.push('\n');
                }
            }
            emit(out, &csv)
        }
        Cmd::Replay {
            mode,
            n,
            k,
            r,
            r2,
            sequences,
            len,
            seed,
            file,
        } => replay_cmd(mode, n, k, r, r2, sequences, len, seed, file),
        Cmd::Classify { spec, tolerance } => {
            let dist: ServiceDistribution =
                spec.parse().map_err(|e| AppError::Config(format!("{e}")))?;
            let grid = ClassGrid::log_default(dist.mean());
            let report = classify_everywhere(&dist, &grid, tolerance);
            println!("distribution: {dist}");
            println!("mean: {}", dist.mean());
            println!("verdict: {:?}", report.verdict);
            println!(
                "grid: {} points checked, {} skipped, tolerance {:e}",
                report.points_checked, report.points_skipped, report.tolerance
            );
            if let Some(w) = report.worst_violation {
                println!(
                    "extremal point: a={} b={} residual={} survival={} (gap {:e})",
                    w.a,
                    w.b,
                    w.lhs,
                    w.rhs,
                    w.lhs - w.rhs
                );
            }
            Ok(())
        }
        Cmd::Reproduce {
            preset,
            out,
            replications,
            batches,
            backlog,
            seed,
        } => {
            if !PRESET_NAMES.contains(&preset.as_str()) {
                return Err(AppError::Config(format!(
                    "unknown preset `{preset}` (try one of {})",
                    PRESET_NAMES.join(", ")
                )));
            }
            let csv = experiments::run_preset(
                &preset,
                PresetOverrides {
                    replications,
                    batches,
                    backlog,
                    seed,
                },
            )
            .map_err(|e| AppError::Runtime(e.to_string()))?;
            let path = out.unwrap_or_else(|| PathBuf::from(format!("{preset}.csv")));
            emit(Some(path), &csv)
        }
        Cmd::Trace { config, events } => {
            let cfg = load_config(&config)?;
            let (_, trace) = runner::run_replication(
                &cfg,
                0,
                RunOptions {
                    trace: true,
                    keep_latencies: false,
                },
            )
            .map_err(|e| AppError::Runtime(e.to_string()))?;
            let records = trace.expect("tracing was requested");
            println!("{}", runner::trace_csv_header(cfg.buffer_mode));
            for rec in records.iter().take(events) {
                println!("{}", runner::trace_csv_row(rec, cfg.buffer_mode));
            }
            Ok(())
        }
        Cmd::Validate { config } => {
            let cfg = SystemConfig::load(&config).map_err(|e| AppError::Config(e.to_string()))?;
            println!("ok: {}", cfg.to_json());
            Ok(())
        }
    }
}

fn parse_lambdas(text: &str) -> Result<Vec<f64>, AppError> {
    let bad = |m: String| AppError::Config(m);
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(bad(format!("lambda range must be start:end:step, got `{text}`")));
        }
        let nums: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad(format!("lambda range has a non-number in `{text}`")))?;
        let (start, end, step) = (nums[0], nums[1], nums[2]);
        if !(step > 0.0 && end >= start && start > 0.0) {
            return Err(bad(format!("need 0 < start <= end and step > 0 in `{text}`")));
        }
        let mut out = Vec::new();
        let mut i = 0u32;
        loop {
            let v = start + step * f64::from(i);
            if v > end + 1e-12 {
                break;
            }
            out.push(v);
            i += 1;
        }
        Ok(out)
    } else {
        let out: Vec<f64> = text
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad(format!("lambda list has a non-number in `{text}`")))?;
        if out.iter().any(|&l| l <= 0.0) {
            return Err(bad("lambdas must be positive".into()));
        }
        Ok(out)
    }
}

#[allow(clippy::too_many_arguments)]
fn replay_cmd(
    mode: ReplayMode,
    n: u32,
    k: u32,
    r: u32,
    r2: Option<u32>,
    sequences: u64,
    len: usize,
    seed: u64,
    file: Option<PathBuf>,
) -> Result<(), AppError> {
    let run_one = |events: &[redq_core::coupling::ReplayEvent]| -> Result<ReplayOutcome, AppError> {
        let out = match mode {
            ReplayMode::K1 => replay_k1(n, r, r2.unwrap_or(n), events),
            ReplayMode::Generalk => replay_general_k(n, k, r, events),
        };
        out.map_err(|e| AppError::Config(e.to_string()))
    };

    if let Some(path) = file {
        let text = std::fs::read_to_string(&path).map_err(|e| AppError::Runtime(e.to_string()))?;
        let events = parse_sequence(&text).map_err(|e| AppError::Config(e.to_string()))?;
        let out = run_one(&events)?;
        return finish_replay(1, u64::from(!out.dominates), out.first_violation, &out);
    }

    let mut rng = stream_rng(seed, 0, StreamKind::Sequence(0));
    let mut violations = 0u64;
    let mut first: Option<(usize, ReplayOutcome)> = None;
    for _ in 0..sequences {
        let events = random_sequence(n, len, &mut rng);
        let out = run_one(&events)?;
        if !out.dominates {
            violations += 1;
            if first.is_none() {
                first = Some((out.first_violation.unwrap(), out));
            }
        }
    }
    match first {
        Some((z, out)) => finish_replay(sequences, violations, Some(z), &out),
        None => finish_replay(sequences, 0, None, &ReplayOutcome {
            trace: redq_core::coupling::ReplayTrace {
                events: vec![],
                b1: vec![],
                b2: vec![],
            },
            dominates: true,
            first_violation: None,
        }),
    }
}

fn finish_replay(
    sequences: u64,
    violations: u64,
    first_violation: Option<usize>,
    outcome: &ReplayOutcome,
) -> Result<(), AppError> {
    if violations == 0 {
        println!("dominance holds: {sequences} sequence(s) checked, 0 violations");
        return Ok(());
    }
    let z = first_violation.unwrap();
    println!(
        "dominance VIOLATED in {violations}/{sequences} sequence(s); first violating index: {z}"
    );
    if !outcome.trace.events.is_empty() {
        let lo = z.saturating_sub(8);
        println!(
            "counts around the violation (from index {lo}): b1={:?} b2={:?}",
            &outcome.trace.b1[lo..=z],
            &outcome.trace.b2[lo..=z]
        );
    }
    Err(AppError::Violation(format!(
        "{violations} of {sequences} sequences violated dominance (first index {z})"
    )))
}
