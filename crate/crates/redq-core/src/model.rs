//! Types shared by the centralized and distributed queue models.

use std::collections::VecDeque;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dist::ServiceDistribution;
use crate::engine::EventHandle;
use crate::streams::{stream_rng, StreamKind};

pub type ServerId = u32;
pub type BatchId = u64;

/// Server sets are stored as bit masks, which caps a system at 64 servers.
pub const MAX_SERVERS: u32 = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid request degree {r}: must satisfy {k} <= r <= {limit}")]
    InvalidRequestDegree { r: u32, k: u32, limit: u32 },
    #[error("service completion on non-busy server {server}: engine bug")]
    CompletionOnNonBusyServer { server: ServerId },
    #[error("cooldown end on non-cooldown server {server}: engine bug")]
    CooldownEndOnWrongState { server: ServerId },
    #[error("system size {n} out of range 1..={max}", max = MAX_SERVERS)]
    InvalidSystemSize { n: u32 },
    #[error(transparent)]
    Engine(#[from] crate::engine::EngineError),
}

/// Set of server ids, at most [`MAX_SERVERS`] of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ServerSet(u64);

impl ServerSet {
    pub fn empty() -> Self {
        Self(0)
    }

    /// All servers `0..n`.
    pub fn full(n: u32) -> Self {
        assert!(n <= MAX_SERVERS);
        if n == 64 {
            Self(u64::MAX)
        } else {
            Self((1u64 << n) - 1)
        }
    }

    pub fn insert(&mut self, s: ServerId) {
        debug_assert!(s < MAX_SERVERS);
        self.0 |= 1u64 << s;
    }

    pub fn contains(self, s: ServerId) -> bool {
        s < MAX_SERVERS && self.0 & (1u64 << s) != 0
    }

    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = ServerId> {
        (0..MAX_SERVERS).filter(move |&s| self.contains(s))
    }
}

impl FromIterator<ServerId> for ServerSet {
    fn from_iter<I: IntoIterator<Item = ServerId>>(iter: I) -> Self {
        let mut set = Self::empty();
        for s in iter {
            set.insert(s);
        }
        set
    }
}

/// Per-server view: idle, serving one job, or paying a removal cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ServerMode {
    Idle,
    Busy {
        batch: BatchId,
        started_at: f64,
        completion: EventHandle,
    },
    Cooldown {
        until: f64,
    },
}

impl ServerMode {
    pub fn is_idle(&self) -> bool {
        matches!(self, ServerMode::Idle)
    }

    pub fn busy_on(&self) -> Option<BatchId> {
        match self {
            ServerMode::Busy { batch, .. } => Some(*batch),
            _ => None,
        }
    }
}

/// One request, split into `r` jobs served by distinct servers; departs when
/// `k` jobs have completed.
#[derive(Debug, Clone)]
pub struct Batch {
    pub id: BatchId,
    pub arrival_time: f64,
    pub k: u32,
    pub r: u32,
    /// Servers this batch may use (the eligibility restriction).
    pub eligible: ServerSet,
    /// Servers that served or are serving a job of this batch.
    pub touched: ServerSet,
    pub completed_jobs: u32,
    pub in_service: u32,
    /// Jobs not yet assigned to any server.
    pub unassigned: u32,
}

impl Batch {
    pub fn new(id: BatchId, arrival_time: f64, k: u32, spec: &BatchSpec) -> Self {
        Self {
            id,
            arrival_time,
            k,
            r: spec.r,
            eligible: spec.eligible,
            touched: ServerSet::empty(),
            completed_jobs: 0,
            in_service: 0,
            unassigned: spec.r,
        }
    }

    /// Can `server` take a job of this batch right now?
    pub fn admits(&self, server: ServerId) -> bool {
        self.unassigned > 0 && !self.touched.contains(server) && self.eligible.contains(server)
    }
}

/// What a new arrival asks for: a request degree and an eligible set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchSpec {
    pub r: u32,
    pub eligible: ServerSet,
}

impl BatchSpec {
    pub fn all(r: u32, n: u32) -> Self {
        Self {
            r,
            eligible: ServerSet::full(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Departure {
    pub batch: BatchId,
    pub arrival_time: f64,
    pub departed_at: f64,
}

impl Departure {
    pub fn latency(&self) -> f64 {
        self.departed_at - self.arrival_time
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Arrival,
    Completion,
    CooldownEnd,
}

impl StepKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepKind::Arrival => "arrival",
            StepKind::Completion => "completion",
            StepKind::CooldownEnd => "cooldown_end",
        }
    }
}

/// One dispatched event plus the resulting aggregate state, the unit of the
/// trace CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub seq: u64,
    pub time: f64,
    pub kind: StepKind,
    pub server: Option<ServerId>,
    pub batch: Option<BatchId>,
    pub departure: Option<Departure>,
    /// Batches with at least one unassigned job (across all buffers).
    pub buffer_len: usize,
    /// Live batches after the event.
    pub in_system: u64,
    /// Queue length of the acting server's own buffer (distributed mode).
    pub buffer_of_server: Option<usize>,
}

/// Source of service durations and removal costs.
///
/// The production source draws from per-server seeded streams; tests inject
/// scripted durations to pin down event orderings.
pub trait DrawSource {
    fn service_time(&mut self, server: ServerId) -> f64;
    fn removal_cost(&mut self, server: ServerId) -> f64;
}

/// Stream-backed draws: one service stream per server, one removal stream.
pub struct StreamDraws {
    service: ServiceDistribution,
    removal: ServiceDistribution,
    service_rngs: Vec<ChaCha8Rng>,
    removal_rng: ChaCha8Rng,
}

impl StreamDraws {
    pub fn new(
        service: ServiceDistribution,
        removal: ServiceDistribution,
        n: u32,
        seed: u64,
        replication: u64,
    ) -> Self {
        let service_rngs = (0..n)
            .map(|s| stream_rng(seed, replication, StreamKind::Service(s)))
            .collect();
        let removal_rng = stream_rng(seed, replication, StreamKind::RemovalCosts);
        Self {
            service,
            removal,
            service_rngs,
            removal_rng,
        }
    }
}

impl DrawSource for StreamDraws {
    fn service_time(&mut self, server: ServerId) -> f64 {
        self.service.sample(&mut self.service_rngs[server as usize])
    }

    fn removal_cost(&mut self, _server: ServerId) -> f64 {
        if self.removal.is_zero() {
            return 0.0; // keep the stream untouched when removal is free
        }
        self.removal.sample(&mut self.removal_rng)
    }
}

/// Fixed per-server duration scripts, for golden traces.
pub struct ScriptedDraws {
    pub service: Vec<VecDeque<f64>>,
    pub removal: VecDeque<f64>,
}

impl ScriptedDraws {
    pub fn new(per_server: Vec<Vec<f64>>, removal: Vec<f64>) -> Self {
        Self {
            service: per_server.into_iter().map(VecDeque::from).collect(),
            removal: VecDeque::from(removal),
        }
    }
}

impl DrawSource for ScriptedDraws {
    fn service_time(&mut self, server: ServerId) -> f64 {
        self.service[server as usize]
            .pop_front()
            .expect("scripted service draws exhausted")
    }

    fn removal_cost(&mut self, server: ServerId) -> f64 {
        let _ = server;
        self.removal.pop_front().unwrap_or(0.0)
    }
}
