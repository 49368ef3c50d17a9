//! Event-sequence replay for the memoryless dominance theorems.
//!
//! Memoryless service lets a fictitious service timer keep running at every
//! server, idle or not; which of the n+1 processes (arrival or one of n
//! timers) fires next is then an arbitrary choice independent of system
//! state. Feeding one abstract event sequence to two coupled systems turns
//! the probabilistic latency comparison into an exact per-event check on
//! batch counts, with zero tolerance:
//!
//! * [`replay_k1`] couples two k=1 systems with request degrees `r1 < r2`,
//!   re-indexing servers busy-first after every service event; the system
//!   with the smaller degree holds at least as many batches on every
//!   sequence (the busy sets are nested, so any real completion in the
//!   larger-degree system is real in the smaller one too).
//! * [`replay_general_k`] couples a general-k system with degree `r_alt`
//!   against the send-to-all system (`r = n`) under fixed server identities
//!   and full scheduling semantics with zero removal cost. Unlike the k=1
//!   case this coupling is falsifiable: short sequences exist on which the
//!   send-to-all system briefly holds more batches (see the witness test),
//!   so the verdict genuinely depends on the input sequence.

use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::model::MAX_SERVERS;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CouplingError {
    #[error("invalid degree pair r1={r1}, r2={r2} for n={n}: need 1 <= r1 < r2 <= n")]
    InvalidDegreePair { r1: u32, r2: u32, n: u32 },
    #[error("invalid request degree {r}: need {k} <= r <= {n}")]
    InvalidRequestDegree { r: u32, k: u32, n: u32 },
    #[error("timer index {index} out of range for n={n}")]
    TimerIndex { index: u32, n: u32 },
    #[error("system size {n} out of range 1..={max}", max = MAX_SERVERS)]
    SystemSize { n: u32 },
    #[error("sequence line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// An abstract event: a batch arrival, or the firing of server timer `i`
/// (a real completion only if that server is busy in a given system).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayEvent {
    Arrival,
    TimerFire(u32),
}

impl fmt::Display for ReplayEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReplayEvent::Arrival => write!(f, "A"),
            ReplayEvent::TimerFire(i) => write!(f, "T{i}"),
        }
    }
}

/// Batch counts of both systems after each event.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayTrace {
    pub events: Vec<ReplayEvent>,
    pub b1: Vec<u64>,
    pub b2: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub trace: ReplayTrace,
    /// True iff `b1(z) >= b2(z)` at every event index z.
    pub dominates: bool,
    /// First index where the dominance fails, if it does.
    pub first_violation: Option<usize>,
}

fn finish(events: &[ReplayEvent], b1: Vec<u64>, b2: Vec<u64>) -> ReplayOutcome {
    let first_violation = b1.iter().zip(&b2).position(|(&x, &y)| x < y);
    ReplayOutcome {
        trace: ReplayTrace {
            events: events.to_vec(),
            b1,
            b2,
        },
        dominates: first_violation.is_none(),
        first_violation,
    }
}

/// Coupled k=1 replay with the busy-first server permutation.
///
/// After every service event servers are re-indexed so the busy ones take the
/// lowest indices; with k=1 and FCFS, a system holding `b` batches of degree
/// `r` then occupies exactly the first `min(r*b, n)` indices, so `TimerFire(i)`
/// completes a batch iff `i < min(r*b, n)`. Both systems start empty.
pub fn replay_k1(
    n: u32,
    r1: u32,
    r2: u32,
    events: &[ReplayEvent],
) -> Result<ReplayOutcome, CouplingError> {
    if n == 0 || n > MAX_SERVERS {
        return Err(CouplingError::SystemSize { n });
    }
    if !(1 <= r1 && r1 < r2 && r2 <= n) {
        return Err(CouplingError::InvalidDegreePair { r1, r2, n });
    }
    let mut b = [0u64; 2];
    let degrees = [u64::from(r1), u64::from(r2)];
    let mut b1 = Vec::with_capacity(events.len());
    let mut b2 = Vec::with_capacity(events.len());
    for &event in events {
        match event {
            ReplayEvent::Arrival => {
                b[0] += 1;
                b[1] += 1;
            }
            ReplayEvent::TimerFire(i) => {
                if i >= n {
                    return Err(CouplingError::TimerIndex { index: i, n });
                }
                for sys in 0..2 {
                    let occupied = (degrees[sys] * b[sys]).min(u64::from(n));
                    if u64::from(i) < occupied {
                        b[sys] -= 1;
                    }
                }
            }
        }
        b1.push(b[0]);
        b2.push(b[1]);
    }
    Ok(finish(events, b1, b2))
}

/// One system in index-time: full scheduling semantics (k-of-r completion,
/// distinct servers, FCFS reassignment, sibling removal) with zero removal
/// cost and no clock.
struct Machine {
    n: u32,
    k: u32,
    r: u32,
    /// batch id currently served, per server
    servers: Vec<Option<u32>>,
    /// batches with unassigned jobs, arrival order
    buffer: std::collections::VecDeque<u32>,
    batches: Vec<Option<MachineBatch>>,
    live: u64,
}

struct MachineBatch {
    unassigned: u32,
    completed: u32,
    touched: u64,
}

impl Machine {
    fn new(n: u32, k: u32, r: u32) -> Self {
        Self {
            n,
            k,
            r,
            servers: vec![None; n as usize],
            buffer: std::collections::VecDeque::new(),
            batches: Vec::new(),
            live: 0,
        }
    }

    fn start(&mut self, server: u32, id: u32) {
        let batch = self.batches[id as usize].as_mut().expect("live batch");
        debug_assert!(batch.touched & (1 << server) == 0);
        batch.touched |= 1 << server;
        batch.unassigned -= 1;
        self.servers[server as usize] = Some(id);
    }

    fn admits(&self, id: u32, server: u32) -> bool {
        let batch = self.batches[id as usize].as_ref().expect("buffered batch is live");
        batch.unassigned > 0 && batch.touched & (1 << server) == 0
    }

    fn rescan(&mut self, server: u32) {
        if let Some(pos) = (0..self.buffer.len()).find(|&i| self.admits(self.buffer[i], server)) {
            let id = self.buffer[pos];
            self.start(server, id);
            if self.batches[id as usize].as_ref().unwrap().unassigned == 0 {
                self.buffer.remove(pos);
            }
        }
    }

    fn arrival(&mut self) {
        let id = self.batches.len() as u32;
        self.batches.push(Some(MachineBatch {
            unassigned: self.r,
            completed: 0,
            touched: 0,
        }));
        self.live += 1;
        for s in 0..self.n {
            if self.batches[id as usize].as_ref().unwrap().unassigned == 0 {
                break;
            }
            if self.servers[s as usize].is_none() {
                self.start(s, id);
            }
        }
        if self.batches[id as usize].as_ref().unwrap().unassigned > 0 {
            self.buffer.push_back(id);
        }
    }

    /// A timer fires at `server`; a real completion only if it is busy.
    fn timer(&mut self, server: u32) {
        let Some(id) = self.servers[server as usize] else {
            return; // fictitious completion at an idle server
        };
        self.servers[server as usize] = None;
        let batch = self.batches[id as usize].as_mut().expect("live batch");
        batch.completed += 1;
        let mut freed = vec![server];
        if batch.completed == self.k {
            if batch.unassigned > 0 {
                let pos = self.buffer.iter().position(|&b| b == id).expect("in buffer");
                self.buffer.remove(pos);
            }
            for s in 0..self.n {
                if self.servers[s as usize] == Some(id) {
                    self.servers[s as usize] = None; // removed instantly, zero cost
                    freed.push(s);
                }
            }
            self.batches[id as usize] = None;
            self.live -= 1;
        }
        freed.sort_unstable();
        for s in freed {
            self.rescan(s);
        }
    }
}

/// Coupled general-k replay: system A runs request-degree `r_alt`, system B
/// sends every batch to all n servers. Fixed server identities; both start
/// empty. Dominance asserts `b_A(z) >= b_B(z)` at every index.
pub fn replay_general_k(
    n: u32,
    k: u32,
    r_alt: u32,
    events: &[ReplayEvent],
) -> Result<ReplayOutcome, CouplingError> {
    if n == 0 || n > MAX_SERVERS {
        return Err(CouplingError::SystemSize { n });
    }
    if !(k >= 1 && k <= r_alt && r_alt <= n) {
        return Err(CouplingError::InvalidRequestDegree { r: r_alt, k, n });
    }
    let mut sys_a = Machine::new(n, k, r_alt);
    let mut sys_b = Machine::new(n, k, n);
    let mut b1 = Vec::with_capacity(events.len());
    let mut b2 = Vec::with_capacity(events.len());
    for &event in events {
        match event {
            ReplayEvent::Arrival => {
                sys_a.arrival();
                sys_b.arrival();
            }
            ReplayEvent::TimerFire(i) => {
                if i >= n {
                    return Err(CouplingError::TimerIndex { index: i, n });
                }
                sys_a.timer(i);
                sys_b.timer(i);
            }
        }
        b1.push(sys_a.live);
        b2.push(sys_b.live);
    }
    Ok(finish(events, b1, b2))
}

/// Random event sequence matching the (n+1)-process race: each event is an
/// arrival with probability 1/(n+1), otherwise a uniformly chosen timer.
pub fn random_sequence<R: Rng>(n: u32, len: usize, rng: &mut R) -> Vec<ReplayEvent> {
    (0..len)
        .map(|_| {
            if rng.gen_range(0..=n) == 0 {
                ReplayEvent::Arrival
            } else {
                ReplayEvent::TimerFire(rng.gen_range(0..n))
            }
        })
        .collect()
}

/// Parse the sequence file format: one event per line, `A` or `T<i>`;
/// blank lines and `#` comments are ignored.
pub fn parse_sequence(text: &str) -> Result<Vec<ReplayEvent>, CouplingError> {
    let mut events = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let token = raw.trim();
        if token.is_empty() || token.starts_with('#') {
            continue;
        }
        if token == "A" {
            events.push(ReplayEvent::Arrival);
        } else if let Some(rest) = token.strip_prefix('T') {
            let index: u32 = rest.parse().map_err(|_| CouplingError::Parse {
                line,
                reason: format!("`{rest}` is not a timer index"),
            })?;
            events.push(ReplayEvent::TimerFire(index));
        } else {
            return Err(CouplingError::Parse {
                line,
                reason: format!("expected `A` or `T<i>`, got `{token}`"),
            });
        }
    }
    Ok(events)
}

pub fn format_sequence(events: &[ReplayEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&e.to_string());
        out.push('\n');
    }
    out
}
