//! Distributed-buffers model.
//!
//! Each server owns a FIFO buffer. A batch's `r` jobs are pushed to `r`
//! distinct buffers at arrival time and the choice is never revisited: a
//! freed server takes only the head of its own buffer, so an idle server can
//! coexist with jobs waiting elsewhere. Sibling removal on departure deletes
//! queued jobs from other buffers instantly and charges removal cost only to
//! servers whose job was actually in service.

use std::collections::{HashMap, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::EventQueue;
use crate::model::{
    Batch, BatchId, BatchSpec, Departure, DrawSource, ModelError, ServerId, ServerMode, StepKind,
    StepRecord, MAX_SERVERS,
};
use crate::streams::{stream_rng, StreamKind};

use super::{check_degree, QueueSystem};

/// How the `r` buffers are chosen for a new batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DispatchPolicy {
    /// Fewest jobs in buffer plus in service; ties go to the lowest id.
    #[default]
    LeastLoaded,
    /// Uniformly random distinct buffers, from a dedicated rng stream.
    UniformRandom,
    /// Cycle through server ids.
    RoundRobin,
}

enum Payload {
    /// Explicit targets override the policy (used by scripted traces).
    Arrival(BatchSpec, Option<Vec<ServerId>>),
    Completion(ServerId),
    CooldownEnd(ServerId),
}

pub struct DistributedSystem<D: DrawSource> {
    events: EventQueue<Payload>,
    n: u32,
    k: u32,
    servers: Vec<ServerMode>,
    buffers: Vec<VecDeque<BatchId>>,
    batches: HashMap<BatchId, Batch>,
    next_batch: BatchId,
    arrivals: u64,
    departures: u64,
    /// Live batches with at least one queued job, for the trace's global
    /// buffer-occupancy column.
    queued_batches: usize,
    policy: DispatchPolicy,
    policy_rng: ChaCha8Rng,
    rr_cursor: u32,
    draws: D,
}

impl<D: DrawSource> DistributedSystem<D> {
    pub fn new(
        n: u32,
        k: u32,
        draws: D,
        policy: DispatchPolicy,
        seed: u64,
        replication: u64,
    ) -> Result<Self, ModelError> {
        if n == 0 || n > MAX_SERVERS {
            return Err(ModelError::InvalidSystemSize { n });
        }
        assert!(k >= 1 && k <= n, "need 1 <= k <= n");
        Ok(Self {
            events: EventQueue::new(),
            n,
            k,
            servers: vec![ServerMode::Idle; n as usize],
            buffers: (0..n).map(|_| VecDeque::new()).collect(),
            batches: HashMap::new(),
            next_batch: 0,
            arrivals: 0,
            departures: 0,
            queued_batches: 0,
            policy,
            policy_rng: stream_rng(seed, replication, StreamKind::Dispatch),
            rr_cursor: 0,
            draws,
        })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn server_mode(&self, s: ServerId) -> &ServerMode {
        &self.servers[s as usize]
    }

    pub fn buffer_of(&self, s: ServerId) -> impl Iterator<Item = BatchId> + '_ {
        self.buffers[s as usize].iter().copied()
    }

    pub fn batch(&self, id: BatchId) -> Option<&Batch> {
        self.batches.get(&id)
    }

    pub fn arrivals(&self) -> u64 {
        self.arrivals
    }

    pub fn departures(&self) -> u64 {
        self.departures
    }

    /// Arrival with explicit buffer targets, bypassing the dispatch policy.
    pub fn schedule_arrival_to(
        &mut self,
        time: f64,
        spec: BatchSpec,
        targets: Vec<ServerId>,
    ) -> Result<(), ModelError> {
        check_degree(spec.r, self.k, spec.eligible.len())?;
        assert_eq!(targets.len(), spec.r as usize, "one target buffer per job");
        self.events.schedule(time, Payload::Arrival(spec, Some(targets)))?;
        Ok(())
    }

    fn load(&self, s: ServerId) -> usize {
        self.buffers[s as usize].len()
            + usize::from(matches!(self.servers[s as usize], ServerMode::Busy { .. }))
    }

    /// Choose the `r` buffers for a new batch among its eligible servers.
    fn choose_targets(&mut self, spec: &BatchSpec) -> Vec<ServerId> {
        let eligible: Vec<ServerId> = spec.eligible.iter().collect();
        let r = spec.r as usize;
        // No decision to make when the batch goes everywhere it can; skipping
        // the policy here keeps rng streams aligned with the centralized run.
        if r == eligible.len() {
            return eligible;
        }
        let mut chosen = match self.policy {
            DispatchPolicy::LeastLoaded => {
                let mut by_load: Vec<(usize, ServerId)> =
                    eligible.iter().map(|&s| (self.load(s), s)).collect();
                by_load.sort_unstable();
                by_load[..r].iter().map(|&(_, s)| s).collect::<Vec<_>>()
            }
            DispatchPolicy::UniformRandom => {
                let mut ids = eligible;
                for i in 0..r {
                    let j = self.policy_rng.gen_range(i..ids.len());
                    ids.swap(i, j);
                }
                ids.truncate(r);
                ids
            }
            DispatchPolicy::RoundRobin => {
                let mut picked = Vec::with_capacity(r);
                let mut cursor = self.rr_cursor;
                while picked.len() < r {
                    if spec.eligible.contains(cursor) && !picked.contains(&cursor) {
                        picked.push(cursor);
                    }
                    cursor = (cursor + 1) % self.n;
                }
                self.rr_cursor = cursor;
                picked
            }
        };
        chosen.sort_unstable();
        chosen
    }

    fn start_job(&mut self, server: ServerId, id: BatchId) -> Result<(), ModelError> {
        let now = self.events.now();
        let duration = self.draws.service_time(server);
        let handle = self.events.schedule(now + duration, Payload::Completion(server))?;
        let batch = self.batches.get_mut(&id).expect("live batch");
        debug_assert!(!batch.touched.contains(server));
        batch.touched.insert(server);
        batch.unassigned -= 1;
        batch.in_service += 1;
        if batch.unassigned == 0 {
            self.queued_batches -= 1;
        }
        self.servers[server as usize] = ServerMode::Busy {
            batch: id,
            started_at: now,
            completion: handle,
        };
        Ok(())
    }

    /// A freed server serves only the head of its own buffer.
    fn take_own_head(&mut self, server: ServerId) -> Result<(), ModelError> {
        if let Some(id) = self.buffers[server as usize].pop_front() {
            self.start_job(server, id)?;
        }
        Ok(())
    }

    fn handle_arrival(
        &mut self,
        time: f64,
        spec: BatchSpec,
        targets: Option<Vec<ServerId>>,
    ) -> Result<BatchId, ModelError> {
        check_degree(spec.r, self.k, spec.eligible.len())?;
        let targets = match targets {
            Some(t) => t,
            None => self.choose_targets(&spec),
        };
        debug_assert_eq!(targets.len(), spec.r as usize);
        let id = self.next_batch;
        self.next_batch += 1;
        self.arrivals += 1;
        let mut batch = Batch::new(id, time, self.k, &spec);
        // All r jobs are pinned to their buffers now; a queued job is
        // "assigned" in the distributed sense but not yet in service.
        batch.unassigned = spec.r;
        self.batches.insert(id, batch);
        self.queued_batches += 1;
        for &s in &targets {
            debug_assert!(spec.eligible.contains(s));
            if self.servers[s as usize].is_idle() {
                debug_assert!(self.buffers[s as usize].is_empty());
                self.start_job(s, id)?;
            } else {
                self.buffers[s as usize].push_back(id);
            }
        }
        Ok(id)
    }

    fn handle_completion(
        &mut self,
        time: f64,
        server: ServerId,
    ) -> Result<Option<Departure>, ModelError> {
        let ServerMode::Busy { batch: id, .. } = self.servers[server as usize] else {
            return Err(ModelError::CompletionOnNonBusyServer { server });
        };
        self.servers[server as usize] = ServerMode::Idle;
        let batch = self.batches.get_mut(&id).expect("busy server holds live batch");
        batch.in_service -= 1;
        batch.completed_jobs += 1;
        debug_assert!(batch.completed_jobs <= self.k);

        let mut freed = vec![server];
        let mut departure = None;
        if batch.completed_jobs == self.k {
            let arrival_time = batch.arrival_time;
            // Delete queued sibling jobs from every buffer; the owning
            // servers never touched them, so no cost is charged.
            if batch.unassigned > 0 {
                self.queued_batches -= 1;
                for s in 0..self.n {
                    if let Some(pos) = self.buffers[s as usize].iter().position(|&b| b == id) {
                        self.buffers[s as usize].remove(pos);
                    }
                }
            }
            for s in 0..self.n {
                let ServerMode::Busy { batch: other, completion, .. } = self.servers[s as usize]
                else {
                    continue;
                };
                if other != id {
                    continue;
                }
                self.events.cancel(completion);
                let cost = self.draws.removal_cost(s);
                if cost > 0.0 {
                    self.servers[s as usize] = ServerMode::Cooldown { until: time + cost };
                    self.events.schedule(time + cost, Payload::CooldownEnd(s))?;
                } else {
                    self.servers[s as usize] = ServerMode::Idle;
                    freed.push(s);
                }
            }
            self.batches.remove(&id);
            self.departures += 1;
            departure = Some(Departure {
                batch: id,
                arrival_time,
                departed_at: time,
            });
        }

        freed.sort_unstable();
        for s in freed {
            self.take_own_head(s)?;
        }
        Ok(departure)
    }

    fn handle_cooldown_end(&mut self, server: ServerId) -> Result<(), ModelError> {
        if !matches!(self.servers[server as usize], ServerMode::Cooldown { .. }) {
            return Err(ModelError::CooldownEndOnWrongState { server });
        }
        self.servers[server as usize] = ServerMode::Idle;
        self.take_own_head(server)
    }
}

impl<D: DrawSource> QueueSystem for DistributedSystem<D> {
    fn schedule_arrival(&mut self, time: f64, spec: BatchSpec) -> Result<(), ModelError> {
        check_degree(spec.r, self.k, spec.eligible.len())?;
        self.events.schedule(time, Payload::Arrival(spec, None))?;
        Ok(())
    }

    fn step(&mut self) -> Result<Option<StepRecord>, ModelError> {
        let Some(event) = self.events.next_event() else {
            return Ok(None);
        };
        let (kind, server, batch, departure) = match event.payload {
            Payload::Arrival(spec, targets) => {
                let id = self.handle_arrival(event.time, spec, targets)?;
                (StepKind::Arrival, None, Some(id), None)
            }
            Payload::Completion(s) => {
                let before = self.servers[s as usize].busy_on();
                let departure = self.handle_completion(event.time, s)?;
                (StepKind::Completion, Some(s), before, departure)
            }
            Payload::CooldownEnd(s) => {
                self.handle_cooldown_end(s)?;
                (StepKind::CooldownEnd, Some(s), None, None)
            }
        };
        debug_assert_eq!(self.arrivals, self.departures + self.batches.len() as u64);
        Ok(Some(StepRecord {
            seq: event.seq,
            time: event.time,
            kind,
            server,
            batch,
            departure,
            buffer_len: self.queued_batches,
            in_system: self.batches.len() as u64,
            buffer_of_server: server.map(|s| self.buffers[s as usize].len()),
        }))
    }

    fn peek_time(&mut self) -> Option<f64> {
        self.events.peek_time()
    }

    fn now(&self) -> f64 {
        self.events.now()
    }

    fn in_system(&self) -> u64 {
        self.batches.len() as u64
    }

    fn n(&self) -> u32 {
        self.n
    }
}
