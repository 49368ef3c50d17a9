//! Centralized buffer model.
//!
//! On arrival a batch of `r` jobs seizes as many idle eligible servers as it
//! can (lowest server id first) and queues the remainder in one common FIFO
//! buffer. On a completion that serves the k-th job of a batch, the batch
//! departs, queued sibling jobs vanish, and in-service siblings are removed,
//! charging their servers a removal-cost draw (a positive draw parks the
//! server in cooldown). Every freed server rescans the buffer in arrival
//! order for the earliest batch it may serve: a batch qualifies only if it
//! still has an unassigned job, this server has not already served it, and
//! the server is in the batch's eligible set.

use std::collections::{HashMap, VecDeque};

use crate::engine::EventQueue;
use crate::model::{
    Batch, BatchId, BatchSpec, Departure, DrawSource, ModelError, ServerId, ServerMode, StepKind,
    StepRecord, MAX_SERVERS,
};

use super::{check_degree, QueueSystem};

enum Payload {
    Arrival(BatchSpec),
    Completion(ServerId),
    CooldownEnd(ServerId),
}

pub struct CentralSystem<D: DrawSource> {
    events: EventQueue<Payload>,
    n: u32,
    k: u32,
    servers: Vec<ServerMode>,
    buffer: VecDeque<BatchId>,
    batches: HashMap<BatchId, Batch>,
    next_batch: BatchId,
    arrivals: u64,
    departures: u64,
    draws: D,
}

impl<D: DrawSource> CentralSystem<D> {
    pub fn new(n: u32, k: u32, draws: D) -> Result<Self, ModelError> {
        if n == 0 || n > MAX_SERVERS {
            return Err(ModelError::InvalidSystemSize { n });
        }
        assert!(k >= 1 && k <= n, "need 1 <= k <= n");
        Ok(Self {
            events: EventQueue::new(),
            n,
            k,
            servers: vec![ServerMode::Idle; n as usize],
            buffer: VecDeque::new(),
            batches: HashMap::new(),
            next_batch: 0,
            arrivals: 0,
            departures: 0,
            draws,
        })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn server_mode(&self, s: ServerId) -> &ServerMode {
        &self.servers[s as usize]
    }

    /// Batches with unassigned jobs, in arrival order.
    pub fn buffer_ids(&self) -> impl Iterator<Item = BatchId> + '_ {
        self.buffer.iter().copied()
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

    fn start_job(&mut self, server: ServerId, id: BatchId) -> Result<(), ModelError> {
        let now = self.events.now();
        let duration = self.draws.service_time(server);
        let handle = self.events.schedule(now + duration, Payload::Completion(server))?;
        let batch = self.batches.get_mut(&id).expect("live batch");
        debug_assert!(batch.admits(server));
        batch.touched.insert(server);
        batch.unassigned -= 1;
        batch.in_service += 1;
        self.servers[server as usize] = ServerMode::Busy {
            batch: id,
            started_at: now,
            completion: handle,
        };
        Ok(())
    }

    /// FCFS rescan: earliest buffered batch this server may serve.
    fn take_from_buffer(&mut self, server: ServerId) -> Result<(), ModelError> {
        let pos = self
            .buffer
            .iter()
            .position(|id| self.batches[id].admits(server));
        if let Some(pos) = pos {
            let id = self.buffer[pos];
            self.start_job(server, id)?;
            if self.batches[&id].unassigned == 0 {
                self.buffer.remove(pos);
            }
        }
        Ok(())
    }

    fn handle_arrival(&mut self, time: f64, spec: BatchSpec) -> Result<BatchId, ModelError> {
        check_degree(spec.r, self.k, spec.eligible.len())?;
        let id = self.next_batch;
        self.next_batch += 1;
        self.arrivals += 1;
        self.batches.insert(id, Batch::new(id, time, self.k, &spec));
        for s in 0..self.n {
            if self.batches[&id].unassigned == 0 {
                break;
            }
            if self.servers[s as usize].is_idle() && self.batches[&id].admits(s) {
                self.start_job(s, id)?;
            }
        }
        if self.batches[&id].unassigned > 0 {
            self.buffer.push_back(id);
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
            // Queued sibling jobs vanish with the batch.
            if batch.unassigned > 0 {
                let pos = self.buffer.iter().position(|&b| b == id).expect("queued batch in buffer");
                self.buffer.remove(pos);
            }
            // In-service siblings are removed; a positive removal cost parks
            // the server in cooldown, a zero draw frees it immediately.
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
            self.take_from_buffer(s)?;
        }
        Ok(departure)
    }

    fn handle_cooldown_end(&mut self, server: ServerId) -> Result<(), ModelError> {
        if !matches!(self.servers[server as usize], ServerMode::Cooldown { .. }) {
            return Err(ModelError::CooldownEndOnWrongState { server });
        }
        self.servers[server as usize] = ServerMode::Idle;
        self.take_from_buffer(server)
    }
}

impl<D: DrawSource> QueueSystem for CentralSystem<D> {
    fn schedule_arrival(&mut self, time: f64, spec: BatchSpec) -> Result<(), ModelError> {
        check_degree(spec.r, self.k, spec.eligible.len())?;
        self.events.schedule(time, Payload::Arrival(spec))?;
        Ok(())
    }

    fn step(&mut self) -> Result<Option<StepRecord>, ModelError> {
        let Some(event) = self.events.next_event() else {
            return Ok(None);
        };
        let (kind, server, batch, departure) = match event.payload {
            Payload::Arrival(spec) => {
                let id = self.handle_arrival(event.time, spec)?;
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
            buffer_len: self.buffer.len(),
            in_system: self.batches.len() as u64,
            buffer_of_server: None,
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
