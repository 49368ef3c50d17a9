//! Deterministic discrete-event core: a simulation clock plus an ordered
//! future-event set.
//!
//! Events are dispatched in lexicographic `(time, seq)` order, where `seq` is
//! a unique monotone counter assigned at scheduling time, so simultaneous
//! events fire in scheduling order. Cancellation is lazy: a cancelled handle
//! becomes a tombstone that is skipped at pop.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("cannot schedule at {requested} before the clock at {now}")]
    SchedulingInPast { requested: f64, now: f64 },
}

/// Opaque token permitting cancellation of a scheduled event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord<P> {
    pub time: f64,
    pub seq: u64,
    pub payload: P,
}

/// Simulation clock; `now` never decreases across dispatches.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimClock {
    now: f64,
    events_dispatched: u64,
}

impl SimClock {
    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn events_dispatched(&self) -> u64 {
        self.events_dispatched
    }

    fn advance(&mut self, time: f64) {
        debug_assert!(time >= self.now);
        self.now = time;
        self.events_dispatched += 1;
    }
}

struct Entry<P> {
    time: f64,
    seq: u64,
    payload: P,
}

impl<P> PartialEq for Entry<P> {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}

impl<P> Eq for Entry<P> {}

impl<P> PartialOrd for Entry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Entry<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Event times are finite by the scheduling contract.
        self.time
            .partial_cmp(&other.time)
            .expect("event times are comparable")
            .then_with(|| self.seq.cmp(&other.seq))
    }
}

/// Future-event set with a deterministic dispatch order.
pub struct EventQueue<P> {
    heap: BinaryHeap<Reverse<Entry<P>>>,
    cancelled: HashSet<u64>,
    clock: SimClock,
    next_seq: u64,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            cancelled: HashSet::new(),
            clock: SimClock::default(),
            next_seq: 0,
        }
    }

    pub fn now(&self) -> f64 {
        self.clock.now()
    }

    pub fn clock(&self) -> &SimClock {
        &self.clock
    }

    pub fn events_dispatched(&self) -> u64 {
        self.clock.events_dispatched()
    }

    /// Pending events, tombstones excluded. Cancelling an already-dispatched
    /// handle leaves a stale tombstone, so this saturates rather than relying
    /// on callers being disciplined.
    pub fn len(&self) -> usize {
        self.heap.len().saturating_sub(self.cancelled.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn schedule(&mut self, time: f64, payload: P) -> Result<EventHandle, EngineError> {
        if !time.is_finite() || time < self.clock.now() {
            return Err(EngineError::SchedulingInPast {
                requested: time,
                now: self.clock.now(),
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Entry { time, seq, payload }));
        Ok(EventHandle(seq))
    }

    /// Marks the event as cancelled; its payload will never be dispatched.
    /// Returns false if the handle was already cancelled.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.cancelled.insert(handle.0)
    }

    /// Removes and returns the minimal `(time, seq)` event, advancing the
    /// clock. `None` means the event set is exhausted.
    pub fn next_event(&mut self) -> Option<EventRecord<P>> {
        while let Some(Reverse(entry)) = self.heap.pop() {
            if self.cancelled.remove(&entry.seq) {
                continue;
            }
            self.clock.advance(entry.time);
            return Some(EventRecord {
                time: entry.time,
                seq: entry.seq,
                payload: entry.payload,
            });
        }
        None
    }

    /// Time of the next live event without dispatching it.
    pub fn peek_time(&mut self) -> Option<f64> {
        while let Some(Reverse(entry)) = self.heap.peek() {
            if self.cancelled.contains(&entry.seq) {
                let seq = entry.seq;
                self.heap.pop();
                self.cancelled.remove(&seq);
                continue;
            }
            return Some(entry.time);
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dispatches_in_time_order() {
        let mut q = EventQueue::new();
        q.schedule(1.0, "a").unwrap();
        q.schedule(3.0, "c").unwrap();
        q.schedule(2.0, "b").unwrap();
        let order: Vec<_> = std::iter::from_fn(|| q.next_event()).map(|e| e.payload).collect();
        assert_eq!(order, vec!["a", "b", "c"]);
        assert_eq!(q.now(), 3.0);
        assert_eq!(q.events_dispatched(), 3);
    }

    #[test]
    fn simultaneous_events_fire_in_scheduling_order() {
        let mut q = EventQueue::new();
        q.schedule(1.0, 1).unwrap();
        q.schedule(1.0, 2).unwrap();
        q.schedule(0.0, 0).unwrap();
        let order: Vec<_> = std::iter::from_fn(|| q.next_event()).map(|e| e.payload).collect();
        assert_eq!(order, vec![0, 1, 2]);
    }

    #[test]
    fn schedule_at_now_precedes_later_events() {
        let mut q = EventQueue::new();
        q.schedule(5.0, "later").unwrap();
        q.schedule(0.0, "first").unwrap();
        assert_eq!(q.next_event().unwrap().payload, "first");
        // now == 5 after this dispatch; scheduling at now is allowed
        assert_eq!(q.next_event().unwrap().payload, "later");
        q.schedule(5.0, "at-now").unwrap();
        assert_eq!(q.next_event().unwrap().payload, "at-now");
    }

    #[test]
    fn scheduling_in_past_is_rejected() {
        let mut q = EventQueue::new();
        q.schedule(2.0, ()).unwrap();
        q.next_event();
        let err = q.schedule(1.0, ()).unwrap_err();
        assert_eq!(err, EngineError::SchedulingInPast { requested: 1.0, now: 2.0 });
    }

    #[test]
    fn cancelled_events_never_dispatch() {
        let mut q = EventQueue::new();
        let a = q.schedule(1.0, "a").unwrap();
        q.schedule(2.0, "b").unwrap();
        assert!(q.cancel(a));
        assert!(!q.cancel(a));
        let order: Vec<_> = std::iter::from_fn(|| q.next_event()).map(|e| e.payload).collect();
        assert_eq!(order, vec!["b"]);
    }

    #[test]
    fn peek_skips_tombstones() {
        let mut q = EventQueue::new();
        let a = q.schedule(1.0, "a").unwrap();
        q.schedule(2.0, "b").unwrap();
        q.cancel(a);
        assert_eq!(q.peek_time(), Some(2.0));
        assert_eq!(q.len(), 1);
    }

    #[test]
    fn empty_queue_is_exhausted() {
        let mut q: EventQueue<()> = EventQueue::new();
        assert!(q.next_event().is_none());
        assert!(q.peek_time().is_none());
    }

    #[test]
    fn random_schedules_match_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut q = EventQueue::new();
        let mut expected: Vec<(f64, u64)> = Vec::new();
        for i in 0..100_000u64 {
            let t: f64 = rng.gen::<f64>() * 1000.0;
            q.schedule(t, i).unwrap();
            expected.push((t, i));
        }
        expected.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mut got = Vec::new();
        while let Some(e) = q.next_event() {
            got.push((e.time, e.seq));
        }
        assert_eq!(got, expected);
    }

    #[test]
    fn identical_inputs_identical_dispatch() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let mut q = EventQueue::new();
            for i in 0..1000u64 {
                q.schedule(rng.gen::<f64>() * 10.0, i).unwrap();
            }
            let mut out = Vec::new();
            while let Some(e) = q.next_event() {
                out.push((e.time.to_bits(), e.seq, e.payload));
            }
            out
        };
        assert_eq!(run(), run());
    }
}
