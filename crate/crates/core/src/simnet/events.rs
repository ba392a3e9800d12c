//! Discrete-event plumbing: a priority queue ordered by (time,
//! insertion sequence). The tick is one millisecond; every modeled
//! quantity is at least two orders of magnitude coarser.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Simulated milliseconds since the run began.
pub type SimMs = u64;

#[derive(Debug)]
struct Queued<E> {
    at: SimMs,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Queued<E> {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}

impl<E> Eq for Queued<E> {}

impl<E> PartialOrd for Queued<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Queued<E> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

/// Time-ordered event queue; equal times pop in insertion order, which
/// keeps runs reproducible without hashing anything.
#[derive(Debug)]
pub struct EventQueue<E> {
    heap: BinaryHeap<Reverse<Queued<E>>>,
    next_seq: u64,
    now: SimMs,
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            next_seq: 0,
            now: 0,
        }
    }

    pub fn now(&self) -> SimMs {
        self.now
    }

    /// Schedules an event; scheduling into the past is a logic error.
    pub fn schedule(&mut self, at: SimMs, event: E) {
        assert!(
            at >= self.now,
            "event scheduled in the past: {at} < {}",
            self.now
        );
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Queued { at, seq, event }));
    }

    /// Pops the next event and advances the clock to it.
    pub fn pop(&mut self) -> Option<(SimMs, E)> {
        let Reverse(next) = self.heap.pop()?;
        debug_assert!(next.at >= self.now);
        self.now = next.at;
        Some((next.at, next.event))
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}
