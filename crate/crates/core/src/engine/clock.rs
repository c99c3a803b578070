use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Processing order among events at the same instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    JobStart,
    UpdateArrival,
    Timer,
    RoundBoundary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub time: f64,
    pub kind: EventKind,
    pub client: usize,
    pub seq: u64,
    /// Round index for boundaries, job slot for job events, tag for timers.
    pub payload: u64,
}

impl Eq for SimEvent {}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.cmp(&other.kind))
            .then(self.client.cmp(&other.client))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Virtual clock with a pending-event queue.
#[derive(Debug, Default)]
pub struct SimClock {
    now: f64,
    pending: BinaryHeap<Reverse<SimEvent>>,
    next_seq: u64,
}

impl SimClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn schedule(&mut self, time: f64, kind: EventKind, client: usize, payload: u64) -> Result<()> {
        if time.is_nan() || time < self.now {
            return Err(Error::Causality { arrival: time, round_start: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.pending.push(Reverse(SimEvent { time, kind, client, seq, payload }));
        Ok(())
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        let Reverse(ev) = self.pending.pop()?;
        self.now = ev.time;
        Some(ev)
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.pending.peek().map(|Reverse(e)| e.time)
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_put_starts_then_arrivals_before_boundaries() {
        let mut c = SimClock::new();
        c.schedule(10.0, EventKind::RoundBoundary, 0, 1).unwrap();
        c.schedule(10.0, EventKind::UpdateArrival, 3, 7).unwrap();
        c.schedule(10.0, EventKind::UpdateArrival, 1, 8).unwrap();
        c.schedule(5.0, EventKind::JobStart, 2, 9).unwrap();
        c.schedule(10.0, EventKind::JobStart, 4, 10).unwrap();
        let order: Vec<(EventKind, usize)> = std::iter::from_fn(|| c.pop()).map(|e| (e.kind, e.client)).collect();
        assert_eq!(
            order,
            vec![
                (EventKind::JobStart, 2),
                (EventKind::JobStart, 4),
                (EventKind::UpdateArrival, 1),
                (EventKind::UpdateArrival, 3),
                (EventKind::RoundBoundary, 0)
            ]
        );
        assert_eq!(c.now(), 10.0);
    }

    #[test]
    fn past_events_rejected() {
        let mut c = SimClock::new();
        c.schedule(3.0, EventKind::Timer, 0, 0).unwrap();
        c.pop();
        assert!(c.schedule(2.0, EventKind::Timer, 0, 0).is_err());
        assert!(c.schedule(f64::NAN, EventKind::Timer, 0, 0).is_err());
    }
}
