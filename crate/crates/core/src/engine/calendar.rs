//! Future event list.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    /// `generation` guards against completions of preempted jobs.
    ServiceCompletion { server: usize, generation: u64 },
    StreamSubmission { class: usize },
    JobArrival { class: usize, stream: u64 },
}

impl Event {
    /// Rank among events sharing a timestamp: completions free servers
    /// before new work is looked at.
    fn rank(&self) -> u8 {
        match self {
            Self::ServiceCompletion { .. } => 0,
            Self::StreamSubmission { .. } => 1,
            Self::JobArrival { .. } => 2,
        }
    }
}

#[derive(Debug)]
struct Scheduled {
    time: f64,
    seq: u64,
    event: Event,
}

impl Scheduled {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.event.rank().cmp(&other.event.rank()))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // reversed: BinaryHeap pops the maximum
    fn cmp(&self, other: &Self) -> Ordering {
        other.key_cmp(self)
    }
}

/// Min-heap of events ordered by time, then kind, then insertion order.
#[derive(Debug, Default)]
pub struct Calendar {
    heap: BinaryHeap<Scheduled>,
    next_seq: u64,
}

impl Calendar {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn schedule(&mut self, time: f64, event: Event) {
        debug_assert!(time.is_finite());
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Scheduled { time, seq, event });
    }

    pub fn pop(&mut self) -> Option<(f64, Event)> {
        self.heap.pop().map(|s| (s.time, s.event))
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|s| s.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_by_time_then_kind_then_fifo() {
        let mut cal = Calendar::new();
        cal.schedule(2.0, Event::JobArrival { class: 0, stream: 1 });
        cal.schedule(1.0, Event::JobArrival { class: 0, stream: 2 });
        cal.schedule(1.0, Event::StreamSubmission { class: 1 });
        cal.schedule(1.0, Event::ServiceCompletion { server: 3, generation: 0 });
        cal.schedule(1.0, Event::JobArrival { class: 0, stream: 3 });
        let order: Vec<_> = std::iter::from_fn(|| cal.pop()).collect();
        assert_eq!(
            order,
            vec![
                (1.0, Event::ServiceCompletion { server: 3, generation: 0 }),
                (1.0, Event::StreamSubmission { class: 1 }),
                (1.0, Event::JobArrival { class: 0, stream: 2 }),
                (1.0, Event::JobArrival { class: 0, stream: 3 }),
                (2.0, Event::JobArrival { class: 0, stream: 1 }),
            ]
        );
    }
}
