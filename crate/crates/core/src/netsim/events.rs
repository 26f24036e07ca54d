use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::netsim::NetError;
use crate::types::SimTime;

struct Entry<T> {
    time: SimTime,
    seq: u64,
    payload: T,
}

impl<T> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T> Eq for Entry<T> {}
impl<T> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Entry<T> {
    // Reversed so the max-heap pops the earliest (time, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Future-event list ordered by time, then by insertion order.
pub struct EventQueue<T> {
    heap: BinaryHeap<Entry<T>>,
    next_seq: u64,
    now: SimTime,
}

impl<T> Default for EventQueue<T> {
    fn default() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            next_seq: 0,
            now: SimTime::ZERO,
        }
    }
}

impl<T> EventQueue<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, time: SimTime, payload: T) -> Result<(), NetError> {
        if time < self.now {
            return Err(NetError::PastEvent {
                now: self.now.secs(),
                at: time.secs(),
            });
        }
        self.heap.push(Entry {
            time,
            seq: self.next_seq,
            payload,
        });
        self.next_seq += 1;
        Ok(())
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.time)
    }

    /// Remove the next event and advance the clock to it.
    pub fn pop(&mut self) -> Option<(SimTime, T)> {
        let e = self.heap.pop()?;
        self.now = e.time;
        Some((e.time, e.payload))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: f64) -> SimTime {
        SimTime::from_secs(s)
    }

    #[test]
    fn time_then_insertion_order() {
        let mut q = EventQueue::new();
        q.schedule(t(2.0), "c").unwrap();
        q.schedule(t(1.0), "a").unwrap();
        q.schedule(t(2.0), "d").unwrap();
        q.schedule(t(1.0), "b").unwrap();
        let order: Vec<_> = std::iter::from_fn(|| q.pop().map(|(_, p)| p)).collect();
        assert_eq!(order, vec!["a", "b", "c", "d"]);
        assert_eq!(q.now(), t(2.0));
    }

    #[test]
    fn past_event_rejected() {
        let mut q = EventQueue::new();
        q.schedule(t(1.0), ()).unwrap();
        q.pop();
        assert!(matches!(
            q.schedule(t(0.5), ()),
            Err(NetError::PastEvent { .. })
        ));
        assert!(q.schedule(t(1.0), ()).is_ok());
    }
}
