//! Discrete-event engine: a virtual clock and a time-ordered event queue.
//!
//! Events with equal fire times dispatch in insertion order, so a run is a
//! total order over (fire_at, insertion counter). Cancellation is lazy: a
//! cancelled entry stays in the heap and is skipped when popped.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::collections::HashSet;

use crate::time::SimTime;

/// Identifies a scheduled event for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

#[derive(Debug)]
struct Entry<A> {
    fire_at: SimTime,
    seq: u64,
    action: A,
}

impl<A> PartialEq for Entry<A> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.seq == other.seq
    }
}
impl<A> Eq for Entry<A> {}
impl<A> PartialOrd for Entry<A> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<A> Ord for Entry<A> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.fire_at, self.seq).cmp(&(other.fire_at, other.seq))
    }
}

#[derive(Debug)]
pub struct Engine<A> {
    now: SimTime,
    heap: BinaryHeap<Reverse<Entry<A>>>,
    next_seq: u64,
    cancelled: HashSet<u64>,
    dispatched: u64,
}

impl<A> Default for Engine<A> {
    fn default() -> Self {
        Self::new()
    }
}

impl<A> Engine<A> {
    pub fn new() -> Self {
        Engine {
            now: SimTime::ZERO,
            heap: BinaryHeap::new(),
            next_seq: 0,
            cancelled: HashSet::new(),
            dispatched: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of events dispatched so far.
    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    /// Schedules `action` at `fire_at`. Scheduling in the past is a
    /// programming error and aborts the run.
    pub fn schedule(&mut self, fire_at: SimTime, action: A) -> EventHandle {
        assert!(
            fire_at >= self.now,
            "scheduled event in the past: fire_at={:?} clock={:?}",
            fire_at,
            self.now
        );
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Entry {
            fire_at,
            seq,
            action,
        }));
        EventHandle(seq)
    }

    /// Marks an event so it will never dispatch. Cancelling an already
    /// dispatched handle is a no-op.
    pub fn cancel(&mut self, handle: EventHandle) {
        self.cancelled.insert(handle.0);
    }

    /// Pops the next live event with fire_at <= end, advancing the clock to
    /// its fire time. Returns None once the queue holds nothing due by `end`;
    /// the clock then rests at `end`.
    pub fn pop_due(&mut self, end: SimTime) -> Option<(SimTime, A)> {
        loop {
            match self.heap.peek() {
                Some(Reverse(entry)) if entry.fire_at <= end => {
                    let Reverse(entry) = self.heap.pop().unwrap();
                    if self.cancelled.remove(&entry.seq) {
                        continue;
                    }
                    debug_assert!(entry.fire_at >= self.now);
                    self.now = entry.fire_at;
                    self.dispatched += 1;
                    return Some((entry.fire_at, entry.action));
                }
                _ => {
                    self.now = self.now.max(end);
                    return None;
                }
            }
        }
    }

    /// Dispatches every event due by `end` through `handler` and returns the
    /// final clock, which is always `end`.
    pub fn run_until(
        &mut self,
        end: SimTime,
        mut handler: impl FnMut(&mut Engine<A>, SimTime, A),
    ) -> SimTime {
        while let Some((t, action)) = self.pop_due(end) {
            handler(self, t, action);
        }
        self.now
    }

    pub fn is_empty(&self) -> bool {
        self.heap.len() == self.cancelled.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_at_current_clock_dispatches_first() {
        let mut eng = Engine::new();
        eng.schedule(SimTime::ZERO, "a");
        let (t, a) = eng.pop_due(SimTime::from_secs(1)).unwrap();
        assert_eq!(t, SimTime::ZERO);
        assert_eq!(a, "a");
    }

    #[test]
    fn equal_fire_times_keep_insertion_order() {
        let mut eng = Engine::new();
        let at = SimTime::from_millis(10);
        eng.schedule(at, "a");
        eng.schedule(at, "b");
        let order: Vec<_> = std::iter::from_fn(|| eng.pop_due(at).map(|(_, a)| a)).collect();
        assert_eq!(order, vec!["a", "b"]);
    }

    #[test]
    #[should_panic(expected = "scheduled event in the past")]
    fn scheduling_in_the_past_aborts() {
        let mut eng = Engine::new();
        eng.schedule(SimTime::from_millis(10), ());
        eng.pop_due(SimTime::from_millis(10));
        eng.schedule(SimTime::from_millis(5), ());
    }

    #[test]
    fn run_until_empty_queue_advances_clock() {
        let mut eng: Engine<()> = Engine::new();
        let end = eng.run_until(SimTime::from_secs(60), |_, _, _| {});
        assert_eq!(end, SimTime::from_secs(60));
        assert_eq!(eng.dispatched(), 0);
    }

    #[test]
    fn run_until_dispatches_only_due_events() {
        let mut eng = Engine::new();
        for s in [1u64, 2, 3] {
            eng.schedule(SimTime::from_secs(s), s);
        }
        let mut seen = vec![];
        eng.run_until(SimTime::from_secs(2), |_, _, a| seen.push(a));
        assert_eq!(seen, vec![1, 2]);
        assert_eq!(eng.now(), SimTime::from_secs(2));
    }

    #[test]
    fn handler_scheduling_at_now_dispatches_same_pass() {
        // Oracle: every insertion is dispatched exactly once, including
        // events a handler schedules at the current clock.
        let mut eng = Engine::new();
        eng.schedule(SimTime::from_millis(1), 0u32);
        let mut insertions = 1u64;
        let mut dispatches = 0u64;
        eng.run_until(SimTime::from_secs(1), |eng, now, depth| {
            dispatches += 1;
            if depth < 5 {
                eng.schedule(now, depth + 1);
                insertions += 1;
            }
        });
        assert_eq!(dispatches, insertions);
        assert_eq!(dispatches, 6);
    }

    #[test]
    fn cancelled_events_never_dispatch() {
        let mut eng = Engine::new();
        let h = eng.schedule(SimTime::from_millis(1), "dead");
        eng.schedule(SimTime::from_millis(2), "live");
        eng.cancel(h);
        let mut seen = vec![];
        eng.run_until(SimTime::from_secs(1), |_, _, a| seen.push(a));
        assert_eq!(seen, vec!["live"]);
    }
}

#[cfg(test)]
mod order_props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn dispatch_follows_fire_time_then_insertion(times in proptest::collection::vec(0u64..1000, 1..200)) {
            let mut eng = Engine::new();
            for (i, &t) in times.iter().enumerate() {
                eng.schedule(SimTime::from_micros(t), i);
            }
            let mut seen: Vec<(SimTime, usize)> = Vec::new();
            eng.run_until(SimTime::from_secs(1), |_, t, i| seen.push((t, i)));
            prop_assert_eq!(seen.len(), times.len());
            for w in seen.windows(2) {
                // total order: by time, then by insertion counter
                prop_assert!(w[0].0 < w[1].0 || (w[0].0 == w[1].0 && w[0].1 < w[1].1));
            }
        }
    }
}
