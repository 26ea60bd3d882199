//! Receiver-side out-of-order reassembly over the data sequence space.

use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OfoOutcome {
    /// Already delivered or already held: acknowledge, deliver nothing.
    Duplicate,
    /// In-order arrival: this packet plus any now-contiguous held ones.
    Delivered(u64),
    /// Ahead of the next expected sequence number; held.
    Held,
}

#[derive(Debug, Default)]
pub struct OfoQueue {
    next_dsn: u64,
    held: BTreeSet<u64>,
    max_len: usize,
}

impl OfoQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_expected(&self) -> u64 {
        self.next_dsn
    }

    pub fn len(&self) -> usize {
        self.held.len()
    }

    pub fn is_empty(&self) -> bool {
        self.held.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn offer(&mut self, dsn: u64) -> OfoOutcome {
        if dsn < self.next_dsn || self.held.contains(&dsn) {
            return OfoOutcome::Duplicate;
        }
        if dsn != self.next_dsn {
            self.held.insert(dsn);
            self.max_len = self.max_len.max(self.held.len());
            return OfoOutcome::Held;
        }
        self.next_dsn += 1;
        let mut delivered = 1;
        while self.held.remove(&self.next_dsn) {
            self.next_dsn += 1;
            delivered += 1;
        }
        OfoOutcome::Delivered(delivered)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn in_order_arrivals_never_queue() {
        let mut q = OfoQueue::new();
        for dsn in 0..10 {
            assert_eq!(q.offer(dsn), OfoOutcome::Delivered(1));
            assert_eq!(q.len(), 0);
        }
        assert_eq!(q.max_len(), 0);
    }

    #[test]
    fn gap_then_fill_drains_everything() {
        let mut q = OfoQueue::new();
        assert_eq!(q.offer(0), OfoOutcome::Delivered(1));
        assert_eq!(q.offer(2), OfoOutcome::Held);
        assert_eq!(q.offer(3), OfoOutcome::Held);
        assert_eq!(q.len(), 2);
        assert_eq!(q.offer(1), OfoOutcome::Delivered(3));
        assert_eq!(q.len(), 0);
        assert_eq!(q.next_expected(), 4);
        assert_eq!(q.max_len(), 2);
    }

    #[test]
    fn duplicates_are_not_delivered_twice() {
        let mut q = OfoQueue::new();
        q.offer(0);
        assert_eq!(q.offer(0), OfoOutcome::Duplicate);
        q.offer(2);
        assert_eq!(q.offer(2), OfoOutcome::Duplicate);
        assert_eq!(q.offer(1), OfoOutcome::Delivered(2));
    }
}
