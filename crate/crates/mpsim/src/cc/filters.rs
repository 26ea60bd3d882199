//! Delivery-rate and RTT filters.

use crate::time::SimTime;

/// Windowed maximum of delivery-rate samples, indexed by round-trip count.
/// Keeps a monotonically decreasing deque of (round, sample).
#[derive(Debug, Default)]
pub struct WindowedMaxBw {
    window_rounds: u64,
    entries: Vec<(u64, u64)>,
}

impl WindowedMaxBw {
    pub fn new(window_rounds: u64) -> Self {
        WindowedMaxBw {
            window_rounds,
            entries: Vec::new(),
        }
    }

    pub fn update(&mut self, round: u64, sample_bps: u64) {
        while self
            .entries
            .last()
            .is_some_and(|&(_, v)| v <= sample_bps)
        {
            self.entries.pop();
        }
        self.entries.push((round, sample_bps));
        self.expire(round);
    }

    /// Expires entries older than the window, but never the last one: an
    /// estimate holds until a newer sample displaces it.
    pub fn expire(&mut self, round: u64) {
        while self.entries.len() > 1
            && self
                .entries
                .first()
                .is_some_and(|&(r, _)| round.saturating_sub(r) >= self.window_rounds)
        {
            self.entries.remove(0);
        }
    }

    /// Current maximum, or 0 before the first sample.
    pub fn get(&self) -> u64 {
        self.entries.first().map(|&(_, v)| v).unwrap_or(0)
    }
}

/// Smoothed RTT per RFC 6298 (gains 1/8 and 1/4), a 10 s windowed minimum,
/// and the retransmission timeout derived from both.
#[derive(Debug)]
pub struct RttEstimator {
    srtt: Option<SimTime>,
    rttvar: SimTime,
    min_rtt: SimTime,
    min_rtt_stamp: SimTime,
    rto_floor: SimTime,
}

impl RttEstimator {
    pub fn new() -> Self {
        RttEstimator {
            srtt: None,
            rttvar: SimTime::ZERO,
            min_rtt: SimTime::MAX,
            min_rtt_stamp: SimTime::ZERO,
            rto_floor: SimTime::from_millis(200),
        }
    }

    pub fn update(&mut self, sample: SimTime, now: SimTime) {
        match self.srtt {
            None => {
                self.srtt = Some(sample);
                self.rttvar = SimTime::from_nanos(sample.as_nanos() / 2);
            }
            Some(srtt) => {
                let delta = if sample > srtt {
                    sample - srtt
                } else {
                    srtt - sample
                };
                self.rttvar =
                    SimTime::from_nanos((3 * self.rttvar.as_nanos() + delta.as_nanos()) / 4);
                self.srtt =
                    Some(SimTime::from_nanos((7 * srtt.as_nanos() + sample.as_nanos()) / 8));
            }
        }
        if sample < self.min_rtt {
            self.min_rtt = sample;
            self.min_rtt_stamp = now;
        }
    }

    /// Replaces the minimum with a fresh drained-pipe measurement. The 10 s
    /// window is enforced by the controller's min-RTT probe, which calls
    /// this when its drain completes.
    pub fn set_min_rtt(&mut self, value: SimTime, now: SimTime) {
        self.min_rtt = value;
        self.min_rtt_stamp = now;
    }

    pub fn has_sample(&self) -> bool {
        self.srtt.is_some()
    }

    pub fn srtt(&self) -> SimTime {
        self.srtt.unwrap_or(SimTime::from_millis(100))
    }

    pub fn min_rtt(&self) -> SimTime {
        if self.min_rtt == SimTime::MAX {
            self.srtt()
        } else {
            self.min_rtt
        }
    }

    pub fn min_rtt_age(&self, now: SimTime) -> SimTime {
        now.saturating_sub(self.min_rtt_stamp)
    }

    /// Called when a min-RTT probe completes, so staleness restarts from now.
    pub fn touch_min_rtt(&mut self, now: SimTime) {
        self.min_rtt_stamp = now;
    }

    pub fn rto(&self) -> SimTime {
        let raw = self.srtt() + self.rttvar.mul_f64(4.0);
        raw.max(self.rto_floor)
    }
}

impl Default for RttEstimator {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_filter_ignores_smaller_samples() {
        let mut f = WindowedMaxBw::new(10);
        f.update(0, 100);
        f.update(1, 60);
        assert_eq!(f.get(), 100);
        f.update(2, 130);
        assert_eq!(f.get(), 130);
    }

    #[test]
    fn max_filter_expires_after_window() {
        let mut f = WindowedMaxBw::new(10);
        f.update(0, 100);
        f.update(5, 60);
        f.update(10, 50);
        // round 10 - round 0 >= 10: the old peak leaves the window.
        assert_eq!(f.get(), 60);
    }

    #[test]
    fn max_filter_keeps_last_entry() {
        let mut f = WindowedMaxBw::new(10);
        f.update(0, 100);
        f.expire(50);
        assert_eq!(f.get(), 100);
        f.update(50, 30);
        f.expire(70);
        assert_eq!(f.get(), 30);
    }

    #[test]
    fn min_rtt_takes_smaller_sample() {
        let mut r = RttEstimator::new();
        r.update(SimTime::from_millis(25), SimTime::from_secs(1));
        r.update(SimTime::from_millis(24), SimTime::from_secs(2));
        assert_eq!(r.min_rtt(), SimTime::from_millis(24));
    }

    #[test]
    fn min_rtt_refreshes_via_probe() {
        let mut r = RttEstimator::new();
        r.update(SimTime::from_millis(20), SimTime::from_secs(1));
        r.update(SimTime::from_millis(30), SimTime::from_secs(12));
        // Larger samples never displace the minimum on their own.
        assert_eq!(r.min_rtt(), SimTime::from_millis(20));
        assert!(r.min_rtt_age(SimTime::from_secs(12)) >= SimTime::from_secs(10));
        r.set_min_rtt(SimTime::from_millis(30), SimTime::from_secs(12));
        assert_eq!(r.min_rtt(), SimTime::from_millis(30));
        assert_eq!(r.min_rtt_age(SimTime::from_secs(12)), SimTime::ZERO);
    }

    #[test]
    fn rto_has_floor() {
        let mut r = RttEstimator::new();
        r.update(SimTime::from_millis(1), SimTime::from_secs(1));
        assert_eq!(r.rto(), SimTime::from_millis(200));
    }
}
