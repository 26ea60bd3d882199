//! Constant-rate pacer with optional multiplicative rate jitter.
//!
//! Used by scheduler experiments that need a known sending rate: the
//! reported telemetry is always the configured rate, while the actual
//! inter-packet interval may be jittered by a bounded relative error.

use super::CcCtx;
use crate::time::SimTime;

#[derive(Debug)]
pub struct PacedCc {
    rate_bps: u64,
    jitter: f64,
    jitter_factor: f64,
    jitter_drawn_at: SimTime,
}

impl PacedCc {
    pub fn new(rate_bps: u64, jitter: f64) -> Self {
        assert!(rate_bps > 0, "paced flow needs a positive rate");
        assert!((0.0..1.0).contains(&jitter));
        PacedCc {
            rate_bps,
            jitter,
            jitter_factor: 1.0,
            jitter_drawn_at: SimTime::MAX,
        }
    }

    pub fn rate_bps(&self) -> u64 {
        self.rate_bps
    }

    /// Actual rate drifts around the nominal one: a fresh factor in
    /// 1 +/- jitter every 10 ms, applied to the rate (so the relative
    /// rate error is bounded by the jitter exactly).
    pub fn pacing_interval(&mut self, now: SimTime, wire_bytes: u64, ctx: &mut CcCtx<'_>) -> SimTime {
        if self.jitter > 0.0
            && (self.jitter_drawn_at == SimTime::MAX
                || now.saturating_sub(self.jitter_drawn_at) >= SimTime::from_millis(10))
        {
            self.jitter_factor = 1.0 + ctx.rng.symmetric(ctx.stream) * self.jitter;
            self.jitter_drawn_at = now;
        }
        let rate = self.rate_bps as f64 * self.jitter_factor;
        SimTime::from_secs_f64(wire_bytes as f64 * 8.0 / rate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSource;

    #[test]
    fn unjittered_interval_is_exact() {
        let mut rng = RandomSource::new(0);
        let stream = rng.register();
        let mut ctx = CcCtx {
            rng: &mut rng,
            stream,
        };
        let mut cc = PacedCc::new(10_000_000, 0.0);
        assert_eq!(
            cc.pacing_interval(SimTime::ZERO, 1500, &mut ctx),
            SimTime::from_micros(1200)
        );
    }

    #[test]
    fn jitter_stays_within_bound() {
        let mut rng = RandomSource::new(3);
        let stream = rng.register();
        let mut cc = PacedCc::new(10_000_000, 0.1);
        let base = 1200.0e-6;
        for i in 0..1000u64 {
            let mut ctx = CcCtx {
                rng: &mut rng,
                stream,
            };
            let now = SimTime::from_millis(i * 3);
            let iv = cc.pacing_interval(now, 1500, &mut ctx).as_secs_f64();
            // rate in [0.9x, 1.1x] implies interval in [base/1.1, base/0.9]
            assert!(iv >= base / 1.1 - 1e-9 && iv <= base / 0.9 + 1e-9);
        }
    }
}
