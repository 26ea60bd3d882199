//! Rate-based congestion control with a four-phase machine.
//!
//! STARTUP/DRAIN find the pipe, PROBE_BW cycles an 8-slot pacing-gain
//! pattern once per min-RTT, PROBE_RTT drains to 4 packets every 10 s to
//! refresh the minimum RTT. The plain controller runs the classic cycle
//! {1.25, 0.75, 1, 1, 1, 1, 1, 1}; the coupled variant replaces the six
//! unity slots with the connection-wide alpha from [`coupling`], falling
//! back to four packets per RTT when alpha is not positive. Loss never
//! resets the bandwidth filter.

use super::coupling::CoupledGains;
use super::filters::{RttEstimator, WindowedMaxBw};
use super::AckSample;
use crate::time::SimTime;

/// 2 / ln 2: doubles the sending rate each round while starting up.
const STARTUP_GAIN: f64 = 2.885_390_081_777_926_8;
/// Reciprocal of the startup gain, drains the startup queue.
const DRAIN_GAIN: f64 = 1.0 / STARTUP_GAIN;
const BW_WINDOW_ROUNDS: u64 = 10;
const PROBE_RTT_MIN_HOLD: SimTime = SimTime::from_millis(200);
const MIN_CWND_PKTS: u64 = 4;
const INIT_CWND_PKTS: u64 = 10;
const CYCLE_LEN: usize = 8;
/// Growth threshold (5/4) over three rounds that ends STARTUP.
const FULL_BW_GROWTH_NUM: u64 = 5;
const FULL_BW_GROWTH_DEN: u64 = 4;
const FULL_BW_ROUNDS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Startup,
    Drain,
    ProbeBw,
    ProbeRtt,
}

#[derive(Debug)]
pub struct Bbr {
    mss: u32,
    wire_overhead: u32,
    coupled: bool,
    gains: CoupledGains,
    phase: Phase,
    cycle_index: usize,
    cycle_stamp: SimTime,
    cycle_advanced: bool,
    bw_filter: WindowedMaxBw,
    round_count: u64,
    next_round_delivered: u64,
    full_bw: u64,
    full_bw_count: u32,
    filled_pipe: bool,
    probe_rtt_hold_until: Option<SimTime>,
    probe_rtt_min: Option<SimTime>,
    saved_cwnd_pkts: u64,
    cwnd_pkts: u64,
    /// Initial cycle slot, drawn once by the connection so replays and
    /// sibling subflows stay aligned.
    initial_cycle: usize,
    loss_in_cycle: bool,
    last_restart: SimTime,
    slot_scale: f64,
    slot_scale_dirty: bool,
    pub probe_rtt_entries: u64,
}

impl Bbr {
    pub fn new(mss: u32, wire_overhead: u32, coupled: bool, initial_cycle: usize) -> Self {
        Bbr {
            mss,
            wire_overhead,
            coupled,
            gains: CoupledGains::SINGLE,
            phase: Phase::Startup,
            cycle_index: initial_cycle % CYCLE_LEN,
            cycle_stamp: SimTime::ZERO,
            cycle_advanced: false,
            bw_filter: WindowedMaxBw::new(BW_WINDOW_ROUNDS),
            round_count: 0,
            next_round_delivered: 0,
            full_bw: 0,
            full_bw_count: 0,
            filled_pipe: false,
            probe_rtt_hold_until: None,
            probe_rtt_min: None,
            loss_in_cycle: false,
            last_restart: SimTime::ZERO,
            slot_scale: 1.0,
            slot_scale_dirty: false,
            probe_rtt_entries: 0,
            saved_cwnd_pkts: INIT_CWND_PKTS,
            cwnd_pkts: INIT_CWND_PKTS,
            initial_cycle: initial_cycle % CYCLE_LEN,
        }
    }

    pub fn is_coupled(&self) -> bool {
        self.coupled
    }

    pub fn gains(&self) -> CoupledGains {
        self.gains
    }

    pub fn set_coupled_gains(&mut self, gains: CoupledGains) {
        self.gains = gains;
    }

    pub fn bw_bps(&self) -> u64 {
        self.bw_filter.get()
    }

    pub fn in_startup(&self) -> bool {
        self.phase == Phase::Startup
    }

    pub fn cwnd_pkts(&self) -> u64 {
        self.cwnd_pkts
    }

    pub fn take_cycle_advanced(&mut self) -> bool {
        std::mem::take(&mut self.cycle_advanced)
    }

    pub fn cycle_index(&self) -> Option<usize> {
        if self.phase == Phase::ProbeBw {
            Some(self.cycle_index)
        } else {
            None
        }
    }

    /// Aligns this subflow's gain cycle to the connection-wide slot. The
    /// probing phase runs one cycle per connection, not per subflow.
    pub fn sync_cycle(&mut self, idx: usize, now: SimTime) {
        if self.phase == Phase::ProbeBw && self.cycle_index != idx % CYCLE_LEN {
            self.cycle_index = idx % CYCLE_LEN;
            self.cycle_stamp = now;
            self.loss_in_cycle = false;
            self.record_qualification(now);
        }
    }

    /// Whether a packet sent now yields a usable delivery-rate sample.
    /// Slots pacing below the estimate (drain, sub-unity cruise, the
    /// min-RTT hold) under-utilize by design; letting their samples into
    /// the max filter would ratchet the estimate down by the cruise gain
    /// on every window expiry.
    pub fn sample_qualifies(&self) -> bool {
        match self.phase {
            Phase::Startup => true,
            Phase::Drain | Phase::ProbeRtt => false,
            Phase::ProbeBw => match self.cycle_index {
                0 => true,
                1 => false,
                _ => self.cruise_gain() >= 1.0,
            },
        }
    }

    /// One-line state dump for debugging runs.
    pub fn debug_state(&self) -> String {
        format!(
            "{:?} idx={} bw={:.1}Mbps full_bw={:.1} filled={} alpha={:.3} prtt={}",
            self.phase,
            self.cycle_index,
            self.bw_filter.get() as f64 / 1e6,
            self.full_bw as f64 / 1e6,
            self.filled_pipe,
            self.gains.alpha,
            self.probe_rtt_entries
        )
    }

    fn wire_pkt(&self) -> u64 {
        (self.mss + self.wire_overhead) as u64
    }

    /// Bandwidth used for pacing math; before any sample, a bootstrap value
    /// that empties the initial window in about a millisecond (the window
    /// cap, not this rate, limits the first flight). A coupled subflow in
    /// the fallback regime paces its probe slots against a quarter of the
    /// best sibling's bandwidth, the scale at which rejoining the
    /// non-redundant set becomes worthwhile.
    fn pacing_bw(&self) -> f64 {
        let bw = self.bw_filter.get();
        if bw == 0 {
            return (INIT_CWND_PKTS * self.wire_pkt() * 8) as f64 / 1e-3;
        }
        let mut eff = bw as f64;
        if self.coupled && self.gains.alpha <= 0.0 && self.phase == Phase::ProbeBw {
            eff = eff.max(self.gains.sibling_max_bps / 4.0);
        }
        eff
    }

    fn cruise_gain(&self) -> f64 {
        self.gains.alpha
    }

    fn current_gain(&self) -> f64 {
        match self.phase {
            Phase::Startup => STARTUP_GAIN,
            Phase::Drain => DRAIN_GAIN,
            Phase::ProbeRtt => 1.0,
            Phase::ProbeBw => match self.cycle_index {
                0 => 1.25,
                1 => 0.75,
                _ => self.cruise_gain(),
            },
        }
    }

    /// Steps the gain cycle. The probe slot holds until it has actually
    /// stressed the pipe (a min-RTT elapsed and either loss or 5/4 of the
    /// estimated bandwidth-delay product in flight); the drain slot ends
    /// as soon as the probe's queue is gone; cruise slots are one min-RTT
    /// each, dithered +/-15% so competing flows do not phase-lock.
    fn advance_cycle_if_due(
        &mut self,
        now: SimTime,
        min_rtt: SimTime,
        inflight_pkts: u64,
    ) {
        if self.phase != Phase::ProbeBw {
            return;
        }
        let slot = min_rtt.mul_f64(self.slot_scale);
        let elapsed = now.saturating_sub(self.cycle_stamp) >= slot;
        let bdp_pkts = (self.bdp_bytes(min_rtt) / self.wire_pkt()).max(4);
        let due = match self.cycle_index {
            0 => elapsed && (self.loss_in_cycle || inflight_pkts * 4 >= bdp_pkts * 5),
            1 => elapsed || inflight_pkts <= bdp_pkts,
            _ => elapsed,
        };
        if due {
            self.cycle_index = (self.cycle_index + 1) % CYCLE_LEN;
            self.cycle_stamp = now;
            self.cycle_advanced = true;
            self.loss_in_cycle = false;
            self.slot_scale_dirty = true;
            self.record_qualification(now);
        }
    }

    /// Draws the next slot's duration dither; called with rng access.
    pub fn refresh_slot_scale(&mut self, ctx: &mut super::CcCtx<'_>) {
        if self.slot_scale_dirty {
            self.slot_scale_dirty = false;
            self.slot_scale = 1.0 + ctx.rng.symmetric(ctx.stream) * 0.15;
        }
    }

    fn record_qualification(&mut self, _now: SimTime) {}

    pub fn note_loss(&mut self) {
        self.loss_in_cycle = true;
    }

    /// Timeout: the window falls to one packet until delivery resumes
    /// (the next ack recomputes it); the pacing rate is untouched.
    pub fn collapse_cwnd(&mut self) {
        self.cwnd_pkts = 1;
    }

    /// Feeds a delivered-counter derivative into the bandwidth filter,
    /// raise-only: it keeps the estimate anchored to the true confirmed
    /// arrival rate through recovery churn without letting deliberate
    /// under-utilization slots pull the maximum down.
    pub fn feed_rate_sample(&mut self, bps: u64) {
        if bps >= self.bw_filter.get() {
            self.bw_filter.update(self.round_count, bps);
        }
    }

    fn enter_probe_bw(&mut self, now: SimTime) {
        self.phase = Phase::ProbeBw;
        self.cycle_index = self.initial_cycle;
        self.cycle_stamp = now;
        self.cycle_advanced = true;
        self.record_qualification(now);
    }

    fn bdp_bytes(&self, min_rtt: SimTime) -> u64 {
        let bw = self.bw_filter.get();
        if bw == 0 {
            return INIT_CWND_PKTS * self.wire_pkt();
        }
        let eff = self.pacing_bw();
        ((eff as u128 * min_rtt.as_nanos() as u128) / (8 * 1_000_000_000)) as u64
    }

    pub fn on_ack(&mut self, s: &AckSample, rtt: &mut RttEstimator, _ctx: &mut super::CcCtx<'_>) {
        // Round accounting: a round ends when a packet sent after the
        // previous round's close is acked.
        let round_start = s.prior_delivered >= self.next_round_delivered;
        if round_start {
            self.next_round_delivered = s.delivered;
            self.round_count += 1;
        }

        // Delivery-rate sample into the windowed max.
        if let Some(bps) = s.rate_sample_bps {
            self.bw_filter.update(self.round_count, bps);
        }

        // The estimate collapsing to a sixteenth of the established pipe
        // means the old measurement no longer describes this path: grow
        // and re-measure from scratch. At most once per five seconds so
        // restarts cannot feed on each other.
        if self.filled_pipe
            && self.full_bw > 0
            && s.now.saturating_sub(self.last_restart) >= SimTime::from_secs(5)
        {
            let bw = self.bw_filter.get();
            if bw > 0 && bw * 16 < self.full_bw {
                self.filled_pipe = false;
                self.full_bw = 0;
                self.full_bw_count = 0;
                self.phase = Phase::Startup;
                self.last_restart = s.now;
                self.record_qualification(s.now);
            }
        }

        if !self.filled_pipe && round_start {
            let bw = self.bw_filter.get();
            if bw * FULL_BW_GROWTH_DEN >= self.full_bw * FULL_BW_GROWTH_NUM {
                self.full_bw = bw;
                self.full_bw_count = 0;
            } else {
                self.full_bw_count += 1;
                if self.full_bw_count >= FULL_BW_ROUNDS {
                    self.filled_pipe = true;
                    if self.phase == Phase::Startup {
                        self.phase = Phase::Drain;
                        self.record_qualification(s.now);
                    }
                }
            }
        }

        if self.phase == Phase::Drain && s.inflight_bytes_after <= self.bdp_bytes(rtt.min_rtt()) {
            self.enter_probe_bw(s.now);
        }

        self.advance_cycle_if_due(s.now, rtt.min_rtt(), s.inflight_pkts_after);

        // Min-RTT refresh: drain to 4 packets for max(min_rtt, 200 ms)
        // and adopt the smallest RTT seen while drained.
        if self.phase != Phase::ProbeRtt
            && rtt.has_sample()
            && rtt.min_rtt_age(s.now) >= SimTime::from_secs(10)
        {
            self.saved_cwnd_pkts = self.cwnd_pkts;
            self.phase = Phase::ProbeRtt;
            self.probe_rtt_hold_until = None;
            self.probe_rtt_min = None;
            self.probe_rtt_entries += 1;
            self.record_qualification(s.now);
        }

        if self.phase == Phase::ProbeRtt {
            self.cwnd_pkts = MIN_CWND_PKTS;
            if self.probe_rtt_hold_until.is_none() && s.inflight_pkts_after <= MIN_CWND_PKTS {
                self.probe_rtt_hold_until = Some(s.now + rtt.min_rtt().max(PROBE_RTT_MIN_HOLD));
            }
            if self.probe_rtt_hold_until.is_some() {
                if let Some(sample) = s.rtt_sample {
                    self.probe_rtt_min =
                        Some(self.probe_rtt_min.map_or(sample, |m| m.min(sample)));
                }
            }
            if let Some(done) = self.probe_rtt_hold_until {
                if s.now >= done {
                    match self.probe_rtt_min {
                        Some(m) => rtt.set_min_rtt(m, s.now),
                        None => rtt.touch_min_rtt(s.now),
                    }
                    self.cwnd_pkts = self.saved_cwnd_pkts;
                    self.probe_rtt_hold_until = None;
                    if self.filled_pipe {
                        self.enter_probe_bw(s.now);
                    } else {
                        self.phase = Phase::Startup;
                        self.record_qualification(s.now);
                    }
                }
            }
            return;
        }

        // Window cap: 2 BDP in steady state, startup gain while finding
        // the pipe, never below 4 packets.
        let cwnd_gain = if self.filled_pipe { 2.0 } else { STARTUP_GAIN };
        let target = (self.bdp_bytes(rtt.min_rtt()) as f64 * cwnd_gain) / self.wire_pkt() as f64;
        self.cwnd_pkts = (target.ceil() as u64)
            .max(MIN_CWND_PKTS)
            .max(if self.bw_filter.get() == 0 {
                INIT_CWND_PKTS
            } else {
                MIN_CWND_PKTS
            });
    }

    fn keepalive_rate(&self, rtt: &RttEstimator) -> f64 {
        (4 * self.wire_pkt() * 8) as f64 / rtt.srtt().as_secs_f64()
    }

    /// Interval until the next departure. In the six cruise slots a coupled
    /// subflow with alpha <= 0 idles for a quarter RTT per packet, keeping
    /// four packets a round in the network to stay alive; its probe slots
    /// pace at least at that floor so the bandwidth estimate can regrow.
    pub fn pacing_interval(
        &mut self,
        now: SimTime,
        wire_bytes: u64,
        rtt: &RttEstimator,
        inflight_pkts: u64,
    ) -> SimTime {
        self.advance_cycle_if_due(now, rtt.min_rtt(), inflight_pkts);
        if self.phase == Phase::ProbeBw && self.cycle_index >= 2 && self.cruise_gain() <= 0.0 {
            return SimTime::from_nanos(rtt.srtt().as_nanos() / 4);
        }
        let gain = self.current_gain();
        let mut rate = gain * self.pacing_bw();
        if self.phase == Phase::ProbeBw {
            rate = rate.max(gain * self.keepalive_rate(rtt));
        }
        SimTime::from_secs_f64(wire_bytes as f64 * 8.0 / rate)
    }

    /// Steady sending rate in bits per second: the cycle-average rate in
    /// the probing phase (backlogs drain across whole cycles, so this is
    /// what schedulers should predict with), the momentary rate elsewhere.
    pub fn rate_bps(&self, rtt: &RttEstimator) -> f64 {
        match self.phase {
            Phase::ProbeBw => {
                if self.cruise_gain() <= 0.0 {
                    return self.keepalive_rate(rtt);
                }
                let mean_gain = super::coupling::mean_cycle_gain(self.gains.alpha);
                (mean_gain * self.pacing_bw()).max(self.keepalive_rate(rtt))
            }
            _ => self.current_gain() * self.pacing_bw(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cc::CcCtx;
    use crate::rng::RandomSource;

    fn ctx_parts() -> (RandomSource, crate::rng::StreamId) {
        let mut rng = RandomSource::new(1);
        let s = rng.register();
        (rng, s)
    }

    fn probe_bw_bbr(bw_bps: u64, coupled: bool) -> (Bbr, RttEstimator) {
        let mut bbr = Bbr::new(1448, 52, coupled, 2);
        let mut rtt = RttEstimator::new();
        rtt.update(SimTime::from_millis(40), SimTime::from_millis(40));
        bbr.bw_filter.update(0, bw_bps);
        bbr.filled_pipe = true;
        bbr.phase = Phase::ProbeBw;
        bbr.cycle_stamp = SimTime::from_millis(40);
        (bbr, rtt)
    }

    #[test]
    fn cruise_interval_with_coupled_alpha() {
        // bw 100 Mbps, alpha 2.2/3: 1500 B spaced by 12000/(alpha*1e8) s.
        let (mut bbr, rtt) = probe_bw_bbr(100_000_000, true);
        bbr.set_coupled_gains(CoupledGains {
            beta: 0.8,
            alpha: 2.2 / 3.0,
            sibling_max_bps: 100e6,
        });
        bbr.cycle_index = 3;
        let iv = bbr.pacing_interval(SimTime::from_millis(41), 1500, &rtt, 100);
        let expect = 1500.0 * 8.0 / (2.2 / 3.0 * 1e8);
        assert_eq!(iv, SimTime::from_secs_f64(expect));
        assert!((iv.as_secs_f64() - 163.6e-6).abs() < 0.1e-6);
    }

    #[test]
    fn probe_slot_uses_five_quarters_gain() {
        let (mut bbr, rtt) = probe_bw_bbr(100_000_000, false);
        bbr.cycle_index = 0;
        let iv = bbr.pacing_interval(SimTime::from_millis(41), 1500, &rtt, 100);
        assert_eq!(iv, SimTime::from_micros(96));
    }

    #[test]
    fn non_positive_alpha_paces_four_per_rtt() {
        let (mut bbr, rtt) = probe_bw_bbr(100_000_000, true);
        bbr.set_coupled_gains(CoupledGains {
            beta: 0.19,
            alpha: -0.08,
            sibling_max_bps: 100e6,
        });
        bbr.cycle_index = 4;
        let iv = bbr.pacing_interval(SimTime::from_millis(41), 1500, &rtt, 100);
        assert_eq!(iv, SimTime::from_millis(10));
    }

    #[test]
    fn cycle_advances_once_per_min_rtt() {
        let (mut bbr, rtt) = probe_bw_bbr(10_000_000, false);
        assert_eq!(bbr.cycle_index, 2);
        bbr.advance_cycle_if_due(SimTime::from_millis(50), rtt.min_rtt(), 1000);
        assert_eq!(bbr.cycle_index, 2);
        bbr.advance_cycle_if_due(SimTime::from_millis(80), rtt.min_rtt(), 1000);
        assert_eq!(bbr.cycle_index, 3);
        assert!(bbr.take_cycle_advanced());
        assert!(!bbr.take_cycle_advanced());
    }

    #[test]
    fn startup_exits_after_three_flat_rounds() {
        let mut bbr = Bbr::new(1448, 52, false, 0);
        let mut rtt = RttEstimator::new();
        let (mut rng, stream) = ctx_parts();
        let mut ctx = CcCtx {
            rng: &mut rng,
            stream,
        };
        let mut delivered = 0u64;
        let mut now = SimTime::ZERO;
        // Same delivery rate every round: growth stalls, pipe declared full.
        for round in 0..6u64 {
            now = now + SimTime::from_millis(20);
            rtt.update(SimTime::from_millis(20), now);
            let prior = delivered;
            delivered += 30_000;
            bbr.on_ack(
                &AckSample {
                    now,
                    newly_acked_bytes: 1500,
                    rtt_sample: Some(SimTime::from_millis(20)),
                    rate_sample_bps: Some(30_000 * 8 * 50), // constant rate
                    delivered,
                    prior_delivered: prior,
                    inflight_bytes_after: 1_000_000,
                    inflight_pkts_after: 700,
                },
                &mut rtt,
                &mut ctx,
            );
            if round < 3 {
                assert!(bbr.in_startup(), "round {round}");
            }
        }
        assert!(!bbr.in_startup());
    }
}
