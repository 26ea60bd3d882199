//! Congestion control: per-subflow telemetry plus the rate/window machines.
//!
//! Two families live here. Window-based AIMD controllers (NewReno and the
//! coupled LIA/OLIA/BALIA variants) gate sending on cwnd and react to loss.
//! Rate-based controllers (BBR, its bandwidth-coupled variant, and a fixed
//! pacer used for scheduler experiments) emit an inter-packet interval and
//! keep a windowed-max bandwidth estimate that loss does not reset.

pub mod aimd;
pub mod bbr;
pub mod coupling;
pub mod dd;
pub mod filters;
pub mod paced;

pub use aimd::{AimdCc, AimdFlavor};
pub use bbr::Bbr;
pub use coupling::{coupled_gains, mean_cycle_gain, weighted_rate_sum, CoupledGains};
pub use filters::{RttEstimator, WindowedMaxBw};
pub use paced::PacedCc;

use crate::rng::{RandomSource, StreamId};
use crate::time::SimTime;

/// Per-ACK input assembled by the connection from its send records.
#[derive(Debug, Clone, Copy)]
pub struct AckSample {
    pub now: SimTime,
    pub newly_acked_bytes: u64,
    /// None when the echoed packet was retransmitted (Karn's rule).
    pub rtt_sample: Option<SimTime>,
    /// Delivery-rate sample bounded by the send-side interval; None when
    /// the echo's transmission history makes it unusable.
    pub rate_sample_bps: Option<u64>,
    /// Cumulative bytes delivered on this subflow, after this ACK.
    pub delivered: u64,
    /// `delivered` as it stood when the echoed packet was sent.
    pub prior_delivered: u64,
    pub inflight_bytes_after: u64,
    pub inflight_pkts_after: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    FastRetransmit,
    Timeout,
}

/// Sibling state snapshot for coupled window increases.
#[derive(Debug, Clone, Copy)]
pub struct Sibling {
    pub cwnd_pkts: f64,
    pub srtt_s: f64,
}

/// Rng access for controllers that draw (cycle randomization, pacing jitter).
pub struct CcCtx<'a> {
    pub rng: &'a mut RandomSource,
    pub stream: StreamId,
}

#[derive(Debug)]
pub enum Cc {
    Aimd(AimdCc),
    Bbr(Bbr),
    Paced(PacedCc),
}

impl Cc {
    #[allow(clippy::too_many_arguments)]
    pub fn on_ack(
        &mut self,
        sample: &AckSample,
        rtt: &mut RttEstimator,
        siblings: &[Sibling],
        own_index: usize,
        ctx: &mut CcCtx<'_>,
    ) {
        match self {
            Cc::Aimd(c) => c.on_ack(sample, siblings, own_index),
            Cc::Bbr(c) => {
                c.on_ack(sample, rtt, ctx);
                c.refresh_slot_scale(ctx);
            }
            Cc::Paced(_) => {}
        }
    }

    pub fn on_loss(&mut self, kind: LossKind, siblings: &[Sibling], own_index: usize) {
        match self {
            Cc::Aimd(c) => c.on_loss(kind, siblings, own_index),
            // Loss does not reset the bandwidth filter; it only ends the
            // probe slot early. A timeout additionally collapses the
            // window until delivery resumes.
            Cc::Bbr(c) => {
                c.note_loss();
                if kind == LossKind::Timeout {
                    c.collapse_cwnd();
                }
            }
            Cc::Paced(_) => {}
        }
    }

    /// Window check: may one more packet enter the network now?
    pub fn can_send(&self, inflight_pkts: u64) -> bool {
        inflight_pkts < self.cwnd_pkts()
    }

    pub fn cwnd_pkts(&self) -> u64 {
        match self {
            Cc::Aimd(c) => c.cwnd_pkts() as u64,
            Cc::Bbr(c) => c.cwnd_pkts(),
            Cc::Paced(_) => u64::MAX / 2,
        }
    }

    /// Inter-packet interval for paced controllers; None means the subflow
    /// is purely window-driven and sends as soon as the window opens.
    #[allow(clippy::too_many_arguments)]
    pub fn pacing_interval(
        &mut self,
        now: SimTime,
        wire_bytes: u64,
        rtt: &RttEstimator,
        inflight_pkts: u64,
        ctx: &mut CcCtx<'_>,
    ) -> Option<SimTime> {
        match self {
            Cc::Aimd(_) => None,
            Cc::Bbr(c) => {
                let iv = c.pacing_interval(now, wire_bytes, rtt, inflight_pkts);
                c.refresh_slot_scale(ctx);
                Some(iv)
            }
            Cc::Paced(c) => Some(c.pacing_interval(now, wire_bytes, ctx)),
        }
    }

    /// Bandwidth estimate in bits per second (0 before the first sample).
    pub fn bw_bps(&self) -> u64 {
        match self {
            Cc::Aimd(_) => 0,
            Cc::Bbr(c) => c.bw_bps(),
            Cc::Paced(c) => c.rate_bps(),
        }
    }

    /// Current sending rate x_i in bits per second, as seen by the scheduler.
    pub fn rate_bps(&self, rtt: &RttEstimator) -> f64 {
        match self {
            Cc::Aimd(c) => c.rate_bps(rtt),
            Cc::Bbr(c) => c.rate_bps(rtt),
            Cc::Paced(c) => c.rate_bps() as f64,
        }
    }

    /// Bandwidth figure the scheduling window is sized from.
    pub fn sched_bw_bps(&self, rtt: &RttEstimator) -> f64 {
        match self {
            Cc::Aimd(c) => c.rate_bps(rtt),
            Cc::Bbr(c) => c.bw_bps() as f64,
            Cc::Paced(c) => c.rate_bps() as f64,
        }
    }

    pub fn in_slow_start(&self) -> bool {
        match self {
            Cc::Aimd(c) => c.in_slow_start(),
            Cc::Bbr(c) => c.in_startup(),
            Cc::Paced(_) => false,
        }
    }

    /// True when the gain cycle stepped since the last call (coupling and
    /// telemetry refresh points).
    pub fn take_cycle_advanced(&mut self) -> bool {
        match self {
            Cc::Bbr(c) => c.take_cycle_advanced(),
            _ => false,
        }
    }

    pub fn set_coupled_gains(&mut self, gains: CoupledGains) {
        if let Cc::Bbr(c) = self {
            c.set_coupled_gains(gains);
        }
    }

    pub fn cycle_index(&self) -> Option<usize> {
        match self {
            Cc::Bbr(c) => c.cycle_index(),
            _ => None,
        }
    }

    pub fn sync_cycle(&mut self, idx: usize, now: SimTime) {
        if let Cc::Bbr(c) = self {
            c.sync_cycle(idx, now);
        }
    }

    pub fn coupled_gains(&self) -> Option<CoupledGains> {
        match self {
            Cc::Bbr(c) if c.is_coupled() => Some(c.gains()),
            _ => None,
        }
    }

    pub fn is_coupled_bbr(&self) -> bool {
        matches!(self, Cc::Bbr(c) if c.is_coupled())
    }

    /// Direct delivery-rate measurement (delivered-counter derivative).
    pub fn feed_rate_sample(&mut self, bps: u64) {
        if let Cc::Bbr(c) = self {
            c.feed_rate_sample(bps);
        }
    }

    /// Whether packets sent now produce usable delivery-rate samples.
    pub fn sample_qualifies(&self) -> bool {
        match self {
            Cc::Bbr(c) => c.sample_qualifies(),
            _ => true,
        }
    }

    pub fn debug_state(&self) -> String {
        match self {
            Cc::Bbr(c) => c.debug_state(),
            Cc::Aimd(c) => format!("cwnd={:.1}", c.cwnd_pkts()),
            Cc::Paced(c) => format!("paced {}bps", c.rate_bps()),
        }
    }
}
