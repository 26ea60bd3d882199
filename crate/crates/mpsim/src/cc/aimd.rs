//! Window-based controllers: NewReno and the coupled increase family.
//!
//! All four share slow start, halving on loss (BALIA scales its decrease),
//! and congestion-avoidance growth that differs only in the per-ACK
//! increase. The coupled rules follow their published forms; with a single
//! subflow each one degenerates to NewReno's one-segment-per-RTT growth.

use super::{LossKind, RttEstimator, Sibling};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AimdFlavor {
    Reno,
    Lia,
    Olia,
    Balia,
}

#[derive(Debug)]
pub struct AimdCc {
    flavor: AimdFlavor,
    mss: u32,
    cwnd_pkts: f64,
    ssthresh_pkts: f64,
}

const INIT_CWND: f64 = 10.0;
const MIN_CWND: f64 = 2.0;

impl AimdCc {
    pub fn new(flavor: AimdFlavor, mss: u32) -> Self {
        AimdCc {
            flavor,
            mss,
            cwnd_pkts: INIT_CWND,
            ssthresh_pkts: f64::INFINITY,
        }
    }

    pub fn cwnd_pkts(&self) -> f64 {
        self.cwnd_pkts
    }

    pub fn in_slow_start(&self) -> bool {
        self.cwnd_pkts < self.ssthresh_pkts
    }

    pub fn rate_bps(&self, rtt: &RttEstimator) -> f64 {
        let srtt = rtt.srtt().as_secs_f64();
        self.cwnd_pkts * self.mss as f64 * 8.0 / srtt
    }

    pub fn on_ack(&mut self, sample: &super::AckSample, siblings: &[Sibling], own_index: usize) {
        let segs = sample.newly_acked_bytes as f64 / self.mss as f64;
        if segs <= 0.0 {
            return;
        }
        if self.in_slow_start() {
            self.cwnd_pkts += segs;
            return;
        }
        let w = self.cwnd_pkts;
        let inc = match self.flavor {
            AimdFlavor::Reno => segs / w,
            AimdFlavor::Lia => {
                // RFC 6356: min(a * segs / cwnd_total, segs / cwnd_i) with
                // a = cwnd_total * max_i(w_i/r_i^2) / (sum_i w_i/r_i)^2.
                let total: f64 = siblings.iter().map(|s| s.cwnd_pkts).sum();
                let best = siblings
                    .iter()
                    .map(|s| s.cwnd_pkts / (s.srtt_s * s.srtt_s))
                    .fold(0.0, f64::max);
                let denom: f64 = siblings.iter().map(|s| s.cwnd_pkts / s.srtt_s).sum();
                let a = total * best / (denom * denom);
                (a * segs / total).min(segs / w)
            }
            AimdFlavor::Olia => {
                // w_i/r_i^2 over (sum w_k/r_k)^2, plus the load-balancing
                // term that shifts weight from max-window paths to the best
                // paths with spare window.
                let me = siblings[own_index];
                let denom: f64 = siblings.iter().map(|s| s.cwnd_pkts / s.srtt_s).sum();
                let base = (w / (me.srtt_s * me.srtt_s)) / (denom * denom);
                let adj = olia_adjustment(siblings, own_index);
                (base + adj / w).max(0.0) * segs
            }
            AimdFlavor::Balia => {
                // x_i/(r_i * (sum x_k)^2) * (1+a)/2 * (4+a)/5 per segment,
                // a = max_k(x_k)/x_i.
                let me = siblings[own_index];
                let x: Vec<f64> = siblings.iter().map(|s| s.cwnd_pkts / s.srtt_s).collect();
                let xi = w / me.srtt_s;
                let sum: f64 = x.iter().sum();
                let a = x.iter().cloned().fold(0.0, f64::max) / xi;
                (xi / (me.srtt_s * sum * sum)) * ((1.0 + a) / 2.0) * ((4.0 + a) / 5.0) * segs
            }
        };
        self.cwnd_pkts += inc;
    }

    pub fn on_loss(&mut self, kind: LossKind, siblings: &[Sibling], own_index: usize) {
        match kind {
            LossKind::FastRetransmit => {
                let factor = match self.flavor {
                    AimdFlavor::Balia => {
                        let x: Vec<f64> = siblings.iter().map(|s| s.cwnd_pkts / s.srtt_s).collect();
                        let xi = x.get(own_index).copied().unwrap_or(1.0).max(1e-9);
                        let a = x.iter().cloned().fold(0.0, f64::max) / xi;
                        1.0 - a.min(1.5) / 2.0
                    }
                    _ => 0.5,
                };
                self.ssthresh_pkts = (self.cwnd_pkts * factor).max(MIN_CWND);
                self.cwnd_pkts = self.ssthresh_pkts;
            }
            LossKind::Timeout => {
                self.ssthresh_pkts = (self.cwnd_pkts / 2.0).max(MIN_CWND);
                self.cwnd_pkts = 1.0;
            }
        }
    }
}

/// OLIA's alpha for subflow `own_index`: collected paths (fastest rate,
/// not max window) gain 1/(n*|B|), max-window paths lose 1/(n*|M|).
fn olia_adjustment(siblings: &[Sibling], own_index: usize) -> f64 {
    let n = siblings.len() as f64;
    if siblings.len() < 2 {
        return 0.0;
    }
    let rate = |s: &Sibling| s.cwnd_pkts / s.srtt_s;
    let best_rate = siblings.iter().map(rate).fold(0.0, f64::max);
    let max_w = siblings.iter().map(|s| s.cwnd_pkts).fold(0.0, f64::max);
    let me = siblings[own_index];
    let w = me.cwnd_pkts;
    let in_best = rate(&me) >= best_rate * (1.0 - 1e-12) && w < max_w;
    let in_max = w >= max_w * (1.0 - 1e-12);
    let b_count = siblings
        .iter()
        .filter(|s| rate(s) >= best_rate * (1.0 - 1e-12) && s.cwnd_pkts < max_w)
        .count() as f64;
    let m_count = siblings
        .iter()
        .filter(|s| s.cwnd_pkts >= max_w * (1.0 - 1e-12))
        .count() as f64;
    if in_best && b_count > 0.0 {
        1.0 / (n * b_count)
    } else if in_max && b_count > 0.0 {
        -1.0 / (n * m_count)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cc::AckSample;
    use crate::time::SimTime;

    fn ack(bytes: u64) -> AckSample {
        AckSample {
            now: SimTime::from_secs(1),
            newly_acked_bytes: bytes,
            rtt_sample: None,
            rate_sample_bps: None,
            delivered: 0,
            prior_delivered: 0,
            inflight_bytes_after: 0,
            inflight_pkts_after: 0,
        }
    }

    fn single(cwnd: f64) -> Vec<Sibling> {
        vec![Sibling {
            cwnd_pkts: cwnd,
            srtt_s: 0.05,
        }]
    }

    #[test]
    fn reno_fast_retransmit_halves() {
        let mut cc = AimdCc::new(AimdFlavor::Reno, 1448);
        cc.cwnd_pkts = 100.0;
        cc.ssthresh_pkts = 50.0;
        cc.on_loss(LossKind::FastRetransmit, &single(100.0), 0);
        assert_eq!(cc.cwnd_pkts, 50.0);
    }

    #[test]
    fn timeout_collapses_to_one() {
        let mut cc = AimdCc::new(AimdFlavor::Reno, 1448);
        cc.cwnd_pkts = 40.0;
        cc.ssthresh_pkts = 10.0;
        cc.on_loss(LossKind::Timeout, &single(40.0), 0);
        assert_eq!(cc.cwnd_pkts, 1.0);
        assert_eq!(cc.ssthresh_pkts, 20.0);
    }

    #[test]
    fn coupled_increases_degenerate_to_reno_on_one_subflow() {
        // One full window of ACKs grows cwnd by one segment for every
        // flavor when only a single subflow exists.
        for flavor in [
            AimdFlavor::Reno,
            AimdFlavor::Lia,
            AimdFlavor::Olia,
            AimdFlavor::Balia,
        ] {
            let mut cc = AimdCc::new(flavor, 1448);
            cc.cwnd_pkts = 20.0;
            cc.ssthresh_pkts = 10.0; // congestion avoidance
            let before = cc.cwnd_pkts;
            for _ in 0..20 {
                let siblings = single(cc.cwnd_pkts);
                cc.on_ack(&ack(1448), &siblings, 0);
            }
            let growth = cc.cwnd_pkts - before;
            assert!(
                (growth - 1.0).abs() < 0.08,
                "{flavor:?} grew {growth} per RTT"
            );
        }
    }

    #[test]
    fn lia_increase_is_capped_by_reno() {
        let mut cc = AimdCc::new(AimdFlavor::Lia, 1448);
        cc.cwnd_pkts = 10.0;
        cc.ssthresh_pkts = 5.0;
        let siblings = vec![
            Sibling {
                cwnd_pkts: 10.0,
                srtt_s: 0.05,
            },
            Sibling {
                cwnd_pkts: 10.0,
                srtt_s: 0.05,
            },
        ];
        let before = cc.cwnd_pkts;
        cc.on_ack(&ack(1448), &siblings, 0);
        let inc = cc.cwnd_pkts - before;
        // Two equal subflows: a = 1/2, so the coupled term is
        // 0.5/20 = 0.025, below reno's 1/10.
        assert!(inc < 1.0 / cc.cwnd_pkts);
        assert!(inc > 0.0);
    }
}
