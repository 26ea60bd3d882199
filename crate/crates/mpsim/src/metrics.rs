//! Run measurement: time-binned series, RTT histograms, out-of-order
//! statistics, and the machine-readable run summary.
//!
//! Series cover the whole run; summary means exclude a warm-up prefix
//! (default 2 s) so startup transients do not skew steady-state figures.
//! The out-of-order queue is tracked two ways: sampled on every data
//! arrival (the per-arrival mean) and integrated over time.

use serde::{Deserialize, Serialize};

use crate::time::SimTime;

const RTT_HIST_BINS: usize = 1000; // 1 ms bins up to 1 s

#[derive(Debug)]
pub struct FlowMetrics {
    pub goodput_bins: Vec<u64>,
    pub throughput_bins: Vec<u64>,
    pub sub_send_bins: Vec<Vec<u64>>,
    pub ofo_bin_sum: Vec<u64>,
    pub ofo_bin_cnt: Vec<u64>,
    pub rtt_hist: Vec<Vec<u64>>,
    // Post-warmup accumulators.
    delivered_bytes_w: u64,
    arrived_bytes_w: u64,
    sent_bytes_w: Vec<u64>,
    ofo_sum_w: u64,
    ofo_cnt_w: u64,
    ofo_max_w: u64,
    ofo_integral: u128,
    ofo_last_len: u64,
    ofo_last_t: SimTime,
    // Whole-run totals (conservation checks).
    pub delivered_bytes_total: u64,
    pub arrived_bytes_total: u64,
}

#[derive(Debug)]
pub struct Collector {
    bin: SimTime,
    warmup: SimTime,
    duration: SimTime,
    pub flows: Vec<FlowMetrics>,
}

impl Collector {
    pub fn new(subflow_counts: &[usize], bin: SimTime, warmup: SimTime, duration: SimTime) -> Self {
        assert!(bin.as_nanos() > 0);
        let nbins = (duration.as_nanos() / bin.as_nanos() + 2) as usize;
        let flows = subflow_counts
            .iter()
            .map(|&n| FlowMetrics {
                goodput_bins: vec![0; nbins],
                throughput_bins: vec![0; nbins],
                sub_send_bins: vec![vec![0; nbins]; n],
                ofo_bin_sum: vec![0; nbins],
                ofo_bin_cnt: vec![0; nbins],
                rtt_hist: vec![vec![0; RTT_HIST_BINS]; n],
                delivered_bytes_w: 0,
                arrived_bytes_w: 0,
                sent_bytes_w: vec![0; n],
                ofo_sum_w: 0,
                ofo_cnt_w: 0,
                ofo_max_w: 0,
                ofo_integral: 0,
                ofo_last_len: 0,
                ofo_last_t: SimTime::ZERO,
                delivered_bytes_total: 0,
                arrived_bytes_total: 0,
            })
            .collect();
        Collector {
            bin,
            warmup,
            duration,
            flows,
        }
    }

    pub fn bin_s(&self) -> f64 {
        self.bin.as_secs_f64()
    }

    pub fn measured_s(&self) -> f64 {
        (self.duration.saturating_sub(self.warmup)).as_secs_f64()
    }

    fn bin_idx(&self, t: SimTime) -> usize {
        (t.as_nanos() / self.bin.as_nanos()) as usize
    }

    fn in_window(&self, t: SimTime) -> bool {
        t >= self.warmup
    }

    pub fn on_send(&mut self, flow: usize, subflow: usize, t: SimTime, wire_bytes: u64) {
        let idx = self.bin_idx(t);
        let f = &mut self.flows[flow];
        if let Some(b) = f.sub_send_bins[subflow].get_mut(idx) {
            *b += wire_bytes;
        }
        if t >= self.warmup {
            f.sent_bytes_w[subflow] += wire_bytes;
        }
    }

    pub fn on_data_arrival(&mut self, flow: usize, t: SimTime, payload_bytes: u64) {
        let idx = self.bin_idx(t);
        let in_window = self.in_window(t);
        let f = &mut self.flows[flow];
        if let Some(b) = f.throughput_bins.get_mut(idx) {
            *b += payload_bytes;
        }
        f.arrived_bytes_total += payload_bytes;
        if in_window {
            f.arrived_bytes_w += payload_bytes;
        }
    }

    pub fn on_deliver(&mut self, flow: usize, t: SimTime, payload_bytes: u64) {
        let idx = self.bin_idx(t);
        let in_window = self.in_window(t);
        let f = &mut self.flows[flow];
        if let Some(b) = f.goodput_bins.get_mut(idx) {
            *b += payload_bytes;
        }
        f.delivered_bytes_total += payload_bytes;
        if in_window {
            f.delivered_bytes_w += payload_bytes;
        }
    }

    pub fn on_ofo_sample(&mut self, flow: usize, t: SimTime, len: u64) {
        let idx = self.bin_idx(t);
        let in_window = self.in_window(t);
        let warmup = self.warmup;
        let f = &mut self.flows[flow];
        if let Some(b) = f.ofo_bin_sum.get_mut(idx) {
            *b += len;
            f.ofo_bin_cnt[idx] += 1;
        }
        if in_window {
            f.ofo_sum_w += len;
            f.ofo_cnt_w += 1;
            f.ofo_max_w = f.ofo_max_w.max(len);
            let from = f.ofo_last_t.max(warmup);
            if t > from {
                f.ofo_integral += f.ofo_last_len as u128 * (t - from).as_nanos() as u128;
            }
        }
        f.ofo_last_len = len;
        f.ofo_last_t = t;
    }

    pub fn on_rtt_sample(&mut self, flow: usize, subflow: usize, rtt: SimTime) {
        let ms = (rtt.as_nanos() / 1_000_000) as usize;
        let f = &mut self.flows[flow];
        let hist = &mut f.rtt_hist[subflow];
        let idx = ms.min(RTT_HIST_BINS - 1);
        hist[idx] += 1;
    }

    /// Closes the out-of-order time integral at end of run.
    pub fn finalize(&mut self) {
        let end = self.duration;
        let warmup = self.warmup;
        for f in &mut self.flows {
            let from = f.ofo_last_t.max(warmup);
            if end > from {
                f.ofo_integral += f.ofo_last_len as u128 * (end - from).as_nanos() as u128;
            }
            f.ofo_last_t = end;
        }
    }

    pub fn goodput_mbps(&self, flow: usize) -> f64 {
        self.flows[flow].delivered_bytes_w as f64 * 8.0 / self.measured_s() / 1e6
    }

    pub fn throughput_mbps(&self, flow: usize) -> f64 {
        self.flows[flow].arrived_bytes_w as f64 * 8.0 / self.measured_s() / 1e6
    }

    pub fn send_mbps(&self, flow: usize, subflow: usize) -> f64 {
        self.flows[flow].sent_bytes_w[subflow] as f64 * 8.0 / self.measured_s() / 1e6
    }

    pub fn ofo_mean(&self, flow: usize) -> f64 {
        let f = &self.flows[flow];
        if f.ofo_cnt_w == 0 {
            0.0
        } else {
            f.ofo_sum_w as f64 / f.ofo_cnt_w as f64
        }
    }

    pub fn ofo_max(&self, flow: usize) -> u64 {
        self.flows[flow].ofo_max_w
    }

    pub fn ofo_time_avg(&self, flow: usize) -> f64 {
        let span = self.duration.saturating_sub(self.warmup).as_nanos();
        if span == 0 {
            0.0
        } else {
            self.flows[flow].ofo_integral as f64 / span as f64
        }
    }

    pub fn rtt_p50_ms(&self, flow: usize, subflow: usize) -> f64 {
        let hist = &self.flows[flow].rtt_hist[subflow];
        let total: u64 = hist.iter().sum();
        if total == 0 {
            return 0.0;
        }
        let mut acc = 0u64;
        for (ms, &c) in hist.iter().enumerate() {
            acc += c;
            if acc * 2 >= total {
                return ms as f64;
            }
        }
        (RTT_HIST_BINS - 1) as f64
    }

    /// Per-bin Mbps for a byte series.
    pub fn to_mbps_series(&self, bins: &[u64]) -> Vec<(f64, f64)> {
        let bs = self.bin_s();
        bins.iter()
            .enumerate()
            .map(|(i, &b)| (i as f64 * bs, b as f64 * 8.0 / bs / 1e6))
            .collect()
    }

    /// Per-bin mean out-of-order length in packets.
    pub fn ofo_series(&self, flow: usize) -> Vec<(f64, f64)> {
        let f = &self.flows[flow];
        let bs = self.bin_s();
        f.ofo_bin_sum
            .iter()
            .zip(&f.ofo_bin_cnt)
            .enumerate()
            .map(|(i, (&s, &c))| {
                let v = if c == 0 { 0.0 } else { s as f64 / c as f64 };
                (i as f64 * bs, v)
            })
            .collect()
    }
}

// ----------------------------------------------------------------------
// Run summary
// ----------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SubflowSummary {
    pub send_mbps: f64,
    pub retransmits: u64,
    pub redundant_sent: u64,
    pub rtt_p50_ms: f64,
    pub srtt_ms: f64,
    pub bw_mbps: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FlowSummary {
    pub name: String,
    pub kind: String,
    pub cc: String,
    pub scheduler: String,
    pub throughput_mbps: f64,
    pub goodput_mbps: f64,
    pub ofo_mean_pkts: f64,
    pub ofo_max_pkts: u64,
    pub ofo_time_avg_pkts: f64,
    pub delivered_pkts: u64,
    pub dup_arrivals: u64,
    pub subflows: Vec<SubflowSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LinkSummary {
    pub name: String,
    pub offered: u64,
    pub delivered: u64,
    pub dropped_random: u64,
    pub dropped_congestion: u64,
    pub utilization: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub duration_s: f64,
    pub warmup_s: f64,
    pub flows: Vec<FlowSummary>,
    pub links: Vec<LinkSummary>,
    /// Delivered wire bytes over capacity, data-direction links only.
    pub bandwidth_utilization: f64,
    /// First multipath flow's goodput over the best single-path flow's.
    pub fairness_ratio: Option<f64>,
}

impl RunSummary {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }

    pub fn flow(&self, name: &str) -> &FlowSummary {
        self.flows
            .iter()
            .find(|f| f.name == name)
            .unwrap_or_else(|| panic!("no flow named {name}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn collector() -> Collector {
        Collector::new(
            &[1],
            SimTime::from_millis(100),
            SimTime::from_secs(2),
            SimTime::from_secs(10),
        )
    }

    #[test]
    fn deliveries_land_in_the_right_bin() {
        let mut c = collector();
        c.on_deliver(0, SimTime::from_millis(1050), 1500);
        assert_eq!(c.flows[0].goodput_bins[10], 1500);
        assert_eq!(c.flows[0].goodput_bins[9], 0);
    }

    #[test]
    fn series_sum_equals_total_delivered() {
        let mut c = collector();
        let mut t = SimTime::ZERO;
        let mut total = 0u64;
        for i in 0..500 {
            t = t + SimTime::from_millis(17);
            let b = 1000 + (i % 7) * 100;
            c.on_deliver(0, t, b);
            total += b;
        }
        let sum: u64 = c.flows[0].goodput_bins.iter().sum();
        assert_eq!(sum, total);
        assert_eq!(c.flows[0].delivered_bytes_total, total);
    }

    #[test]
    fn warmup_excluded_from_means() {
        let mut c = collector();
        c.on_deliver(0, SimTime::from_millis(500), 1_000_000);
        c.on_deliver(0, SimTime::from_secs(5), 8_000_000);
        // Only the post-warmup delivery counts: 64 Mbit over 8 s.
        assert!((c.goodput_mbps(0) - 8.0).abs() < 1e-9);
    }

    #[test]
    fn zero_traffic_summary_is_all_zero() {
        let mut c = collector();
        c.finalize();
        assert_eq!(c.goodput_mbps(0), 0.0);
        assert_eq!(c.ofo_mean(0), 0.0);
        assert_eq!(c.ofo_time_avg(0), 0.0);
        assert_eq!(c.rtt_p50_ms(0, 0), 0.0);
    }

    #[test]
    fn rtt_histogram_bins_by_millisecond() {
        let mut c = collector();
        c.on_rtt_sample(0, 0, SimTime::from_micros(55_400));
        assert_eq!(c.flows[0].rtt_hist[0][55], 1);
        c.on_rtt_sample(0, 0, SimTime::from_micros(55_900));
        assert_eq!(c.rtt_p50_ms(0, 0), 55.0);
    }

    #[test]
    fn ofo_time_average_integrates_piecewise() {
        let mut c = collector();
        // len 4 from t=4s to t=6s, len 0 elsewhere after warmup.
        c.on_ofo_sample(0, SimTime::from_secs(4), 4);
        c.on_ofo_sample(0, SimTime::from_secs(6), 0);
        c.finalize();
        // 4 pkts * 2 s over an 8 s window = 1.0
        assert!((c.ofo_time_avg(0) - 1.0).abs() < 1e-9);
    }
}
