//! Adaptive redundancy partition and arrival-time prediction.
//!
//! The partition maximizes log(sum x_i) - log(sum x_i r_i / sum x_i) over
//! the non-redundant set greedily: subflows sorted by x/r descending, the
//! first always in, each next one added only when it raises the objective
//! and has at least 4 packets in flight (fewer cannot trigger a fast
//! retransmit, so its losses would stall the connection). Packet placement
//! then predicts, per candidate subflow, arrival = now + backlog/x + r/2
//! and takes the earliest, ties to the lowest subflow index.

/// Telemetry snapshot for one subflow at decision time.
#[derive(Debug, Clone, Copy)]
pub struct ArInput {
    pub subflow: usize,
    /// Sending rate x_i, bits per second.
    pub rate_bps: f64,
    /// Smoothed RTT r_i, seconds.
    pub srtt_s: f64,
    pub inflight_pkts: u64,
}

/// Objective value for a candidate non-redundant set, with x in Mbps and r
/// in seconds (fixed project-wide; partition comparisons are unit-free).
pub fn ar_objective(members: &[ArInput]) -> f64 {
    assert!(!members.is_empty());
    let sum_x: f64 = members.iter().map(|m| m.rate_bps / 1e6).sum();
    let sum_xr: f64 = members.iter().map(|m| m.rate_bps / 1e6 * m.srtt_s).sum();
    sum_x.ln() - (sum_xr / sum_x).ln()
}

/// Greedy split into (non-redundant, redundant), non-redundant ordered by
/// descending x/r. The non-redundant set is never empty.
pub fn ar_partition(inputs: &[ArInput]) -> (Vec<usize>, Vec<usize>) {
    assert!(!inputs.is_empty());
    let mut order: Vec<&ArInput> = inputs.iter().collect();
    order.sort_by(|a, b| {
        let va = a.rate_bps / a.srtt_s;
        let vb = b.rate_bps / b.srtt_s;
        // Equal telemetry (stale paths look like live ones): prefer the
        // subflow that actually has packets moving.
        vb.partial_cmp(&va)
            .unwrap()
            .then(b.inflight_pkts.cmp(&a.inflight_pkts))
            .then(a.subflow.cmp(&b.subflow))
    });

    let mut non_redundant = vec![order[0]];
    let mut redundant: Vec<usize> = Vec::new();
    for cand in &order[1..] {
        // Add when x_j / sum(x) > (r_j * sum(x) - 2 * sum(x r)) / sum(x r),
        // the simplified improvement test of the objective.
        let sum_x: f64 = non_redundant.iter().map(|m| m.rate_bps).sum();
        let sum_xr: f64 = non_redundant.iter().map(|m| m.rate_bps * m.srtt_s).sum();
        let lhs = cand.rate_bps / sum_x;
        let rhs = (cand.srtt_s * sum_x - 2.0 * sum_xr) / sum_xr;
        if lhs > rhs && cand.inflight_pkts >= 4 {
            non_redundant.push(cand);
        } else {
            redundant.push(cand.subflow);
        }
    }
    redundant.sort_unstable();
    (
        non_redundant.iter().map(|m| m.subflow).collect(),
        redundant,
    )
}

/// Byte budget of packets eligible for pre-scheduling:
/// max RTT over the non-redundant set times its summed bandwidth.
pub fn scheduling_window_bytes(members: &[(f64 /* bw_bps */, f64 /* srtt_s */)]) -> u64 {
    let max_rtt = members.iter().map(|m| m.1).fold(0.0, f64::max);
    let sum_bw: f64 = members.iter().map(|m| m.0).sum();
    (max_rtt * sum_bw / 8.0).round() as u64
}

/// Predicted arrival (seconds from now) of a packet appended behind
/// `backlog_bytes` on a subflow draining at `rate_bps` with RTT `srtt_s`.
pub fn predicted_arrival_s(backlog_bytes: u64, rate_bps: f64, srtt_s: f64) -> f64 {
    backlog_bytes as f64 * 8.0 / rate_bps + srtt_s / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sf(subflow: usize, mbps: f64, rtt_ms: f64) -> ArInput {
        ArInput {
            subflow,
            rate_bps: mbps * 1e6,
            srtt_s: rtt_ms / 1e3,
            inflight_pkts: 100,
        }
    }

    #[test]
    fn keeps_marginally_useful_subflow() {
        // x=[10,5] Mbps, r=[50,100] ms: candidate test is 0.5 > 0, both in.
        let (n, r) = ar_partition(&[sf(0, 10.0, 50.0), sf(1, 5.0, 100.0)]);
        assert_eq!(n, vec![0, 1]);
        assert!(r.is_empty());
    }

    #[test]
    fn demotes_slow_high_rtt_subflow() {
        // x=[10,1] Mbps, r=[50,500] ms: 0.1 <= 8, the slow one goes redundant.
        let (n, r) = ar_partition(&[sf(0, 10.0, 50.0), sf(1, 1.0, 500.0)]);
        assert_eq!(n, vec![0]);
        assert_eq!(r, vec![1]);
    }

    #[test]
    fn single_subflow_is_always_non_redundant() {
        let mut only = sf(0, 0.1, 900.0);
        only.inflight_pkts = 0;
        let (n, r) = ar_partition(&[only]);
        assert_eq!(n, vec![0]);
        assert!(r.is_empty());
    }

    #[test]
    fn low_inflight_goes_redundant() {
        let mut weak = sf(1, 10.0, 50.0);
        weak.inflight_pkts = 3;
        let (n, r) = ar_partition(&[sf(0, 10.0, 50.0), weak]);
        assert_eq!(n, vec![0]);
        assert_eq!(r, vec![1]);
    }

    #[test]
    fn objective_single_subflow_is_log_rate_over_rtt() {
        let v = ar_objective(&[sf(0, 10.0, 50.0)]);
        assert!((v - (10.0f64 / 0.05).ln()).abs() < 1e-12);
    }

    #[test]
    fn objective_grows_when_partition_adds_a_member() {
        let one = ar_objective(&[sf(0, 10.0, 50.0)]);
        let two = ar_objective(&[sf(0, 10.0, 50.0), sf(1, 5.0, 100.0)]);
        assert!(two > one);
    }

    #[test]
    fn window_arithmetic() {
        // max rtt 100 ms, summed bandwidth 15 Mbps: 187500 bytes.
        let w = scheduling_window_bytes(&[(10e6, 0.05), (5e6, 0.1)]);
        assert_eq!(w, 187_500);
    }

    #[test]
    fn arrival_prediction_arithmetic() {
        // Empty queue: r/2. 21 packets of 1500 B at 10 Mbps: 25.2 ms + r/2.
        assert!((predicted_arrival_s(0, 10e6, 0.05) - 0.025).abs() < 1e-12);
        let a = predicted_arrival_s(31_500, 10e6, 0.05);
        assert!((a - 0.0502).abs() < 1e-12);
    }
}
