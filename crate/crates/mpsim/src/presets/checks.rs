//! Preset execution and the per-preset pass/fail checks.

use crate::metrics::RunSummary;
use crate::runner::{run_scenario, World};
use crate::scenario::ScenarioError;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Check {
        Check {
            name: name.to_string(),
            passed,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "[{}] {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

#[derive(Debug)]
pub struct PresetOutcome {
    pub preset: String,
    pub summaries: Vec<RunSummary>,
    pub checks: Vec<Check>,
}

impl PresetOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn report(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&c.line());
            s.push('\n');
        }
        s
    }
}

/// First time (seconds) at which goodput, averaged over a sliding window,
/// reaches `target_mbps`, looking only at bins at or after `from_s`.
fn recovery_time_s(
    series: &[(f64, f64)],
    from_s: f64,
    window_bins: usize,
    target_mbps: f64,
) -> Option<f64> {
    let vals: Vec<f64> = series.iter().map(|(_, v)| *v).collect();
    let times: Vec<f64> = series.iter().map(|(t, _)| *t).collect();
    for i in 0..vals.len().saturating_sub(window_bins) {
        if times[i] < from_s {
            continue;
        }
        let mean: f64 = vals[i..i + window_bins].iter().sum::<f64>() / window_bins as f64;
        if mean >= target_mbps {
            return Some(times[i] + 0.0);
        }
    }
    None
}

fn mean_goodput_between(series: &[(f64, f64)], from_s: f64, to_s: f64) -> f64 {
    let sel: Vec<f64> = series
        .iter()
        .filter(|(t, _)| *t >= from_s && *t < to_s)
        .map(|(_, v)| *v)
        .collect();
    if sel.is_empty() {
        0.0
    } else {
        sel.iter().sum::<f64>() / sel.len() as f64
    }
}

/// Runs every scenario of the preset (optionally writing outputs) and
/// evaluates its checks.
pub fn run_preset(
    name: &str,
    seed: u64,
    outdir: Option<&std::path::Path>,
) -> Result<PresetOutcome, ScenarioError> {
    let scenarios = crate::presets::build_scenarios(name, seed)?;
    let trace = name == "single-subflow";
    let mut worlds: Vec<World> = Vec::new();
    let mut summaries = Vec::new();
    for sc in &scenarios {
        let (world, summary) = run_scenario(sc, trace)?;
        if let Some(dir) = outdir {
            let sub = dir.join(format!("{}-s{}", sc.name, sc.seed));
            crate::runner::write_outputs(&sub, &world, &summary)
                .map_err(|e| ScenarioError::Parse(format!("writing outputs: {e}")))?;
        }
        worlds.push(world);
        summaries.push(summary);
    }

    let mut checks = Vec::new();
    match name {
        "fairness-symmetric" => {
            let mut ratios: Vec<f64> = summaries
                .iter()
                .map(|s| s.fairness_ratio.expect("fairness scenario has both flow kinds"))
                .collect();
            ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = ratios[ratios.len() / 2];
            let all: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
            checks.push(Check::new(
                "fairness-ratio",
                (0.85..=1.15).contains(&median),
                format!(
                    "median multipath/best-single goodput ratio over {} runs = {median:.3} (runs: {}), want within [0.85, 1.15]",
                    ratios.len(),
                    all.join(" ")
                ),
            ));
        }
        "loss-sweep" => {
            // Scenario order: coupled_bbr x {0, .1%, .5%}, lia x {...}.
            let tp = |i: usize| summaries[i].flows[0].throughput_mbps;
            let coupled_decline = (tp(0) - tp(2)) / tp(0);
            let lia_decline = (tp(3) - tp(5)) / tp(3);
            checks.push(Check::new(
                "coupled-loss-tolerance",
                coupled_decline < 0.10,
                format!(
                    "coupled throughput {:.1} -> {:.1} Mbps ({:.1}% decline, want < 10%)",
                    tp(0),
                    tp(2),
                    coupled_decline * 100.0
                ),
            ));
            checks.push(Check::new(
                "loss-based-collapse",
                lia_decline > 0.50,
                format!(
                    "lia throughput {:.1} -> {:.1} Mbps ({:.1}% decline, want > 50%)",
                    tp(3),
                    tp(5),
                    lia_decline * 100.0
                ),
            ));
        }
        "congestion-balance" => {
            let f = &summaries[0].flows[0];
            let ratio = f.subflows[0].send_mbps / f.subflows[1].send_mbps;
            // With bandwidths 100 and 50 Mbps the weights give an 80:20
            // split, a 4:1 send-rate ratio.
            checks.push(Check::new(
                "send-rate-split",
                (3.6..=4.4).contains(&ratio),
                format!(
                    "subflow send rates {:.1} : {:.1} Mbps, ratio {ratio:.2}, want 4.0 +/- 10%",
                    f.subflows[0].send_mbps, f.subflows[1].send_mbps
                ),
            ));
        }
        "single-subflow" => {
            let same_trace = worlds[0].trace.events == worlds[1].trace.events;
            checks.push(Check::new(
                "trace-identity",
                same_trace,
                format!(
                    "event traces {} ({} vs {} events)",
                    if same_trace { "identical" } else { "differ" },
                    worlds[0].trace.events.len(),
                    worlds[1].trace.events.len()
                ),
            ));
        }
        "path-failure" => {
            // Scenario order: arp, roundrobin, redundant. Path capacity
            // 20 Mbps; failure at 15 s.
            let surviving = 20.0 * 1448.0 / 1500.0; // payload share of the pipe
            let target = 0.9 * surviving;
            let arp_rec = recovery_time_s(&worlds[0].goodput_series(0), 15.0, 10, target);
            let rr_rec = recovery_time_s(&worlds[1].goodput_series(0), 15.0, 10, target);
            let arp_pre = mean_goodput_between(&worlds[0].goodput_series(0), 5.0, 15.0);
            let red_pre = mean_goodput_between(&worlds[2].goodput_series(0), 5.0, 15.0);
            let arp_ok = arp_rec.map(|t| t - 15.0 <= 3.0).unwrap_or(false);
            checks.push(Check::new(
                "adaptive-recovery",
                arp_ok,
                format!(
                    "adaptive goodput back to {target:.1} Mbps at {:?} s after failure (want <= 3 s)",
                    arp_rec.map(|t| t - 15.0)
                ),
            ));
            let faster = match (arp_rec, rr_rec) {
                (Some(a), Some(r)) => a < r,
                (Some(_), None) => true,
                _ => false,
            };
            checks.push(Check::new(
                "faster-than-roundrobin",
                faster,
                format!("recovery at {arp_rec:?} s vs roundrobin {rr_rec:?} s"),
            ));
            checks.push(Check::new(
                "redundant-pre-failure-cost",
                red_pre < arp_pre,
                format!(
                    "pre-failure goodput: redundant {red_pre:.1} Mbps < adaptive {arp_pre:.1} Mbps"
                ),
            ));
        }
        "ofo-asymmetry" => {
            // Order: arp x 5 rtts, minrtt x 5, roundrobin x 5.
            let ofo = |s: usize, r: usize| summaries[s * 5 + r].flows[0].ofo_mean_pkts;
            let at250 = (ofo(0, 4), ofo(1, 4), ofo(2, 4));
            checks.push(Check::new(
                "ofo-reduction-at-250ms",
                at250.0 <= 0.5 * at250.1 && at250.0 <= 0.5 * at250.2,
                format!(
                    "mean OFO at 250 ms: adaptive {:.2}, minrtt {:.2}, roundrobin {:.2} pkts (want <= 50% of both)",
                    at250.0, at250.1, at250.2
                ),
            ));
            // At symmetric RTTs all three stay similar; means are floored
            // at one packet since sub-packet means are noise.
            let at50: Vec<f64> = (0..3).map(|s| ofo(s, 0).max(1.0)).collect();
            let spread = at50.iter().cloned().fold(0.0, f64::max)
                / at50.iter().cloned().fold(f64::INFINITY, f64::min);
            checks.push(Check::new(
                "ofo-similar-at-50ms",
                spread <= 1.5,
                format!(
                    "mean OFO at 50 ms (floored at 1): adaptive {:.2}, minrtt {:.2}, roundrobin {:.2}, spread x{spread:.2} (want <= x1.5)",
                    at50[0], at50[1], at50[2]
                ),
            ));
        }
        "inorder-static" => {
            let m = summaries[0].flows[0].ofo_max_pkts;
            checks.push(Check::new(
                "inorder-max-ofo",
                m <= 2,
                format!("steady-state max OFO = {m} pkts (want <= 2)"),
            ));
        }
        "jitter-bound" => {
            // Bound: 1/2 * sum(x_i) * max(r_i) * (eps1 + eps2), in packets,
            // with a x2 safety factor. x = 2 * 8 Mbps, max r = 150 ms.
            let bound_pkts = 0.5 * (16e6 / 8.0) * 0.150 * 0.2 / 1500.0;
            let avg = summaries[0].flows[0].ofo_time_avg_pkts;
            checks.push(Check::new(
                "jitter-ofo-bound",
                avg <= 2.0 * bound_pkts,
                format!(
                    "time-average OFO {avg:.2} pkts, bound {:.1} x2 (want <= {:.1})",
                    bound_pkts,
                    2.0 * bound_pkts
                ),
            ));
        }
        "ramp-loss" => {
            let coupled = mean_goodput_between(&worlds[0].goodput_series(0), 30.0, 40.0);
            let lia = mean_goodput_between(&worlds[1].goodput_series(0), 30.0, 40.0);
            checks.push(Check::new(
                "ramp-loss-advantage",
                coupled > 2.0 * lia,
                format!(
                    "goodput in the final 10 s: coupled {coupled:.1} Mbps vs loss-based {lia:.1} Mbps (want > 2x)"
                ),
            ));
        }
        _ => {}
    }

    Ok(PresetOutcome {
        preset: name.to_string(),
        summaries,
        checks,
    })
}
