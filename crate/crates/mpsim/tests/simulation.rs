//! End-to-end simulator properties: link behavior under load, transport
//! invariants, and metric consistency, all on small scenarios.

use mpsim::conn::ofo::{OfoOutcome, OfoQueue};
use mpsim::runner::run_scenario;
use mpsim::scenario::{FlowCfg, LinkCfg, Scenario};

use proptest::prelude::*;

fn link(id: &str, mbps: f64, delay_ms: f64, loss: f64) -> LinkCfg {
    LinkCfg {
        id: id.into(),
        bandwidth_mbps: mbps,
        delay_ms,
        loss,
        queue_bdp: None,
        queue_bytes: None,
        ack_loss: false,
        delay_jitter: 0.0,
        schedule: vec![],
    }
}

fn flow(id: &str, kind: &str, cc: &str, sched: &str, paths: Vec<Vec<&str>>) -> FlowCfg {
    FlowCfg {
        id: id.into(),
        kind: kind.into(),
        cc: cc.into(),
        scheduler: sched.into(),
        paths: paths
            .into_iter()
            .map(|p| p.into_iter().map(String::from).collect())
            .collect(),
        start_s: 0.0,
        stop_s: None,
        rate_mbps: None,
        rate_jitter: None,
        buffer_cap_pkts: None,
        recv_buffer_pkts: None,
        mss: None,
    }
}

fn scenario(name: &str, duration_s: f64, links: Vec<LinkCfg>, flows: Vec<FlowCfg>) -> Scenario {
    Scenario {
        name: name.into(),
        duration_s,
        warmup_s: 2.0,
        seed: 3,
        metrics_bin_ms: 100.0,
        links,
        flows,
    }
}

#[test]
fn saturated_lossless_link_delivers_at_line_rate() {
    // A paced flow driving 120% of a 10 Mbps link for 10 s: long-run
    // delivered rate equals the bandwidth within half a percent.
    let mut f = flow("f", "tcp", "paced", "minrtt", vec![vec!["l"]]);
    f.rate_mbps = Some(12.0);
    let sc = scenario("saturate", 10.0, vec![link("l", 10.0, 10.0, 0.0)], vec![f]);
    let (world, _) = run_scenario(&sc, false).unwrap();
    let c = world.net.links[0].counters;
    let measured = c.delivered_bytes as f64 * 8.0 / sc.duration_s;
    let rate = measured / 10e6;
    assert!((0.995..=1.005).contains(&rate), "delivered at {rate} of line rate");
    assert!(c.dropped_congestion > 0);
}

#[test]
fn per_link_packet_conservation() {
    let mut f = flow("f", "mptcp", "coupled_bbr", "arp", vec![vec!["a"], vec!["b"]]);
    f.rate_mbps = None;
    let sc = scenario(
        "conserve",
        8.0,
        vec![link("a", 20.0, 15.0, 0.002), link("b", 20.0, 45.0, 0.01)],
        vec![f],
    );
    let (world, _) = run_scenario(&sc, false).unwrap();
    for l in &world.net.links {
        let c = l.counters;
        assert_eq!(
            c.offered,
            c.delivered + c.dropped_random + c.dropped_congestion + l.queue_pkts(),
            "link {}",
            l.name
        );
    }
}

#[test]
fn random_drop_fraction_matches_loss_rate() {
    // >= 1e5 offered packets at p = 1%: the observed drop fraction lies
    // within three standard errors of p.
    let mut f = flow("f", "tcp", "paced", "minrtt", vec![vec!["l"]]);
    f.rate_mbps = Some(30.0);
    let sc = scenario("lossfrac", 50.0, vec![link("l", 40.0, 5.0, 0.01)], vec![f]);
    let (world, _) = run_scenario(&sc, false).unwrap();
    let c = world.net.links[0].counters;
    assert!(c.offered >= 100_000, "offered {}", c.offered);
    let p = 0.01f64;
    let se = (p * (1.0 - p) / c.offered as f64).sqrt();
    let observed = c.dropped_random as f64 / c.offered as f64;
    assert!(
        (observed - p).abs() <= 3.0 * se,
        "observed {observed} vs {p} (se {se})"
    );
}

#[test]
fn single_path_flow_never_reorders() {
    // FIFO links and one subflow: the reassembly queue never holds
    // anything, and delivery is exactly once, in order.
    let sc = scenario(
        "inorder",
        10.0,
        vec![link("l", 50.0, 20.0, 0.0)],
        vec![flow("f", "tcp", "bbr", "minrtt", vec![vec!["l"]])],
    );
    let (world, summary) = run_scenario(&sc, false).unwrap();
    assert_eq!(summary.flows[0].ofo_max_pkts, 0);
    assert_eq!(summary.flows[0].dup_arrivals, 0);
    let conn = &world.conns[0];
    assert_eq!(conn.delivered_pkts, conn.delivered_dsn());
}

#[test]
fn bw_estimate_converges_to_bottleneck() {
    // 100 Mbps bottleneck, single flow: after startup the windowed-max
    // bandwidth estimate sits in [95, 100] Mbps.
    let sc = scenario(
        "converge",
        10.0,
        vec![link("l", 100.0, 12.5, 0.0)],
        vec![flow("f", "tcp", "bbr", "minrtt", vec![vec!["l"]])],
    );
    let (world, _) = run_scenario(&sc, false).unwrap();
    let bw = world.conns[0].subflows[0].bw_bps() as f64 / 1e6;
    assert!((95.0..=100.5).contains(&bw), "bw estimate {bw} Mbps");
}

#[test]
fn goodput_never_exceeds_throughput() {
    for (cc, sched) in [("coupled_bbr", "arp"), ("lia", "minrtt"), ("bbr", "redundant")] {
        let sc = scenario(
            "goodput",
            8.0,
            vec![link("a", 20.0, 15.0, 0.005), link("b", 20.0, 40.0, 0.0)],
            vec![flow("f", "mptcp", cc, sched, vec![vec!["a"], vec!["b"]])],
        );
        let (world, summary) = run_scenario(&sc, false).unwrap();
        let f = &summary.flows[0];
        assert!(
            f.goodput_mbps <= f.throughput_mbps + 1e-9,
            "{cc}/{sched}: goodput {} > throughput {}",
            f.goodput_mbps,
            f.throughput_mbps
        );
        // Conservation: application delivery equals the meta-level
        // in-order frontier.
        let conn = &world.conns[0];
        assert_eq!(conn.delivered_pkts, conn.delivered_dsn(), "{cc}/{sched}");
    }
}

#[test]
fn lia_symmetric_subflows_share_equally() {
    // Two identical paths: long-run send rates agree within 10%.
    let sc = scenario(
        "lia-sym",
        30.0,
        vec![link("a", 20.0, 25.0, 0.0), link("b", 20.0, 25.0, 0.0)],
        vec![flow("f", "mptcp", "lia", "minrtt", vec![vec!["a"], vec!["b"]])],
    );
    let (_, summary) = run_scenario(&sc, false).unwrap();
    let s = &summary.flows[0].subflows;
    let ratio = s[0].send_mbps / s[1].send_mbps;
    assert!((0.9..=1.1).contains(&ratio), "send ratio {ratio}");
}

#[test]
fn utilization_of_saturated_bottleneck() {
    let sc = scenario(
        "util",
        30.0,
        vec![link("l", 100.0, 25.0, 0.0)],
        vec![flow("f", "tcp", "bbr", "minrtt", vec![vec!["l"]])],
    );
    let (_, summary) = run_scenario(&sc, false).unwrap();
    assert!(
        (0.90..=1.0).contains(&summary.bandwidth_utilization),
        "utilization {}",
        summary.bandwidth_utilization
    );
}

#[test]
fn coupled_beats_loss_based_utilization_under_loss() {
    // Directional reproduction of the utilization contrast: same lossy
    // two-path setup, bandwidth-based vs loss-based coupling.
    let run = |cc: &str| {
        let sc = scenario(
            &format!("util-{cc}"),
            20.0,
            vec![link("a", 50.0, 12.5, 0.0001), link("b", 50.0, 12.5, 0.001)],
            vec![flow("f", "mptcp", cc, "minrtt", vec![vec!["a"], vec!["b"]])],
        );
        run_scenario(&sc, false).unwrap().1.bandwidth_utilization
    };
    let coupled = run("coupled_bbr");
    let lia = run("lia");
    assert!(
        coupled > lia,
        "coupled utilization {coupled} vs loss-based {lia}"
    );
}

#[test]
fn breakdown_schedule_stops_deliveries() {
    // Loss stepping to 1.0 mid-run: zero deliveries on that link afterwards.
    let mut l = link("l", 20.0, 10.0, 0.0);
    l.schedule = vec![mpsim::scenario::LinkChange {
        at_s: 3.0,
        until_s: None,
        bandwidth_mbps: None,
        delay_ms: None,
        loss: Some(1.0),
    }];
    let sc = scenario(
        "break",
        8.0,
        vec![l],
        vec![flow("f", "tcp", "bbr", "minrtt", vec![vec!["l"]])],
    );
    let (world, _) = run_scenario(&sc, false).unwrap();
    let deliveries_after: f64 = world
        .goodput_series(0)
        .iter()
        .filter(|(t, _)| *t >= 3.5)
        .map(|(_, v)| *v)
        .sum();
    assert_eq!(deliveries_after, 0.0);
}

#[test]
fn ofo_queue_delivers_every_dsn_exactly_once() {
    // Property: any arrival order (with duplicates) delivers 0..n in
    // order, each exactly once.
    proptest!(|(mut order in proptest::collection::vec(0u64..40, 1..120))| {
        let mut q = OfoQueue::new();
        let mut delivered = 0u64;
        order.extend(0..40); // everything arrives eventually
        for dsn in order {
            match q.offer(dsn) {
                OfoOutcome::Delivered(k) => delivered += k,
                OfoOutcome::Held | OfoOutcome::Duplicate => {}
            }
        }
        prop_assert_eq!(delivered, 40);
        prop_assert_eq!(q.next_expected(), 40);
        prop_assert_eq!(q.len(), 0);
    });
}

#[test]
fn scenario_validation_rejects_generated_invalid_fields() {
    let base = scenario(
        "valid",
        10.0,
        vec![link("l", 10.0, 10.0, 0.0)],
        vec![flow("f", "tcp", "bbr", "minrtt", vec![vec!["l"]])],
    );
    base.validate().expect("base scenario is valid");
    proptest!(|(which in 0usize..6, magnitude in 1.0f64..10.0)| {
        let mut sc = base.clone();
        let field = match which {
            0 => { sc.links[0].loss = magnitude; "loss" }
            1 => { sc.links[0].bandwidth_mbps = -magnitude; "bandwidth" }
            2 => { sc.warmup_s = sc.duration_s + magnitude; "warmup" }
            3 => { sc.flows[0].paths = vec![vec!["ghost".into()]]; "route" }
            4 => { sc.flows[0].cc = format!("cc{magnitude}"); "cc" }
            5 => { sc.links[0].delay_jitter = magnitude; "jitter" }
            _ => unreachable!(),
        };
        prop_assert!(sc.validate().is_err(), "invalid {field} accepted");
    });
}
