//! Scratch harness for inspecting scenario behavior during development.

use mpsim::presets;
use mpsim::runner::run_scenario;
use mpsim::scenario::Scenario;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(String::as_str).unwrap_or("single");
    let seed: u64 = args
        .get(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1);
    let t0 = std::time::Instant::now();
    let sc: Scenario = match which {
        "single" => {
            let (_, plain) = presets::single_subflow_pair(seed);
            plain
        }
        "coupled1" => presets::single_subflow_pair(seed).0,
        "balance" => presets::congestion_balance(seed),
        "fairness" => presets::fairness_symmetric(seed),
        "bbr2" => presets::bbr_contention(2, seed),
        "bbr3" => presets::bbr_contention(3, seed),
        "loss0" => presets::loss_sweep_point("coupled_bbr", 0.0, seed),
        "loss5" => presets::loss_sweep_point("coupled_bbr", 0.005, seed),
        "lia0" => presets::loss_sweep_point("lia", 0.0, seed),
        "lia5" => presets::loss_sweep_point("lia", 0.005, seed),
        "inorder" => presets::inorder_static(seed),
        "jitter" => presets::jitter_bound(seed),
        "fail-arp" => presets::path_failure("arp", seed),
        "fail-rr" => presets::path_failure("roundrobin", seed),
        "fail-red" => presets::path_failure("redundant", seed),
        "ofo-arp" => presets::ofo_asymmetry("arp", 250.0, seed),
        "ofo-minrtt" => presets::ofo_asymmetry("minrtt", 250.0, seed),
        "ofo-rr" => presets::ofo_asymmetry("roundrobin", 250.0, seed),
        other => panic!("unknown probe `{other}`"),
    };
    #[allow(clippy::type_complexity)]
    let (world, summary) = if std::env::var("PROBE_DEBUG").is_ok() {
        let mut world = mpsim::runner::World::build(&sc, false).unwrap();
        let end = mpsim::SimTime::from_secs_f64(sc.duration_s);
        let mut next_dump = mpsim::SimTime::ZERO;
        loop {
            let step = (next_dump).min(end);
            while let Some((t, action)) = world.engine.pop_due(step) {
                world.dispatch_pub(t, action);
            }
            for c in &world.conns {
                eprintln!("t={:>5.1} {} meta {}", step.as_secs_f64(), c.cfg.name, c.debug_meta());
                for sf in &c.subflows {
                    eprintln!("t={:>5.1} {}#{} {}", step.as_secs_f64(), c.cfg.name, sf.idx, sf.debug_state());
                }
            }
            if step >= end { break; }
            next_dump = next_dump + mpsim::SimTime::from_secs(1);
        }
        world.metrics.finalize();
        let s = world.summarize();
        (world, s)
    } else {
        run_scenario(&sc, false).unwrap()
    };
    for c in &world.conns {
        for sf in &c.subflows {
            eprintln!(
                "dbg flow={} sf={} fast={} partial={} rto={} sweep={} cwnd={} live={}",
                c.cfg.name, sf.idx, sf.dbg_fast_retx, sf.dbg_partial_retx, sf.dbg_rto, sf.dbg_sweep,
                0, sf.inflight_pkts()
            );
        }
    }
    println!("== {} ({:.2?}) ==", sc.name, t0.elapsed());
    println!("{}", summary.to_json());
    if args.iter().any(|a| a == "--series") {
        for (fi, f) in sc.flows.iter().enumerate() {
            println!("flow {} goodput Mbps by second:", f.id);
            let series = world.goodput_series(fi);
            let per_sec: Vec<f64> = series
                .chunks(10)
                .map(|c| c.iter().map(|(_, v)| v).sum::<f64>() / c.len() as f64)
                .collect();
            for (s, v) in per_sec.iter().enumerate() {
                print!("{s:>3}:{v:6.1} ");
                if (s + 1) % 8 == 0 {
                    println!();
                }
            }
            println!();
        }
    }
    let _ = &world;
}
