//! World assembly and the event loop.
//!
//! A scenario builds one `World`: links (two directed link objects per
//! scenario link), connections, routes, metrics, and the engine. Running
//! dispatches actions until the configured duration, then the summary is
//! assembled from metrics, connection counters and link counters.

use std::io::Write;
use std::path::Path;

use crate::conn::{Connection, ConnectionCfg};
use crate::engine::Engine;
use crate::metrics::{Collector, FlowSummary, LinkSummary, RunSummary, SubflowSummary};
use crate::net::{LinkParams, Network, Offer, Packet, PacketKind, ParamChange};
use crate::rng::RandomSource;
use crate::scenario::{Scenario, ScenarioError, DEFAULT_MSS};
use crate::sched::Policy;
use crate::time::SimTime;

#[derive(Debug, Clone)]
pub enum Action {
    /// Head-of-line packet finished serializing on a link.
    LinkDone { link: usize },
    /// Packet reached the end of a link.
    Arrive { pkt: Packet },
    Pacing { flow: usize, subflow: usize, gen: u64 },
    Rto { flow: usize, subflow: usize, gen: u64 },
    ArTick { flow: usize, gen: u64 },
    Start { flow: usize },
    Stop { flow: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    pub t: SimTime,
    pub kind: &'static str,
    pub flow: usize,
    pub subflow: usize,
    pub ssn: u64,
    pub dsn: u64,
    pub size: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRecord {
    pub t: SimTime,
    pub flow: usize,
    pub non_redundant: Vec<usize>,
    pub redundant: Vec<usize>,
    pub objective: f64,
}

/// Optional event trace, used for replay comparisons and debugging.
#[derive(Debug, Default)]
pub struct Trace {
    pub enabled: bool,
    pub events: Vec<TraceEvent>,
    pub decisions: Vec<DecisionRecord>,
}

impl Trace {
    #[allow(clippy::too_many_arguments)]
    pub fn event(
        &mut self,
        t: SimTime,
        kind: &'static str,
        flow: usize,
        subflow: usize,
        ssn: u64,
        dsn: u64,
        size: u32,
    ) {
        if self.enabled {
            self.events.push(TraceEvent {
                t,
                kind,
                flow,
                subflow,
                ssn,
                dsn,
                size,
            });
        }
    }

    pub fn decision(&mut self, t: SimTime, flow: usize, n: &[usize], r: &[usize], objective: f64) {
        if self.enabled {
            self.decisions.push(DecisionRecord {
                t,
                flow,
                non_redundant: n.to_vec(),
                redundant: r.to_vec(),
                objective,
            });
        }
    }
}

#[derive(Debug, Clone)]
pub struct SubflowRoutes {
    pub fwd: Vec<usize>,
    pub rev: Vec<usize>,
}

#[derive(Debug, Default)]
pub struct RouteTable {
    pub flows: Vec<Vec<SubflowRoutes>>,
}

impl RouteTable {
    pub fn route_of(&self, pkt: &Packet) -> &[usize] {
        let r = &self.flows[pkt.flow][pkt.subflow];
        match pkt.kind {
            PacketKind::Ack => &r.rev,
            _ => &r.fwd,
        }
    }
}

/// Everything a connection may touch while handling one event.
pub struct Ctx<'a> {
    pub now: SimTime,
    pub engine: &'a mut Engine<Action>,
    pub net: &'a mut Network,
    pub rng: &'a mut RandomSource,
    pub metrics: &'a mut Collector,
    pub routes: &'a RouteTable,
    pub trace: &'a mut Trace,
}

impl Ctx<'_> {
    /// Offers the packet to the next link on its route. Drops are final
    /// here; recovery belongs to the transport timers.
    pub fn send(&mut self, pkt: Packet) {
        let route = self.routes.route_of(&pkt);
        let link = route[pkt.hop as usize];
        match self.net.offer(link, pkt, self.now, self.rng) {
            Offer::StartedSerializing(t) => {
                self.engine.schedule(t, Action::LinkDone { link });
            }
            Offer::Queued | Offer::DroppedRandom | Offer::DroppedCongestion => {}
        }
    }
}

pub struct World {
    pub scenario: Scenario,
    pub engine: Engine<Action>,
    pub net: Network,
    pub rng: RandomSource,
    pub conns: Vec<Connection>,
    pub metrics: Collector,
    pub routes: RouteTable,
    pub trace: Trace,
    duration: SimTime,
    /// Link ids that carry data traffic (utilization denominator).
    data_links: Vec<usize>,
}

impl World {
    pub fn build(scenario: &Scenario, trace_enabled: bool) -> Result<World, ScenarioError> {
        scenario.validate()?;
        let mut rng = RandomSource::new(scenario.seed);
        let mut net = Network::new();
        let duration = SimTime::from_secs_f64(scenario.duration_s);

        // Two directed links per scenario link; ACK direction sees loss
        // only when the scenario says so.
        let mut fwd_ids = Vec::new();
        let mut rev_ids = Vec::new();
        for l in &scenario.links {
            let bw = (l.bandwidth_mbps * 1e6).round() as u64;
            let delay = SimTime::from_secs_f64(l.delay_ms / 1e3);
            let bdp = (bw as f64 * l.delay_ms / 1e3 / 8.0).max(1.0);
            let capacity = l
                .queue_bytes
                .unwrap_or((bdp * l.queue_bdp.unwrap_or(1.0)).round() as u64)
                .max(3000);
            let changes: Vec<ParamChange> = l
                .schedule
                .iter()
                .map(|c| ParamChange {
                    from: SimTime::from_secs_f64(c.at_s),
                    until: c.until_s.map(SimTime::from_secs_f64),
                    bandwidth_bps: c.bandwidth_mbps.map(|b| (b * 1e6).round() as u64),
                    delay: c.delay_ms.map(|d| SimTime::from_secs_f64(d / 1e3)),
                    loss_rate: c.loss,
                })
                .collect();
            let params = LinkParams {
                bandwidth_bps: bw,
                delay,
                loss_rate: l.loss,
                queue_capacity: capacity,
            };
            fwd_ids.push(net.add_link(&l.id, params, changes.clone(), l.delay_jitter, false, &mut rng));
            // Loss changes on the reverse direction only matter with
            // ack_loss; bandwidth/delay changes apply to both.
            let rev_changes: Vec<ParamChange> = changes
                .iter()
                .map(|c| ParamChange {
                    loss_rate: if l.ack_loss { c.loss_rate } else { None },
                    ..*c
                })
                .collect();
            let rev_params = LinkParams {
                loss_rate: if l.ack_loss { l.loss } else { 0.0 },
                ..params
            };
            rev_ids.push(net.add_link(
                &format!("{}~rev", l.id),
                rev_params,
                rev_changes,
                l.delay_jitter,
                l.ack_loss,
                &mut rng,
            ));
        }
        let link_index = |id: &str| scenario.links.iter().position(|l| l.id == id).unwrap();

        let mut routes = RouteTable::default();
        let mut conns = Vec::new();
        let mut subflow_counts = Vec::new();
        let mut data_links = Vec::new();
        for (fi, f) in scenario.flows.iter().enumerate() {
            let mut per_subflow = Vec::new();
            for path in &f.paths {
                let fwd: Vec<usize> = path.iter().map(|id| fwd_ids[link_index(id)]).collect();
                let rev: Vec<usize> =
                    path.iter().rev().map(|id| rev_ids[link_index(id)]).collect();
                for l in &fwd {
                    if !data_links.contains(l) {
                        data_links.push(*l);
                    }
                }
                per_subflow.push(SubflowRoutes { fwd, rev });
            }
            routes.flows.push(per_subflow);
            let cc = Scenario::cc_kind(f).expect("validated cc");
            let cfg = ConnectionCfg {
                flow: fi,
                name: f.id.clone(),
                cc,
                policy: Policy::parse(&f.scheduler).expect("validated scheduler"),
                n_subflows: f.paths.len(),
                mss: f.mss.unwrap_or(DEFAULT_MSS),
                start: SimTime::from_secs_f64(f.start_s),
                stop: f.stop_s.map(SimTime::from_secs_f64),
                buffer_cap_pkts: f.buffer_cap_pkts,
                recv_buffer_pkts: f.recv_buffer_pkts,
            };
            subflow_counts.push(f.paths.len());
            conns.push(Connection::new(cfg, &mut rng));
        }

        let metrics = Collector::new(
            &subflow_counts,
            SimTime::from_secs_f64(scenario.metrics_bin_ms / 1e3),
            SimTime::from_secs_f64(scenario.warmup_s),
            duration,
        );

        let mut engine = Engine::new();
        for (fi, f) in scenario.flows.iter().enumerate() {
            engine.schedule(SimTime::from_secs_f64(f.start_s), Action::Start { flow: fi });
            if let Some(stop) = f.stop_s {
                engine.schedule(SimTime::from_secs_f64(stop), Action::Stop { flow: fi });
            }
        }

        data_links.sort_unstable();
        Ok(World {
            scenario: scenario.clone(),
            engine,
            net,
            rng,
            conns,
            metrics,
            routes,
            trace: Trace {
                enabled: trace_enabled,
                ..Trace::default()
            },
            duration,
            data_links,
        })
    }

    pub fn run(&mut self) {
        while let Some((t, action)) = self.engine.pop_due(self.duration) {
            self.dispatch(t, action);
        }
        self.metrics.finalize();
    }

    /// Public dispatch for stepping a world externally (debug harnesses).
    pub fn dispatch_pub(&mut self, now: SimTime, action: Action) {
        self.dispatch(now, action)
    }

    fn dispatch(&mut self, now: SimTime, action: Action) {
        let World {
            engine,
            net,
            rng,
            conns,
            metrics,
            routes,
            trace,
            ..
        } = self;
        let mut ctx = Ctx {
            now,
            engine,
            net,
            rng,
            metrics,
            routes,
            trace,
        };
        match action {
            Action::LinkDone { link } => {
                let ((pkt, arrival), next) = ctx.net.complete_serialization(link, now, ctx.rng);
                ctx.engine.schedule(arrival, Action::Arrive { pkt });
                if let Some(t) = next {
                    ctx.engine.schedule(t, Action::LinkDone { link });
                }
            }
            Action::Arrive { mut pkt } => {
                pkt.hop += 1;
                let route = ctx.routes.route_of(&pkt);
                if (pkt.hop as usize) < route.len() {
                    ctx.send(pkt);
                } else {
                    conns[pkt.flow].on_arrival(pkt, &mut ctx);
                }
            }
            Action::Pacing { flow, subflow, gen } => {
                conns[flow].pacing_fire(subflow, gen, &mut ctx);
            }
            Action::Rto { flow, subflow, gen } => {
                conns[flow].rto_fire(subflow, gen, &mut ctx);
            }
            Action::ArTick { flow, gen } => {
                conns[flow].ar_tick(gen, &mut ctx);
            }
            Action::Start { flow } => {
                conns[flow].start(&mut ctx);
            }
            Action::Stop { flow } => {
                conns[flow].stop();
            }
        }
    }

    pub fn summarize(&self) -> RunSummary {
        let sc = &self.scenario;
        let measured_s = self.metrics.measured_s();
        let flows: Vec<FlowSummary> = self
            .conns
            .iter()
            .enumerate()
            .map(|(fi, conn)| {
                let fcfg = &sc.flows[fi];
                let subflows: Vec<SubflowSummary> = conn
                    .subflows
                    .iter()
                    .map(|sf| SubflowSummary {
                        send_mbps: round6(self.metrics.send_mbps(fi, sf.idx)),
                        retransmits: sf.retransmits,
                        redundant_sent: sf.redundant_sent,
                        rtt_p50_ms: self.metrics.rtt_p50_ms(fi, sf.idx),
                        srtt_ms: round6(sf.srtt().as_millis_f64()),
                        bw_mbps: round6(sf.bw_bps() as f64 / 1e6),
                    })
                    .collect();
                FlowSummary {
                    name: fcfg.id.clone(),
                    kind: fcfg.kind.clone(),
                    cc: fcfg.cc.clone(),
                    scheduler: fcfg.scheduler.clone(),
                    throughput_mbps: round6(self.metrics.throughput_mbps(fi)),
                    goodput_mbps: round6(self.metrics.goodput_mbps(fi)),
                    ofo_mean_pkts: round6(self.metrics.ofo_mean(fi)),
                    ofo_max_pkts: self.metrics.ofo_max(fi),
                    ofo_time_avg_pkts: round6(self.metrics.ofo_time_avg(fi)),
                    delivered_pkts: conn.delivered_pkts,
                    dup_arrivals: conn.dup_arrivals(),
                    subflows,
                }
            })
            .collect();

        let links: Vec<LinkSummary> = self
            .net
            .links
            .iter()
            .map(|l| {
                let c = l.counters;
                let cap = l.params_at(SimTime::ZERO).bandwidth_bps;
                LinkSummary {
                    name: l.name.clone(),
                    offered: c.offered,
                    delivered: c.delivered,
                    dropped_random: c.dropped_random,
                    dropped_congestion: c.dropped_congestion,
                    utilization: round6(
                        c.delivered_bytes as f64 * 8.0 / (cap as f64 * sc.duration_s),
                    ),
                }
            })
            .collect();

        // Aggregate utilization over data-direction links, measured after
        // warm-up via flow arrival counters.
        let cap_sum: f64 = self
            .data_links
            .iter()
            .map(|&l| self.net.links[l].params_at(SimTime::ZERO).bandwidth_bps as f64)
            .sum();
        let delivered_bits: f64 = (0..self.conns.len())
            .map(|fi| self.metrics.throughput_mbps(fi) * 1e6)
            .sum::<f64>()
            * measured_s;
        let utilization = if cap_sum > 0.0 && measured_s > 0.0 {
            round6(delivered_bits / (cap_sum * measured_s))
        } else {
            0.0
        };

        let mptcp_goodput = sc
            .flows
            .iter()
            .enumerate()
            .find(|(_, f)| f.kind == "mptcp")
            .map(|(fi, _)| self.metrics.goodput_mbps(fi));
        let best_tcp = sc
            .flows
            .iter()
            .enumerate()
            .filter(|(_, f)| f.kind == "tcp")
            .map(|(fi, _)| self.metrics.goodput_mbps(fi))
            .fold(None, |acc: Option<f64>, v| {
                Some(acc.map_or(v, |a| a.max(v)))
            });
        let fairness_ratio = match (mptcp_goodput, best_tcp) {
            (Some(mp), Some(tcp)) if tcp > 0.0 => Some(round6(mp / tcp)),
            _ => None,
        };

        RunSummary {
            scenario: sc.name.clone(),
            seed: sc.seed,
            duration_s: sc.duration_s,
            warmup_s: sc.warmup_s,
            flows,
            links,
            bandwidth_utilization: utilization,
            fairness_ratio,
        }
    }

    /// Per-bin goodput series in Mbps for one flow, for time-domain checks.
    pub fn goodput_series(&self, flow: usize) -> Vec<(f64, f64)> {
        self.metrics
            .to_mbps_series(&self.metrics.flows[flow].goodput_bins)
    }

    pub fn throughput_series(&self, flow: usize) -> Vec<(f64, f64)> {
        self.metrics
            .to_mbps_series(&self.metrics.flows[flow].throughput_bins)
    }
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Runs one scenario start to finish and returns (world, summary).
pub fn run_scenario(sc: &Scenario, trace: bool) -> Result<(World, RunSummary), ScenarioError> {
    let mut world = World::build(sc, trace)?;
    world.run();
    let summary = world.summarize();
    Ok((world, summary))
}

fn write_series(path: &Path, series: &[(f64, f64)]) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "t_start_s,value")?;
    for (t, v) in series {
        writeln!(f, "{t:.3},{v:.6}")?;
    }
    Ok(())
}

/// Writes summary JSON plus per-flow CSV series into `dir`.
pub fn write_outputs(dir: &Path, world: &World, summary: &RunSummary) -> std::io::Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let spath = dir.join("summary.json");
    std::fs::write(&spath, summary.to_json())?;
    written.push(spath.display().to_string());
    for (fi, f) in world.scenario.flows.iter().enumerate() {
        let good = dir.join(format!("{}_goodput.csv", f.id));
        write_series(&good, &world.goodput_series(fi))?;
        written.push(good.display().to_string());
        let thr = dir.join(format!("{}_throughput.csv", f.id));
        write_series(&thr, &world.throughput_series(fi))?;
        written.push(thr.display().to_string());
        let ofo = dir.join(format!("{}_ofo.csv", f.id));
        write_series(&ofo, &world.metrics.ofo_series(fi))?;
        written.push(ofo.display().to_string());
        for si in 0..f.paths.len() {
            let send = dir.join(format!("{}_sf{}_send.csv", f.id, si));
            write_series(
                &send,
                &world
                    .metrics
                    .to_mbps_series(&world.metrics.flows[fi].sub_send_bins[si]),
            )?;
            written.push(send.display().to_string());
        }
    }
    if world.trace.enabled {
        let tpath = dir.join("trace.txt");
        let mut tf = std::fs::File::create(&tpath)?;
        for e in &world.trace.events {
            writeln!(
                tf,
                "{} {} flow={} sf={} ssn={} dsn={} size={}",
                e.t.as_nanos(),
                e.kind,
                e.flow,
                e.subflow,
                e.ssn,
                e.dsn,
                e.size
            )?;
        }
        for d in &world.trace.decisions {
            writeln!(
                tf,
                "{} decide flow={} n={:?} r={:?} objective={:.6}",
                d.t.as_nanos(),
                d.flow,
                d.non_redundant,
                d.redundant,
                d.objective
            )?;
        }
        written.push(tpath.display().to_string());
    }
    Ok(written)
}
