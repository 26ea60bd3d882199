//! Multipath connection: meta-level data sequence space, per-subflow
//! sequence spaces and congestion state, sender scheduling, receiver
//! reassembly and acknowledgment.
//!
//! A single-path TCP flow is a connection with one subflow, so both flow
//! kinds share every code path here. Data packets carry a subflow sequence
//! number (ssn) and a data sequence number (dsn); the receiver acks every
//! arrival with both cumulative levels plus an echo of the arriving ssn,
//! which the sender turns into RTT and delivery-rate samples.

pub mod ofo;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::cc::{
    coupled_gains, AckSample, AimdCc, AimdFlavor, Bbr, Cc, CcCtx, CoupledGains, LossKind,
    RttEstimator, Sibling,
};
use crate::net::{AckInfo, Packet, PacketKind, ACK_WIRE_BYTES, WIRE_OVERHEAD};
use crate::runner::{Action, Ctx};
use crate::sched::{
    ar_objective, ar_partition, predicted_arrival_s, scheduling_window_bytes, ArInput, Policy,
};
use crate::time::SimTime;
use ofo::{OfoOutcome, OfoQueue};

#[derive(Debug, Clone, PartialEq)]
pub enum CcKind {
    NewReno,
    Bbr,
    CoupledBbr,
    Lia,
    Olia,
    Balia,
    Paced { rate_bps: u64, jitter: f64 },
}

impl CcKind {
    pub fn parse(s: &str) -> Option<CcKind> {
        match s {
            "newreno" | "reno" => Some(CcKind::NewReno),
            "bbr" => Some(CcKind::Bbr),
            "coupled_bbr" | "coupled-bbr" | "cbbr" => Some(CcKind::CoupledBbr),
            "lia" => Some(CcKind::Lia),
            "olia" => Some(CcKind::Olia),
            "balia" => Some(CcKind::Balia),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CcKind::NewReno => "newreno",
            CcKind::Bbr => "bbr",
            CcKind::CoupledBbr => "coupled_bbr",
            CcKind::Lia => "lia",
            CcKind::Olia => "olia",
            CcKind::Balia => "balia",
            CcKind::Paced { .. } => "paced",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConnectionCfg {
    pub flow: usize,
    pub name: String,
    pub cc: CcKind,
    pub policy: Policy,
    pub n_subflows: usize,
    pub mss: u32,
    pub start: SimTime,
    pub stop: Option<SimTime>,
    /// None: greedy source with unlimited data.
    pub buffer_cap_pkts: Option<u64>,
    /// None: unbounded reassembly buffer.
    pub recv_buffer_pkts: Option<u64>,
}

#[derive(Debug)]
struct SentRec {
    dsn: u64,
    wire: u32,
    sent_at: SimTime,
    delivered_at_send: u64,
    delivered_time_at_send: SimTime,
    retx: bool,
    /// Some copy of this ssn was retransmitted without proof of loss
    /// (timeout path), so echo timing stays ambiguous forever after.
    ambiguous: bool,
    /// Declared lost by a timeout; excluded from the live inflight count
    /// until retransmitted.
    lost: bool,
    /// Arrival already counted into the delivered total (via its echo).
    counted: bool,
    /// Send time of the most recently confirmed arrival when this packet
    /// left, bounding its delivery-rate sample from the send side.
    marker_at_send: SimTime,
    /// Sent under a full-gain slot, so its delivery-rate sample may feed
    /// the bandwidth filter.
    qualified: bool,
}

#[derive(Debug, Clone, Copy)]
struct QueuedPkt {
    dsn: u64,
    retx_ssn: Option<u64>,
    redundant: bool,
    /// The copy being repaired was certainly dropped (FIFO links cannot
    /// reorder, so a confirmed later-sent arrival proves the loss).
    proven_lost: bool,
}

#[derive(Debug)]
pub struct Subflow {
    pub idx: usize,
    cc: Cc,
    pub rtt: RttEstimator,
    cc_stream: crate::rng::StreamId,
    next_ssn: u64,
    sent: BTreeMap<u64, SentRec>,
    live_pkts: u64,
    live_bytes: u64,
    cum_acked_ssn: u64,
    dup_acks: u32,
    recover_ssn: u64,
    /// Send time of the most recently confirmed arrival; on FIFO links any
    /// earlier-sent unconfirmed packet is certainly lost.
    latest_counted_sent_at: SimTime,
    last_loss_scan: SimTime,
    ckpt_delivered: u64,
    ckpt_time: SimTime,
    delivered: u64,
    delivered_time: SimTime,
    lq: VecDeque<QueuedPkt>,
    lq_bytes: u64,
    pacing_armed: bool,
    pacing_gen: u64,
    next_send_at: SimTime,
    rto_gen: u64,
    rto_armed: bool,
    rto_backoff: u32,
    pub redundant_state: bool,
    red_cursor: u64,
    pub sent_bytes: u64,
    pub sent_pkts: u64,
    pub retransmits: u64,
    pub redundant_sent: u64,
}

impl Subflow {
    /// Packets in the network: sent, unacked, not declared lost.
    pub fn inflight_pkts(&self) -> u64 {
        self.live_pkts
    }

    fn window_open(&self) -> bool {
        self.cc.can_send(self.live_pkts)
    }

    pub fn srtt(&self) -> SimTime {
        self.rtt.srtt()
    }

    pub fn bw_bps(&self) -> u64 {
        self.cc.bw_bps()
    }

    pub fn rate_bps(&self) -> f64 {
        self.cc.rate_bps(&self.rtt)
    }

    pub fn coupled_gains(&self) -> Option<CoupledGains> {
        self.cc.coupled_gains()
    }

    fn is_paced(&self) -> bool {
        !matches!(self.cc, Cc::Aimd(_))
    }

    pub fn debug_state(&self) -> String {
        format!(
            "{} srtt={:.1}ms min={:.1}ms live={} lq={} rtx={}",
            self.cc.debug_state(),
            self.rtt.srtt().as_millis_f64(),
            self.rtt.min_rtt().as_millis_f64(),
            self.live_pkts,
            self.lq.len(),
            self.retransmits,
        )
    }
}

#[derive(Debug)]
struct Meta {
    next_new_dsn: u64,
    red_frontier: u64,
    cum_dsn: u64,
    outstanding: BTreeSet<u64>,
    reinject: BTreeSet<u64>,
    /// dsns below this exist in the send buffer (u64::MAX when greedy).
    written_dsn: u64,
    stalled_writes: u64,
}

#[derive(Debug)]
struct Receiver {
    ofo: OfoQueue,
    rcv_nxt_ssn: Vec<u64>,
    ssn_held: Vec<BTreeSet<u64>>,
    dup_arrivals: u64,
    buffer_drops: u64,
}

#[derive(Debug)]
pub struct Connection {
    pub cfg: ConnectionCfg,
    pub subflows: Vec<Subflow>,
    meta: Meta,
    recv: Receiver,
    n_set: Vec<usize>,
    started: bool,
    stopped: bool,
    pub ar_ticks: u64,
    ar_gen: u64,
    rr_cursor: usize,
    pub delivered_pkts: u64,
    pub arrived_pkts: u64,
}

impl Connection {
    pub fn new(cfg: ConnectionCfg, rng: &mut crate::rng::RandomSource) -> Self {
        assert!(cfg.n_subflows >= 1);
        let conn_stream = rng.register();
        // One draw per connection keeps sibling gain cycles aligned and
        // competitor connections desynchronized; slot 1 (the drain slot) is
        // skipped as a starting point.
        let mut initial_cycle = rng.below(conn_stream, 7);
        if initial_cycle >= 1 {
            initial_cycle += 1;
        }
        let subflows = (0..cfg.n_subflows)
            .map(|idx| {
                let cc_stream = rng.register();
                let cc = match &cfg.cc {
                    CcKind::NewReno => Cc::Aimd(AimdCc::new(AimdFlavor::Reno, cfg.mss)),
                    CcKind::Lia => Cc::Aimd(AimdCc::new(AimdFlavor::Lia, cfg.mss)),
                    CcKind::Olia => Cc::Aimd(AimdCc::new(AimdFlavor::Olia, cfg.mss)),
                    CcKind::Balia => Cc::Aimd(AimdCc::new(AimdFlavor::Balia, cfg.mss)),
                    CcKind::Bbr => Cc::Bbr(Bbr::new(cfg.mss, WIRE_OVERHEAD, false, initial_cycle)),
                    CcKind::CoupledBbr => {
                        Cc::Bbr(Bbr::new(cfg.mss, WIRE_OVERHEAD, true, initial_cycle))
                    }
                    CcKind::Paced { rate_bps, jitter } => {
                        Cc::Paced(crate::cc::PacedCc::new(*rate_bps, *jitter))
                    }
                };
                Subflow {
                    idx,
                    cc,
                    rtt: RttEstimator::new(),
                    cc_stream,
                    next_ssn: 0,
                    sent: BTreeMap::new(),
                    live_pkts: 0,
                    live_bytes: 0,
                    cum_acked_ssn: 0,
                    dup_acks: 0,
                    recover_ssn: 0,
                    latest_counted_sent_at: SimTime::ZERO,
                    last_loss_scan: SimTime::ZERO,
                    ckpt_delivered: 0,
                    ckpt_time: SimTime::ZERO,
                    delivered: 0,
                    delivered_time: SimTime::ZERO,
                    lq: VecDeque::new(),
                    lq_bytes: 0,
                    pacing_armed: false,
                    pacing_gen: 0,
                    next_send_at: SimTime::ZERO,
                    rto_gen: 0,
                    rto_armed: false,
                    rto_backoff: 0,
                    redundant_state: matches!(cfg.policy, Policy::Redundant),
                    red_cursor: 0,
                    sent_bytes: 0,
                    sent_pkts: 0,
                    retransmits: 0,
                    redundant_sent: 0,
                }
            })
            .collect();
        let n = cfg.n_subflows;
        let written = if cfg.buffer_cap_pkts.is_some() {
            0
        } else {
            u64::MAX
        };
        Connection {
            cfg,
            subflows,
            meta: Meta {
                next_new_dsn: 0,
                red_frontier: 0,
                cum_dsn: 0,
                outstanding: BTreeSet::new(),
                reinject: BTreeSet::new(),
                written_dsn: written,
                stalled_writes: 0,
            },
            recv: Receiver {
                ofo: OfoQueue::new(),
                rcv_nxt_ssn: vec![0; n],
                ssn_held: vec![BTreeSet::new(); n],
                dup_arrivals: 0,
                buffer_drops: 0,
            },
            n_set: (0..n).collect(),
            started: false,
            stopped: false,
            ar_ticks: 0,
            ar_gen: 0,
            rr_cursor: 0,
            delivered_pkts: 0,
            arrived_pkts: 0,
        }
    }

    fn wire_pkt(&self) -> u32 {
        self.cfg.mss + WIRE_OVERHEAD
    }

    pub fn ofo_len(&self) -> usize {
        self.recv.ofo.len()
    }

    pub fn ofo_max(&self) -> usize {
        self.recv.ofo.max_len()
    }

    pub fn delivered_dsn(&self) -> u64 {
        self.recv.ofo.next_expected()
    }

    pub fn dup_arrivals(&self) -> u64 {
        self.recv.dup_arrivals
    }

    pub fn stalled_writes(&self) -> u64 {
        self.meta.stalled_writes
    }

    /// Appends application data (whole packets) to the send buffer of a
    /// flow with a finite buffer. Returns the accepted byte count; the rest
    /// stalls until the buffer drains.
    pub fn app_write(&mut self, bytes: u64) -> u64 {
        let cap = match self.cfg.buffer_cap_pkts {
            Some(c) => c,
            None => return bytes, // greedy source: always writable
        };
        let pkts = bytes / self.cfg.mss as u64;
        let used = self.meta.written_dsn - self.meta.cum_dsn;
        let room = cap.saturating_sub(used);
        let accepted = pkts.min(room);
        self.meta.written_dsn += accepted;
        if accepted < pkts {
            self.meta.stalled_writes += pkts - accepted;
        }
        accepted * self.cfg.mss as u64
    }

    pub fn buffered_pkts(&self) -> u64 {
        if self.cfg.buffer_cap_pkts.is_none() {
            return u64::MAX;
        }
        self.meta.written_dsn - self.meta.cum_dsn
    }

    // ------------------------------------------------------------------
    // Lifecycle
    // ------------------------------------------------------------------

    pub fn start(&mut self, ctx: &mut Ctx<'_>) {
        self.started = true;
        self.refill(ctx);
        for idx in 0..self.subflows.len() {
            self.arm_pacing(idx, ctx);
        }
        self.pump_window_flows(ctx);
        if self.cfg.policy == Policy::Arp && self.subflows.len() > 1 {
            self.ar_gen += 1;
            ctx.engine.schedule(
                ctx.now + SimTime::from_millis(10),
                Action::ArTick {
                    flow: self.cfg.flow,
                    gen: self.ar_gen,
                },
            );
        }
    }

    pub fn stop(&mut self) {
        self.stopped = true;
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    // ------------------------------------------------------------------
    // Scheduler: window refill (push) and per-packet pull
    // ------------------------------------------------------------------

    /// Next data sequence number for a non-redundant transmission:
    /// reinjected packets first, then fresh ones, in dsn order.
    fn source_next(&mut self) -> Option<QueuedPkt> {
        while let Some(&dsn) = self.meta.reinject.iter().next() {
            self.meta.reinject.remove(&dsn);
            if dsn >= self.meta.cum_dsn {
                return Some(QueuedPkt {
                    dsn,
                    retx_ssn: None,
                    redundant: false,
    proven_lost: false,
                });
            }
        }
        if self.meta.next_new_dsn < self.meta.written_dsn {
            let dsn = self.meta.next_new_dsn;
            self.meta.next_new_dsn += 1;
            self.meta.red_frontier = self.meta.red_frontier.max(self.meta.next_new_dsn);
            return Some(QueuedPkt {
                dsn,
                retx_ssn: None,
                redundant: false,
                proven_lost: false,
            });
        }
        None
    }

    /// Duplicate of the oldest outstanding dsn past this subflow's cursor,
    /// moving forward on successive calls. When the cursor laps the
    /// outstanding set the picker hands out the next unsent dsn without
    /// consuming it from the source (so a non-redundant subflow can still
    /// carry it); only with no new data left does it wrap around.
    fn redundant_pick(&mut self, subflow: usize) -> Option<QueuedPkt> {
        let sf = &mut self.subflows[subflow];
        let red = |dsn| {
            Some(QueuedPkt {
                dsn,
                retx_ssn: None,
                redundant: true,
                proven_lost: false,
            })
        };
        if let Some(&dsn) = self.meta.outstanding.range(sf.red_cursor..).next() {
            sf.red_cursor = dsn + 1;
            return red(dsn);
        }
        let fresh = self.meta.red_frontier.max(self.meta.next_new_dsn);
        if fresh < self.meta.written_dsn {
            self.meta.red_frontier = fresh + 1;
            sf.red_cursor = fresh + 1;
            return red(fresh);
        }
        if let Some(&dsn) = self.meta.outstanding.iter().next() {
            sf.red_cursor = dsn + 1;
            return red(dsn);
        }
        None
    }

    fn all_in_slow_start(&self) -> bool {
        self.subflows.iter().all(|s| s.cc.in_slow_start())
    }

    /// Pre-schedules packets into per-subflow queues (adaptive policy only;
    /// the baselines pull on demand). The byte budget is the scheduling
    /// window over the non-redundant set; placement minimizes the predicted
    /// arrival time, ties to the lowest subflow index. While every subflow
    /// is still in slow start the placement degenerates to round-robin.
    fn refill(&mut self, ctx: &mut Ctx<'_>) {
        if self.cfg.policy != Policy::Arp || self.stopped || !self.started {
            return;
        }
        let wire = self.wire_pkt() as u64;
        if self.all_in_slow_start() {
            // Keep two packets queued per subflow, assigned cyclically.
            loop {
                let mut assigned = false;
                for off in 0..self.n_set.len() {
                    let idx = self.n_set[(self.rr_cursor + off) % self.n_set.len()];
                    if self.subflows[idx].lq.len() < 2 {
                        if let Some(qp) = self.source_next() {
                            self.push_lq(idx, qp, ctx);
                            self.rr_cursor = (self.rr_cursor + off + 1) % self.n_set.len();
                            assigned = true;
                        }
                    }
                }
                if !assigned {
                    break;
                }
            }
            return;
        }
        let members: Vec<(usize, f64, f64)> = self
            .n_set
            .iter()
            .map(|&i| {
                let sf = &self.subflows[i];
                (
                    i,
                    sf.cc.rate_bps(&sf.rtt).max(1.0),
                    sf.rtt.srtt().as_secs_f64(),
                )
            })
            .collect();
        let window = scheduling_window_bytes(
            &self
                .n_set
                .iter()
                .map(|&i| {
                    let sf = &self.subflows[i];
                    (sf.cc.sched_bw_bps(&sf.rtt), sf.rtt.srtt().as_secs_f64())
                })
                .collect::<Vec<_>>(),
        )
        .max(2 * wire);
        let mut pending: u64 = self.n_set.iter().map(|&i| self.subflows[i].lq_bytes).sum();
        while pending + wire <= window {
            let Some(qp) = self.source_next() else { break };
            // argmin over predicted arrivals, lowest subflow index on ties.
            let mut best = members[0].0;
            let mut best_a = f64::INFINITY;
            for &(idx, rate, srtt) in &members {
                let a = predicted_arrival_s(self.subflows[idx].lq_bytes, rate, srtt);
                if a < best_a {
                    best_a = a;
                    best = idx;
                }
            }
            self.push_lq(best, qp, ctx);
            pending += wire;
        }
    }

    fn push_lq(&mut self, idx: usize, qp: QueuedPkt, ctx: &mut Ctx<'_>) {
        let wire = self.wire_pkt() as u64;
        let sf = &mut self.subflows[idx];
        sf.lq.push_back(qp);
        sf.lq_bytes += wire;
        self.arm_pacing(idx, ctx);
    }

    /// Pull path for baselines and redundant-state subflows. Retransmit
    /// entries whose ssn was acked (or resent) in the meantime are skipped.
    fn next_packet_for(&mut self, subflow: usize) -> Option<QueuedPkt> {
        while let Some(qp) = self.subflows[subflow].lq.pop_front() {
            self.subflows[subflow].lq_bytes = self.subflows[subflow]
                .lq_bytes
                .saturating_sub(self.wire_pkt() as u64);
            if let Some(ssn) = qp.retx_ssn {
                let wanted = self.subflows[subflow]
                    .sent
                    .get(&ssn)
                    .is_some_and(|r| r.lost);
                if !wanted {
                    continue;
                }
            }
            return Some(qp);
        }
        if self.subflows[subflow].redundant_state {
            return self.redundant_pick(subflow);
        }
        match self.cfg.policy {
            Policy::Arp => None, // push-only outside the redundant set
            Policy::Redundant => None,
            Policy::RoundRobin | Policy::MinRtt => self.source_next(),
        }
    }

    // ------------------------------------------------------------------
    // Sending
    // ------------------------------------------------------------------

    fn arm_pacing(&mut self, idx: usize, ctx: &mut Ctx<'_>) {
        let flow = self.cfg.flow;
        let sf = &mut self.subflows[idx];
        if !sf.is_paced() || sf.pacing_armed || self.stopped || !self.started {
            return;
        }
        sf.pacing_armed = true;
        sf.pacing_gen += 1;
        let at = sf.next_send_at.max(ctx.now);
        ctx.engine.schedule(
            at,
            Action::Pacing {
                flow,
                subflow: idx,
                gen: sf.pacing_gen,
            },
        );
    }

    pub fn pacing_fire(&mut self, subflow: usize, gen: u64, ctx: &mut Ctx<'_>) {
        if self.stopped || self.subflows[subflow].pacing_gen != gen {
            return;
        }
        self.subflows[subflow].pacing_armed = false;
        self.refill(ctx);
        if !self.subflows[subflow].window_open() {
            // Window-blocked: the next ACK re-arms the pacer. Queued
            // retransmissions wait too; after a timeout the collapsed
            // window meters them back out as delivery resumes.
            return;
        }
        let Some(qp) = self.next_packet_for(subflow) else {
            return;
        };
        self.send_packet(subflow, qp, ctx);
        let sf = &mut self.subflows[subflow];
        let wire = (self.cfg.mss + WIRE_OVERHEAD) as u64;
        let mut cc_ctx = CcCtx {
            rng: ctx.rng,
            stream: sf.cc_stream,
        };
        let live = sf.live_pkts;
        let interval = sf
            .cc
            .pacing_interval(ctx.now, wire, &sf.rtt, live, &mut cc_ctx)
            .expect("paced subflow without pacing interval");
        sf.next_send_at = ctx.now + interval;
        self.arm_pacing(subflow, ctx);
    }

    /// Window-driven subflows send as soon as cwnd opens.
    fn pump_window_flows(&mut self, ctx: &mut Ctx<'_>) {
        if self.stopped || !self.started || self.subflows[0].is_paced() {
            return;
        }
        loop {
            let mut candidates: Vec<usize> = (0..self.subflows.len())
                .filter(|&i| self.subflows[i].window_open())
                .collect();
            if candidates.is_empty() {
                return;
            }
            let pick = match self.cfg.policy {
                Policy::MinRtt => {
                    candidates.sort_by(|&a, &b| {
                        self.subflows[a]
                            .srtt()
                            .cmp(&self.subflows[b].srtt())
                            .then(a.cmp(&b))
                    });
                    candidates[0]
                }
                Policy::RoundRobin | Policy::Redundant | Policy::Arp => {
                    let mut found = candidates[0];
                    for off in 0..self.subflows.len() {
                        let idx = (self.rr_cursor + off) % self.subflows.len();
                        if candidates.contains(&idx) {
                            found = idx;
                            break;
                        }
                    }
                    self.rr_cursor = (found + 1) % self.subflows.len();
                    found
                }
            };
            match self.next_packet_for(pick) {
                Some(qp) => {
                    self.send_packet(pick, qp, ctx);
                }
                None => return,
            }
        }
    }

    fn send_packet(&mut self, subflow: usize, qp: QueuedPkt, ctx: &mut Ctx<'_>) {
        let wire = self.wire_pkt();
        let flow = self.cfg.flow;
        let sf = &mut self.subflows[subflow];
        let ssn = match qp.retx_ssn {
            Some(ssn) => ssn,
            None => {
                let s = sf.next_ssn;
                sf.next_ssn += 1;
                s
            }
        };
        let kind = if qp.redundant {
            PacketKind::Redundant
        } else {
            PacketKind::Data
        };
        let rec = SentRec {
            dsn: qp.dsn,
            wire,
            sent_at: ctx.now,
            delivered_at_send: sf.delivered,
            delivered_time_at_send: sf.delivered_time,
            retx: qp.retx_ssn.is_some(),
            ambiguous: qp.retx_ssn.is_some() && !qp.proven_lost,
            lost: false,
            counted: false,
            marker_at_send: sf.latest_counted_sent_at,
            qualified: sf.cc.sample_qualifies(),
        };
        let prior = sf.sent.insert(ssn, rec);
        match &prior {
            None => {
                sf.live_pkts += 1;
                sf.live_bytes += wire as u64;
            }
            // A new copy of a lost packet is in flight again; a packet
            // whose arrival was already confirmed stays confirmed and
            // outside the inflight count.
            Some(old) if old.lost && !old.counted => {
                sf.live_pkts += 1;
                sf.live_bytes += wire as u64;
            }
            Some(_) => {}
        }
        if let Some(old) = prior {
            let rec = sf.sent.get_mut(&ssn).unwrap();
            rec.ambiguous |= old.ambiguous;
            if old.counted {
                rec.counted = true;
                rec.lost = false;
            }
        }
        sf.sent_bytes += wire as u64;
        sf.sent_pkts += 1;
        if qp.retx_ssn.is_some() {
            sf.retransmits += 1;
        }
        if qp.redundant {
            sf.redundant_sent += 1;
        }
        if qp.dsn >= self.meta.cum_dsn {
            self.meta.outstanding.insert(qp.dsn);
        }
        ctx.metrics.on_send(flow, subflow, ctx.now, wire as u64);
        ctx.trace.event(ctx.now, "send", flow, subflow, ssn, qp.dsn, wire);
        let pkt = Packet {
            flow,
            subflow,
            kind,
            ssn,
            dsn: qp.dsn,
            size: wire,
            sent_at: ctx.now,
            hop: 0,
            ack: None,
        };
        ctx.send(pkt);
        if !self.subflows[subflow].rto_armed {
            self.rearm_rto(subflow, ctx);
        }
    }

    fn rearm_rto(&mut self, subflow: usize, ctx: &mut Ctx<'_>) {
        let flow = self.cfg.flow;
        let sf = &mut self.subflows[subflow];
        if sf.sent.is_empty() {
            sf.rto_armed = false;
            sf.rto_gen += 1;
            return;
        }
        sf.rto_gen += 1;
        sf.rto_armed = true;
        let backoff = 1u64 << sf.rto_backoff.min(6);
        let deadline = ctx.now + sf.rtt.rto().mul_f64(backoff as f64);
        ctx.engine.schedule(
            deadline,
            Action::Rto {
                flow,
                subflow,
                gen: sf.rto_gen,
            },
        );
    }

    // ------------------------------------------------------------------
    // Receiver side
    // ------------------------------------------------------------------

    fn receiver_accept(&mut self, pkt: Packet, ctx: &mut Ctx<'_>) {
        let flow = self.cfg.flow;
        let s = pkt.subflow;
        self.arrived_pkts += 1;
        ctx.metrics
            .on_data_arrival(flow, ctx.now, self.cfg.mss as u64);
        ctx.trace
            .event(ctx.now, "recv", flow, s, pkt.ssn, pkt.dsn, pkt.size);

        // Subflow sequence space: cumulative + held set.
        if pkt.ssn == self.recv.rcv_nxt_ssn[s] {
            self.recv.rcv_nxt_ssn[s] += 1;
            while self.recv.ssn_held[s].remove(&self.recv.rcv_nxt_ssn[s]) {
                self.recv.rcv_nxt_ssn[s] += 1;
            }
        } else if pkt.ssn > self.recv.rcv_nxt_ssn[s] {
            self.recv.ssn_held[s].insert(pkt.ssn);
        }

        // Meta sequence space.
        if let Some(cap) = self.cfg.recv_buffer_pkts {
            let held = self.recv.ofo.len() as u64;
            if held >= cap && pkt.dsn != self.recv.ofo.next_expected() {
                self.recv.buffer_drops += 1;
                return; // full reassembly buffer: silently dropped, no ack
            }
        }
        match self.recv.ofo.offer(pkt.dsn) {
            OfoOutcome::Delivered(n) => {
                self.delivered_pkts += n;
                ctx.metrics
                    .on_deliver(flow, ctx.now, n * self.cfg.mss as u64);
                ctx.trace
                    .event(ctx.now, "deliver", flow, s, pkt.ssn, pkt.dsn, (n as u32) * self.cfg.mss);
            }
            OfoOutcome::Held => {}
            OfoOutcome::Duplicate => {
                self.recv.dup_arrivals += 1;
            }
        }
        ctx.metrics
            .on_ofo_sample(flow, ctx.now, self.recv.ofo.len() as u64);

        let ack = Packet {
            flow,
            subflow: s,
            kind: PacketKind::Ack,
            ssn: pkt.ssn,
            dsn: pkt.dsn,
            size: ACK_WIRE_BYTES,
            sent_at: ctx.now,
            hop: 0,
            ack: Some(AckInfo {
                cum_ssn: self.recv.rcv_nxt_ssn[s],
                cum_dsn: self.recv.ofo.next_expected(),
                echo_ssn: pkt.ssn,
            }),
        };
        ctx.send(ack);
    }

    // ------------------------------------------------------------------
    // Sender-side ACK processing and loss recovery
    // ------------------------------------------------------------------

    fn sibling_view(&self) -> Vec<Sibling> {
        self.subflows
            .iter()
            .map(|s| Sibling {
                cwnd_pkts: match &s.cc {
                    Cc::Aimd(a) => a.cwnd_pkts(),
                    _ => s.cc.cwnd_pkts() as f64,
                },
                srtt_s: s.rtt.srtt().as_secs_f64(),
            })
            .collect()
    }

    fn sender_ack(&mut self, pkt: Packet, ctx: &mut Ctx<'_>) {
        if self.stopped {
            return;
        }
        let info = pkt.ack.expect("ack packet without ack info");
        let s = pkt.subflow;
        let flow = self.cfg.flow;

        if info.cum_dsn > self.meta.cum_dsn {
            let acked: Vec<u64> = self
                .meta
                .outstanding
                .range(..info.cum_dsn)
                .copied()
                .collect();
            for dsn in acked {
                self.meta.outstanding.remove(&dsn);
            }
            self.meta.cum_dsn = info.cum_dsn;
        }

        let siblings = self.sibling_view();
        let sf = &mut self.subflows[s];
        let echo = sf.sent.get(&info.echo_ssn).map(|r| {
            (
                r.ambiguous,
                r.sent_at,
                r.delivered_at_send,
                r.delivered_time_at_send,
                r.marker_at_send,
                r.qualified,
            )
        });
        let echo_rtt_ok = !echo.map(|e| e.0).unwrap_or(true);
        let rtt_sample = match echo {
            Some((_, sent_at, ..)) if echo_rtt_ok => Some(ctx.now - sent_at),
            _ => None,
        };

        // Every ack proves one arrival (its echo): the delivered counter
        // advances per arrival and the packet leaves the in-flight count,
        // so delivery-rate sampling and the send window keep working while
        // a hole stalls the cumulative level.
        if let Some(rec) = sf.sent.get_mut(&info.echo_ssn) {
            if !rec.counted {
                rec.counted = true;
                sf.delivered += rec.wire as u64;
                sf.delivered_time = ctx.now;
                // The loss-proof marker may only advance when the arrived
                // copy is known to be the recorded one; an ambiguous
                // retransmission could be echoing an older copy, and a
                // lying marker cascades into false loss proofs.
                if !rec.ambiguous {
                    sf.latest_counted_sent_at = sf.latest_counted_sent_at.max(rec.sent_at);
                }
                if !rec.lost {
                    sf.live_pkts -= 1;
                    sf.live_bytes -= rec.wire as u64;
                }
            }
        }

        let mut newly_acked = 0u64;
        let advanced = info.cum_ssn > sf.cum_acked_ssn;
        if advanced {
            let acked: Vec<u64> = sf.sent.range(..info.cum_ssn).map(|(k, _)| *k).collect();
            for ssn in acked {
                let rec = sf.sent.remove(&ssn).unwrap();
                if !rec.lost && !rec.counted {
                    sf.live_pkts -= 1;
                    sf.live_bytes -= rec.wire as u64;
                }
                if !rec.counted {
                    // Ack seen only cumulatively (echo lost or coalesced).
                    sf.delivered += rec.wire as u64;
                    sf.delivered_time = ctx.now;
                }
                newly_acked += rec.wire as u64;
            }
            sf.cum_acked_ssn = info.cum_ssn;
            sf.dup_acks = 0;
            sf.rto_backoff = 0;
        } else if info.echo_ssn >= sf.cum_acked_ssn {
            sf.dup_acks += 1;
        }

        if let Some(rtt) = rtt_sample {
            sf.rtt.update(rtt, ctx.now);
            ctx.metrics.on_rtt_sample(flow, s, rtt);
        }

        // Delivery-rate sample: bytes confirmed since the echoed packet
        // left, over the larger of the ack-side and send-side spans, and
        // only when the echo's timing is unambiguous and it was sent in a
        // full-gain slot.
        let rate_sample_bps = match echo {
            Some((false, sent_at, prior_delivered, prior_time, marker, true)) => {
                let delta = sf.delivered.saturating_sub(prior_delivered);
                let ack_iv = ctx.now.saturating_sub(prior_time);
                let snd_iv = sent_at.saturating_sub(marker);
                let iv = ack_iv.max(snd_iv);
                if delta > 0 && iv.as_nanos() > 0 {
                    Some((delta as u128 * 8 * 1_000_000_000 / iv.as_nanos() as u128) as u64)
                } else {
                    None
                }
            }
            _ => None,
        };
        let prior_delivered = echo.map(|e| e.2).unwrap_or(sf.delivered);
        let sample = AckSample {
            now: ctx.now,
            newly_acked_bytes: newly_acked,
            rtt_sample,
            rate_sample_bps,
            delivered: sf.delivered,
            prior_delivered,
            inflight_bytes_after: sf.live_bytes,
            inflight_pkts_after: sf.live_pkts,
        };
        // Windowed derivative of the delivered counter: a second, coarser
        // rate measurement that stays alive through loss churn. Fed
        // raise-only, so deliberate under-utilization never drags the
        // estimate down through it.
        let span = ctx.now.saturating_sub(sf.ckpt_time);
        if span >= sf.rtt.srtt() {
            let delta = sf.delivered - sf.ckpt_delivered;
            if sf.ckpt_time > SimTime::ZERO && delta > 0 {
                let bps = (delta as u128 * 8 * 1_000_000_000 / span.as_nanos() as u128) as u64;
                sf.cc.feed_rate_sample(bps);
            }
            sf.ckpt_delivered = sf.delivered;
            sf.ckpt_time = ctx.now;
        }

        let bw_before = sf.cc.bw_bps();
        let mut cc_ctx = CcCtx {
            rng: ctx.rng,
            stream: sf.cc_stream,
        };
        sf.cc.on_ack(&sample, &mut sf.rtt, &siblings, s, &mut cc_ctx);
        let cycle_advanced = sf.cc.take_cycle_advanced();
        let bw_changed = sf.cc.bw_bps() != bw_before;

        // Loss recovery triggers. Paced (rate-based) flows infer exact
        // holes from confirmed arrivals and repair them in parallel;
        // window flows follow classic cumulative-ack recovery, one
        // retransmission per round trip.
        let paced = self.subflows[s].is_paced();
        if paced {
            let gap = info.echo_ssn > info.cum_ssn;
            let due = ctx.now.saturating_sub(self.subflows[s].last_loss_scan)
                >= SimTime::from_nanos(self.subflows[s].rtt.srtt().as_nanos() / 8);
            if gap && due {
                self.mark_lost_holes(s, ctx);
            }
        } else {
            let sf = &self.subflows[s];
            let three_dups = sf.dup_acks >= 3 && sf.cum_acked_ssn >= sf.recover_ssn;
            let partial_ack = advanced && sf.cum_acked_ssn < sf.recover_ssn && !sf.sent.is_empty();
            if three_dups {
                self.fast_retransmit(s, ctx);
            } else if partial_ack {
                self.retransmit_head(s, ctx);
            }
        }

        // Window flows use the impatient variant (the retransmission timer
        // does not restart during recovery, so a long one-hole-per-RTT
        // crawl ends in a timeout and a go-back-n sweep). Paced flows
        // restart it on every advance.
        let sf = &self.subflows[s];
        if advanced && (paced || sf.cum_acked_ssn >= sf.recover_ssn) {
            self.rearm_rto(s, ctx);
        }

        if cycle_advanced || bw_changed {
            if cycle_advanced && self.subflows.len() > 1 && self.subflows[s].cc.is_coupled_bbr() {
                // One probing cycle per connection: the subflow that just
                // stepped drags its siblings onto the same slot.
                if let Some(idx) = self.subflows[s].cc.cycle_index() {
                    for o in 0..self.subflows.len() {
                        if o != s {
                            self.subflows[o].cc.sync_cycle(idx, ctx.now);
                        }
                    }
                }
            }
            self.recouple(ctx.now);
        }

        self.refill(ctx);
        self.arm_pacing(s, ctx);
        self.pump_window_flows(ctx);
    }

    fn fast_retransmit(&mut self, s: usize, ctx: &mut Ctx<'_>) {
        let siblings = self.sibling_view();
        let sf = &mut self.subflows[s];
        sf.recover_ssn = sf.next_ssn;
        sf.dup_acks = 0;
        sf.cc.on_loss(LossKind::FastRetransmit, &siblings, s);
        self.retransmit_head(s, ctx);
    }

    /// Marks every certainly-lost packet on the subflow and queues its
    /// retransmission at the head of the send queue in sequence order. On
    /// FIFO links a packet is certainly lost once any packet sent after it
    /// has been confirmed. One loss notification per recovery epoch.
    fn mark_lost_holes(&mut self, s: usize, ctx: &mut Ctx<'_>) {
        let sf = &mut self.subflows[s];
        sf.last_loss_scan = ctx.now;
        let threshold = sf.latest_counted_sent_at;
        let mut queue: Vec<QueuedPkt> = Vec::new();
        for (&ssn, rec) in sf.sent.iter_mut() {
            if rec.counted || rec.lost || rec.sent_at >= threshold {
                continue;
            }
            rec.lost = true;
            sf.live_pkts -= 1;
            sf.live_bytes -= rec.wire as u64;
            queue.push(QueuedPkt {
                dsn: rec.dsn,
                retx_ssn: Some(ssn),
                redundant: false,
                proven_lost: true,
            });
        }
        if queue.is_empty() {
            return;
        }
        let wire = (self.cfg.mss + WIRE_OVERHEAD) as u64;
        for qp in queue.iter().rev() {
            sf.lq.push_front(*qp);
            sf.lq_bytes += wire;
        }
        // Siblings may carry a certainly-lost dsn sooner than this
        // subflow's paced retransmission, and duplicates are idempotent.
        if self.subflows.len() > 1 {
            for qp in &queue {
                if qp.dsn >= self.meta.cum_dsn {
                    self.meta.reinject.insert(qp.dsn);
                }
            }
        }
        let siblings = self.sibling_view();
        let sf = &mut self.subflows[s];
        if sf.cum_acked_ssn >= sf.recover_ssn {
            sf.recover_ssn = sf.next_ssn;
            sf.cc.on_loss(LossKind::FastRetransmit, &siblings, s);
        }
        self.arm_pacing(s, ctx);
    }

    /// Immediately resends the earliest unacked ssn on the subflow,
    /// bypassing window and pacing. Repeats for the same head are
    /// throttled to one per smoothed RTT; heads already queued by a
    /// timeout sweep are left to the pacer.
    fn retransmit_head(&mut self, s: usize, ctx: &mut Ctx<'_>) {
        let sf = &self.subflows[s];
        let Some((&ssn, rec)) = sf.sent.iter().next() else {
            return;
        };
        if rec.lost {
            return;
        }
        if rec.retx && ctx.now.saturating_sub(rec.sent_at) < sf.rtt.srtt() {
            return;
        }
        let qp = QueuedPkt {
            dsn: rec.dsn,
            retx_ssn: Some(ssn),
            redundant: false,
            proven_lost: false,
        };
        self.send_packet(s, qp, ctx);
    }

    pub fn rto_fire(&mut self, s: usize, gen: u64, ctx: &mut Ctx<'_>) {
        if self.stopped || self.subflows[s].rto_gen != gen || !self.subflows[s].rto_armed {
            return;
        }
        if self.subflows[s].sent.is_empty() {
            self.subflows[s].rto_armed = false;
            return;
        }
        let siblings = self.sibling_view();
        let sf = &mut self.subflows[s];
        sf.cc.on_loss(LossKind::Timeout, &siblings, s);
        sf.rto_backoff += 1;
        sf.dup_acks = 0;
        sf.recover_ssn = sf.next_ssn;

        // Go-back-n: everything outstanding is declared lost. The head is
        // retransmitted right away; the rest re-enter this subflow's queue
        // in order with their original ssns, so the subflow sequence space
        // heals even after abandonment. On the first timeout the data
        // sequence numbers are also offered back to the scheduler, letting
        // sibling subflows rescue data stranded on a dead path.
        let mut iter = sf.sent.iter_mut();
        let (&head_ssn, head) = iter.next().unwrap();
        let head_qp = QueuedPkt {
            dsn: head.dsn,
            retx_ssn: Some(head_ssn),
            redundant: false,
            proven_lost: false,
        };
        let mut lost_entries: Vec<QueuedPkt> = Vec::new();
        let mut lost_dsns: Vec<u64> = Vec::new();
        for (&ssn, rec) in iter {
            if rec.counted {
                continue; // arrival confirmed, nothing to repair
            }
            if !rec.lost {
                rec.lost = true;
                sf.live_pkts -= 1;
                sf.live_bytes -= rec.wire as u64;
            }
            lost_entries.push(QueuedPkt {
                dsn: rec.dsn,
                retx_ssn: Some(ssn),
                redundant: false,
                proven_lost: false,
            });
            lost_dsns.push(rec.dsn);
        }
        // Replace any previous sweep's queue entries with the fresh set.
        let wire = (self.cfg.mss + WIRE_OVERHEAD) as u64;
        sf.lq.retain(|qp| qp.retx_ssn.is_none());
        for qp in lost_entries.into_iter().rev() {
            sf.lq.push_front(qp);
        }
        sf.lq_bytes = sf.lq.len() as u64 * wire;
        if self.subflows.len() > 1 {
            lost_dsns.push(head_qp.dsn);
            for dsn in lost_dsns {
                if dsn >= self.meta.cum_dsn {
                    self.meta.reinject.insert(dsn);
                }
            }
        }
        ctx.trace.event(ctx.now, "rto", self.cfg.flow, s, 0, 0, 0);
        self.send_packet(s, head_qp, ctx);
        self.rearm_rto(s, ctx);
        self.refill(ctx);
        self.pump_window_flows(ctx);
        // Reinjected data may now be schedulable on sibling subflows.
        for idx in 0..self.subflows.len() {
            self.arm_pacing(idx, ctx);
        }
    }

    // ------------------------------------------------------------------
    // Adaptive redundancy decisions
    // ------------------------------------------------------------------

    pub fn ar_tick(&mut self, gen: u64, ctx: &mut Ctx<'_>) {
        if self.stopped || gen != self.ar_gen || self.cfg.policy != Policy::Arp {
            return;
        }
        let flow = self.cfg.flow;
        let have_samples = self.subflows.iter().all(|s| s.rtt.has_sample());
        self.ar_ticks += 1;
        if have_samples {
            let inputs: Vec<ArInput> = self
                .subflows
                .iter()
                .map(|s| ArInput {
                    subflow: s.idx,
                    rate_bps: s.cc.rate_bps(&s.rtt).max(1.0),
                    srtt_s: s.rtt.srtt().as_secs_f64(),
                    inflight_pkts: s.inflight_pkts(),
                })
                .collect();
            let (n, r) = ar_partition(&inputs);
            let objective = ar_objective(
                &n.iter()
                    .map(|&i| inputs[i])
                    .collect::<Vec<_>>(),
            );
            let demoted: Vec<usize> = self
                .n_set
                .iter()
                .copied()
                .filter(|i| !n.contains(i))
                .collect();
            for idx in 0..self.subflows.len() {
                self.subflows[idx].redundant_state = r.contains(&idx);
            }
            for idx in demoted {
                // Hand unsent new data back to the window head in dsn
                // order; subflow-bound retransmissions stay.
                let wire = self.wire_pkt() as u64;
                let entries: Vec<QueuedPkt> = self.subflows[idx].lq.drain(..).collect();
                let mut kept = VecDeque::new();
                for qp in entries {
                    if qp.retx_ssn.is_none() && !qp.redundant {
                        self.meta.reinject.insert(qp.dsn);
                    } else {
                        kept.push_back(qp);
                    }
                }
                self.subflows[idx].lq_bytes = kept.len() as u64 * wire;
                self.subflows[idx].lq = kept;
            }
            if n != self.n_set {
                self.n_set = n.clone();
            }
            ctx.trace.decision(ctx.now, flow, &n, &r, objective);
            self.refill(ctx);
            for idx in 0..self.subflows.len() {
                self.arm_pacing(idx, ctx);
            }
            self.pump_window_flows(ctx);
        }
        let cadence = self
            .subflows
            .iter()
            .map(|s| s.rtt.srtt())
            .min()
            .unwrap_or(SimTime::from_millis(10));
        self.ar_gen += 1;
        ctx.engine.schedule(
            ctx.now + cadence,
            Action::ArTick {
                flow,
                gen: self.ar_gen,
            },
        );
    }

    /// Recomputes the coupled gains from the current bandwidth estimates.
    /// Subflows without a valid sample are left out of the sum and fall
    /// back to the non-positive alpha regime: valid means a nonzero
    /// estimate backed by a delivery within the last second, so a dead
    /// path stops weighing its siblings down soon after it stops acking.
    fn recouple(&mut self, now: SimTime) {
        if !self.subflows[0].cc.is_coupled_bbr() {
            return;
        }
        let stale_after = SimTime::from_secs(1);
        let valid: Vec<bool> = self
            .subflows
            .iter()
            .map(|s| {
                s.cc.bw_bps() > 0
                    && (s.delivered == 0 || now.saturating_sub(s.delivered_time) <= stale_after)
                    && s.delivered > 0
            })
            .collect();
        let bw: Vec<f64> = self
            .subflows
            .iter()
            .zip(&valid)
            .filter(|(_, v)| **v)
            .map(|(s, _)| s.cc.bw_bps() as f64)
            .collect();
        if bw.is_empty() {
            return;
        }
        let gains = coupled_gains(&bw);
        let max_bw = bw.iter().cloned().fold(0.0, f64::max);
        let mut it = gains.into_iter();
        for (idx, v) in valid.iter().enumerate() {
            let g = if *v {
                it.next().unwrap()
            } else {
                CoupledGains {
                    beta: 0.0,
                    alpha: -1.0 / 3.0,
                    sibling_max_bps: max_bw,
                }
            };
            self.subflows[idx].cc.set_coupled_gains(g);
        }
    }

    // ------------------------------------------------------------------
    // Entry point from the event loop
    // ------------------------------------------------------------------

    pub fn debug_meta(&self) -> String {
        format!(
            "next_exp={} ofo={} reinject={}(min {:?}) outstanding={}(min {:?}) next_new={} n_set={:?} red={:?} ticks={}",
            self.recv.ofo.next_expected(),
            self.recv.ofo.len(),
            self.meta.reinject.len(),
            self.meta.reinject.iter().next(),
            self.meta.outstanding.len(),
            self.meta.outstanding.iter().next(),
            self.meta.next_new_dsn,
            self.n_set,
            self.subflows.iter().map(|s| s.redundant_state).collect::<Vec<_>>(),
            self.ar_ticks,
        )
    }

    pub fn on_arrival(&mut self, pkt: Packet, ctx: &mut Ctx<'_>) {
        match pkt.kind {
            PacketKind::Data | PacketKind::Redundant => self.receiver_accept(pkt, ctx),
            PacketKind::Ack => self.sender_ack(pkt, ctx),
        }
    }
}
