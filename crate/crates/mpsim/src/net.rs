//! Link emulation: drop-tail bottleneck queues with bandwidth, propagation
//! delay and i.i.d. random loss, all schedulable over time.
//!
//! A link is unidirectional. The serializer models the head packet leaving
//! at size/bandwidth; queue occupancy includes the packet in service, so a
//! link with a 3000 B queue holds one serializing packet plus 3000 B of
//! backlog before it tail-drops. Random loss applies on enqueue, before
//! queueing, and never to ACKs unless the scenario says otherwise. Links
//! never reorder: jittered propagation delays are clamped to FIFO order.

use crate::rng::{RandomSource, StreamId};
use crate::time::SimTime;
use std::collections::VecDeque;

pub const DEFAULT_MSS: u32 = 1448;
pub const WIRE_OVERHEAD: u32 = 52;
pub const ACK_WIRE_BYTES: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketKind {
    Data,
    Redundant,
    Ack,
}

/// Fields an ACK carries back to the sender.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AckInfo {
    /// All subflow sequence numbers below this are received.
    pub cum_ssn: u64,
    /// All data sequence numbers below this are delivered in order.
    pub cum_dsn: u64,
    /// The ssn whose arrival produced this ACK.
    pub echo_ssn: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub flow: usize,
    pub subflow: usize,
    pub kind: PacketKind,
    pub ssn: u64,
    pub dsn: u64,
    pub size: u32,
    pub sent_at: SimTime,
    /// Links already traversed on the packet's route.
    pub hop: u8,
    pub ack: Option<AckInfo>,
}

#[derive(Debug, Clone, Copy)]
pub struct LinkParams {
    pub bandwidth_bps: u64,
    pub delay: SimTime,
    pub loss_rate: f64,
    pub queue_capacity: u64,
}

/// One timed parameter change. With `until` set, the affected values ramp
/// linearly from their value at `from` to the target; otherwise they step.
#[derive(Debug, Clone, Copy)]
pub struct ParamChange {
    pub from: SimTime,
    pub until: Option<SimTime>,
    pub bandwidth_bps: Option<u64>,
    pub delay: Option<SimTime>,
    pub loss_rate: Option<f64>,
}

fn lerp(a: f64, b: f64, frac: f64) -> f64 {
    a + (b - a) * frac
}

fn apply_changes(base: LinkParams, changes: &[ParamChange], now: SimTime) -> LinkParams {
    let mut p = base;
    for ch in changes {
        if now < ch.from {
            break;
        }
        let frac = match ch.until {
            Some(until) if now < until => {
                (now - ch.from).as_nanos() as f64 / (until - ch.from).as_nanos() as f64
            }
            _ => 1.0,
        };
        if let Some(bw) = ch.bandwidth_bps {
            p.bandwidth_bps = lerp(p.bandwidth_bps as f64, bw as f64, frac).round() as u64;
        }
        if let Some(d) = ch.delay {
            p.delay =
                SimTime::from_nanos(lerp(p.delay.as_nanos() as f64, d.as_nanos() as f64, frac)
                    .round() as u64);
        }
        if let Some(l) = ch.loss_rate {
            p.loss_rate = lerp(p.loss_rate, l, frac).clamp(0.0, 1.0);
        }
    }
    p
}

#[derive(Debug, Default, Clone, Copy)]
pub struct LinkCounters {
    pub offered: u64,
    pub delivered: u64,
    pub delivered_bytes: u64,
    pub dropped_random: u64,
    pub dropped_congestion: u64,
}

#[derive(Debug)]
pub struct Link {
    pub name: String,
    base: LinkParams,
    changes: Vec<ParamChange>,
    delay_jitter: f64,
    jitter_factor: f64,
    jitter_drawn_at: SimTime,
    loss_on_acks: bool,
    loss_stream: StreamId,
    jitter_stream: StreamId,
    queue: VecDeque<Packet>,
    queue_bytes: u64,
    serializing: bool,
    last_arrival: SimTime,
    pub counters: LinkCounters,
}

/// Outcome of offering a packet to a link.
#[derive(Debug, PartialEq)]
pub enum Offer {
    /// Head of an idle link: serialization completes at the given time.
    StartedSerializing(SimTime),
    Queued,
    DroppedRandom,
    DroppedCongestion,
}

impl Link {
    pub fn params_at(&self, now: SimTime) -> LinkParams {
        apply_changes(self.base, &self.changes, now)
    }

    pub fn queue_bytes(&self) -> u64 {
        self.queue_bytes
    }

    /// Packets sitting in the queue (including the one in service).
    pub fn queue_pkts(&self) -> u64 {
        self.queue.len() as u64
    }
}

#[derive(Debug)]
pub struct Network {
    pub links: Vec<Link>,
}

impl Network {
    pub fn new() -> Self {
        Network { links: Vec::new() }
    }

    pub fn add_link(
        &mut self,
        name: &str,
        base: LinkParams,
        changes: Vec<ParamChange>,
        delay_jitter: f64,
        loss_on_acks: bool,
        rng: &mut RandomSource,
    ) -> usize {
        assert!(base.bandwidth_bps > 0, "link {name}: zero bandwidth");
        assert!(
            (0.0..=1.0).contains(&base.loss_rate),
            "link {name}: loss outside [0,1]"
        );
        let id = self.links.len();
        self.links.push(Link {
            name: name.to_string(),
            base,
            changes,
            delay_jitter,
            jitter_factor: 1.0,
            jitter_drawn_at: SimTime::MAX,
            loss_on_acks,
            loss_stream: rng.register(),
            jitter_stream: rng.register(),
            queue: VecDeque::new(),
            queue_bytes: 0,
            serializing: false,
            last_arrival: SimTime::ZERO,
            counters: LinkCounters::default(),
        });
        id
    }

    /// Offers a packet to the link. On `StartedSerializing(t)` the caller
    /// schedules a departure completion at `t`.
    pub fn offer(
        &mut self,
        link_id: usize,
        pkt: Packet,
        now: SimTime,
        rng: &mut RandomSource,
    ) -> Offer {
        let link = &mut self.links[link_id];
        link.counters.offered += 1;
        let params = apply_changes(link.base, &link.changes, now);
        let lossy = pkt.kind != PacketKind::Ack || link.loss_on_acks;
        if lossy && params.loss_rate > 0.0 && rng.uniform(link.loss_stream) < params.loss_rate {
            link.counters.dropped_random += 1;
            return Offer::DroppedRandom;
        }
        if link.queue_bytes + pkt.size as u64 > params.queue_capacity {
            link.counters.dropped_congestion += 1;
            return Offer::DroppedCongestion;
        }
        link.queue_bytes += pkt.size as u64;
        link.queue.push_back(pkt);
        if !link.serializing {
            link.serializing = true;
            let head = link.queue.front().unwrap();
            Offer::StartedSerializing(
                now + SimTime::serialization(head.size as u64, params.bandwidth_bps),
            )
        } else {
            Offer::Queued
        }
    }

    /// Completes the head packet's serialization: returns the packet and its
    /// arrival time at the far end, plus the completion time of the next
    /// packet if one was waiting.
    pub fn complete_serialization(
        &mut self,
        link_id: usize,
        now: SimTime,
        rng: &mut RandomSource,
    ) -> ((Packet, SimTime), Option<SimTime>) {
        let link = &mut self.links[link_id];
        let pkt = link
            .queue
            .pop_front()
            .expect("serialization completed on an empty link");
        link.queue_bytes -= pkt.size as u64;
        link.counters.delivered += 1;
        link.counters.delivered_bytes += pkt.size as u64;
        let params = apply_changes(link.base, &link.changes, now);
        let mut delay = params.delay;
        if link.delay_jitter > 0.0 {
            // Slowly-varying propagation jitter: one draw holds for 10 ms,
            // modelling path-condition drift bounded by the jitter factor.
            if link.jitter_drawn_at == SimTime::MAX
                || now.saturating_sub(link.jitter_drawn_at) >= SimTime::from_millis(10)
            {
                let u = rng.symmetric(link.jitter_stream);
                link.jitter_factor = 1.0 + u * link.delay_jitter;
                link.jitter_drawn_at = now;
            }
            delay = delay.mul_f64(link.jitter_factor);
        }
        // FIFO even under jitter: never arrive before the previous packet.
        let arrival = (now + delay).max(link.last_arrival + SimTime::from_nanos(1));
        link.last_arrival = arrival;
        let next = if let Some(head) = link.queue.front() {
            Some(now + SimTime::serialization(head.size as u64, params.bandwidth_bps))
        } else {
            link.serializing = false;
            None
        };
        ((pkt, arrival), next)
    }
}

impl Default for Network {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data_pkt(size: u32) -> Packet {
        Packet {
            flow: 0,
            subflow: 0,
            kind: PacketKind::Data,
            ssn: 0,
            dsn: 0,
            size,
            sent_at: SimTime::ZERO,
            hop: 0,
            ack: None,
        }
    }

    fn net_with(params: LinkParams) -> (Network, RandomSource) {
        let mut rng = RandomSource::new(9);
        let mut net = Network::new();
        net.add_link("l", params, vec![], 0.0, false, &mut rng);
        (net, rng)
    }

    #[test]
    fn idle_link_arrival_time() {
        // 1500 B at 100 Mbps, 25 ms delay: arrival at 120 us + 25 ms.
        let (mut net, mut rng) = net_with(LinkParams {
            bandwidth_bps: 100_000_000,
            delay: SimTime::from_millis(25),
            loss_rate: 0.0,
            queue_capacity: 1_000_000,
        });
        let offer = net.offer(0, data_pkt(1500), SimTime::ZERO, &mut rng);
        let done = match offer {
            Offer::StartedSerializing(t) => t,
            other => panic!("{other:?}"),
        };
        assert_eq!(done, SimTime::from_micros(120));
        let ((_, arrival), next) = net.complete_serialization(0, done, &mut rng);
        assert_eq!(arrival, SimTime::from_micros(120) + SimTime::from_millis(25));
        assert!(next.is_none());
    }

    #[test]
    fn full_loss_drops_everything() {
        let (mut net, mut rng) = net_with(LinkParams {
            bandwidth_bps: 1_000_000,
            delay: SimTime::ZERO,
            loss_rate: 1.0,
            queue_capacity: 1_000_000,
        });
        for _ in 0..100 {
            assert_eq!(
                net.offer(0, data_pkt(1500), SimTime::ZERO, &mut rng),
                Offer::DroppedRandom
            );
        }
        assert_eq!(net.links[0].counters.dropped_random, 100);
    }

    #[test]
    fn drop_tail_counts_in_service_packet() {
        // Capacity 3000 B, three back-to-back 1500 B packets: the first
        // serializes (still occupying the queue), the second queues, the
        // third exceeds capacity and is a congestion drop.
        let (mut net, mut rng) = net_with(LinkParams {
            bandwidth_bps: 1_000_000,
            delay: SimTime::ZERO,
            loss_rate: 0.0,
            queue_capacity: 3000,
        });
        assert!(matches!(
            net.offer(0, data_pkt(1500), SimTime::ZERO, &mut rng),
            Offer::StartedSerializing(_)
        ));
        assert_eq!(net.offer(0, data_pkt(1500), SimTime::ZERO, &mut rng), Offer::Queued);
        assert_eq!(
            net.offer(0, data_pkt(1500), SimTime::ZERO, &mut rng),
            Offer::DroppedCongestion
        );
        let c = net.links[0].counters;
        assert_eq!((c.offered, c.dropped_congestion), (3, 1));
    }

    #[test]
    fn loss_ramp_interpolates_linearly() {
        // 0.01% at 10 s ramping to 1% at 30 s: 0.505% at 20 s.
        let mut rng = RandomSource::new(1);
        let mut net = Network::new();
        net.add_link(
            "l",
            LinkParams {
                bandwidth_bps: 1_000_000,
                delay: SimTime::ZERO,
                loss_rate: 0.0001,
                queue_capacity: 10_000,
            },
            vec![ParamChange {
                from: SimTime::from_secs(10),
                until: Some(SimTime::from_secs(30)),
                bandwidth_bps: None,
                delay: None,
                loss_rate: Some(0.01),
            }],
            0.0,
            false,
            &mut rng,
        );
        let at = |s| net.links[0].params_at(SimTime::from_secs(s)).loss_rate;
        assert!((at(5) - 0.0001).abs() < 1e-12);
        assert!((at(20) - 0.00505).abs() < 1e-12);
        assert!((at(30) - 0.01).abs() < 1e-12);
        assert!((at(40) - 0.01).abs() < 1e-12);
    }

    #[test]
    fn step_change_kills_link() {
        let mut rng = RandomSource::new(1);
        let mut net = Network::new();
        net.add_link(
            "l",
            LinkParams {
                bandwidth_bps: 1_000_000,
                delay: SimTime::ZERO,
                loss_rate: 0.0,
                queue_capacity: 10_000,
            },
            vec![ParamChange {
                from: SimTime::from_secs(15),
                until: None,
                bandwidth_bps: None,
                delay: None,
                loss_rate: Some(1.0),
            }],
            0.0,
            false,
            &mut rng,
        );
        assert_eq!(net.links[0].params_at(SimTime::from_secs(14)).loss_rate, 0.0);
        assert_eq!(net.links[0].params_at(SimTime::from_secs(15)).loss_rate, 1.0);
        for _ in 0..50 {
            let offer = net.offer(0, data_pkt(1500), SimTime::from_secs(16), &mut rng);
            assert_eq!(offer, Offer::DroppedRandom);
        }
    }

    #[test]
    fn no_schedule_behaves_static() {
        let (net, _) = net_with(LinkParams {
            bandwidth_bps: 5_000_000,
            delay: SimTime::from_millis(10),
            loss_rate: 0.25,
            queue_capacity: 9000,
        });
        let p = net.links[0].params_at(SimTime::from_secs(100));
        assert_eq!(p.bandwidth_bps, 5_000_000);
        assert_eq!(p.delay, SimTime::from_millis(10));
        assert_eq!(p.loss_rate, 0.25);
    }
}
