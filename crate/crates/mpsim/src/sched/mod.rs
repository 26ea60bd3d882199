//! Packet-to-subflow assignment policies.
//!
//! Round-robin and min-RTT pull the next unsent packet on demand when a
//! subflow has room. Redundant marks every subflow redundant so all traffic
//! goes through the duplicate picker. The adaptive policy splits subflows
//! into a non-redundant set (fed by arrival-time prediction) and a
//! redundant set (fed by the duplicate picker), re-deciding the split every
//! minimum RTT.

pub mod arp;

pub use arp::{
    ar_objective, ar_partition, predicted_arrival_s, scheduling_window_bytes, ArInput,
};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    RoundRobin,
    MinRtt,
    Redundant,
    Arp,
}

impl Policy {
    pub fn parse(s: &str) -> Option<Policy> {
        match s {
            "roundrobin" | "round-robin" | "rr" => Some(Policy::RoundRobin),
            "minrtt" | "min-rtt" => Some(Policy::MinRtt),
            "redundant" => Some(Policy::Redundant),
            "arp" | "ar-p" => Some(Policy::Arp),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Policy::RoundRobin => "roundrobin",
            Policy::MinRtt => "minrtt",
            Policy::Redundant => "redundant",
            Policy::Arp => "arp",
        }
    }
}
