//! Scenario files: topology, flows, link schedules, seed and duration.
//!
//! The on-disk format is TOML; JSON bodies are accepted too and map onto
//! the same structure. Command-line overrides address fields by dotted
//! path, where array segments may be an index or an element id.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conn::CcKind;
use crate::sched::Policy;

pub const DEFAULT_MSS: u32 = 1448;

fn default_warmup() -> f64 {
    2.0
}

fn default_bin_ms() -> f64 {
    100.0
}

fn default_scheduler() -> String {
    "minrtt".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkChange {
    pub at_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub until_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth_mbps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkCfg {
    pub id: String,
    pub bandwidth_mbps: f64,
    pub delay_ms: f64,
    #[serde(default)]
    pub loss: f64,
    /// Queue size in bandwidth-delay products (default 1.0).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queue_bdp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queue_bytes: Option<u64>,
    /// Random loss also applies to the reverse (ACK) direction.
    #[serde(default)]
    pub ack_loss: bool,
    /// Relative propagation-delay jitter in [0, 1).
    #[serde(default)]
    pub delay_jitter: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schedule: Vec<LinkChange>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowCfg {
    pub id: String,
    /// "tcp" (one path) or "mptcp".
    pub kind: String,
    pub cc: String,
    #[serde(default = "default_scheduler")]
    pub scheduler: String,
    /// Forward routes, one per subflow, as lists of link ids.
    pub paths: Vec<Vec<String>>,
    #[serde(default)]
    pub start_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_s: Option<f64>,
    /// For cc = "paced".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_mbps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_jitter: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buffer_cap_pkts: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recv_buffer_pkts: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mss: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub duration_s: f64,
    #[serde(default = "default_warmup")]
    pub warmup_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_bin_ms")]
    pub metrics_bin_ms: f64,
    pub links: Vec<LinkCfg>,
    pub flows: Vec<FlowCfg>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("scenario `{scenario}`: field `{field}`: {problem}")]
    Invalid {
        scenario: String,
        field: String,
        problem: String,
    },
    #[error("override `{0}`: {1}")]
    Override(String, String),
}

impl Scenario {
    pub fn from_toml(s: &str) -> Result<Scenario, ScenarioError> {
        let sc: Scenario = toml::from_str(s).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_json(s: &str) -> Result<Scenario, ScenarioError> {
        let sc: Scenario =
            serde_json::from_str(s).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    /// Parses by file extension: `.json` as JSON, anything else as TOML.
    pub fn from_path(path: &std::path::Path) -> Result<Scenario, ScenarioError> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::Parse(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            Scenario::from_json(&body)
        } else {
            Scenario::from_toml(&body)
        }
    }

    pub fn cc_kind(flow: &FlowCfg) -> Option<CcKind> {
        if flow.cc == "paced" {
            let rate = flow.rate_mbps?;
            return Some(CcKind::Paced {
                rate_bps: (rate * 1e6).round() as u64,
                jitter: flow.rate_jitter.unwrap_or(0.0),
            });
        }
        CcKind::parse(&flow.cc)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let err = |field: &str, problem: String| {
            Err(ScenarioError::Invalid {
                scenario: self.name.clone(),
                field: field.to_string(),
                problem,
            })
        };
        if self.duration_s <= 0.0 {
            return err("duration_s", "must be positive".into());
        }
        if self.warmup_s < 0.0 || self.warmup_s >= self.duration_s {
            return err("warmup_s", "must satisfy 0 <= warmup_s < duration_s".into());
        }
        if self.metrics_bin_ms <= 0.0 {
            return err("metrics_bin_ms", "must be positive".into());
        }
        if self.links.is_empty() {
            return err("links", "at least one link required".into());
        }
        for (i, l) in self.links.iter().enumerate() {
            let fld = |f: &str| format!("links[{i}].{f}");
            if l.id.is_empty() {
                return err(&fld("id"), "must not be empty".into());
            }
            if self.links.iter().filter(|o| o.id == l.id).count() > 1 {
                return err(&fld("id"), format!("duplicate link id `{}`", l.id));
            }
            if !(l.bandwidth_mbps > 0.0) {
                return err(&fld("bandwidth_mbps"), "must be positive".into());
            }
            if l.delay_ms < 0.0 {
                return err(&fld("delay_ms"), "must be non-negative".into());
            }
            if !(0.0..=1.0).contains(&l.loss) {
                return err(&fld("loss"), format!("{} outside [0, 1]", l.loss));
            }
            if let Some(q) = l.queue_bdp {
                if !(q > 0.0) {
                    return err(&fld("queue_bdp"), "must be positive".into());
                }
            }
            if let Some(q) = l.queue_bytes {
                if q < 1500 {
                    return err(&fld("queue_bytes"), "must hold one full packet".into());
                }
            }
            if !(0.0..1.0).contains(&l.delay_jitter) {
                return err(&fld("delay_jitter"), "must be in [0, 1)".into());
            }
            for (j, ch) in l.schedule.iter().enumerate() {
                let fld = |f: &str| format!("links[{i}].schedule[{j}].{f}");
                if ch.at_s < 0.0 {
                    return err(&fld("at_s"), "must be non-negative".into());
                }
                if let Some(u) = ch.until_s {
                    if u <= ch.at_s {
                        return err(&fld("until_s"), "must be after at_s".into());
                    }
                }
                if let Some(p) = ch.loss {
                    if !(0.0..=1.0).contains(&p) {
                        return err(&fld("loss"), format!("{p} outside [0, 1]"));
                    }
                }
                if let Some(b) = ch.bandwidth_mbps {
                    if !(b > 0.0) {
                        return err(&fld("bandwidth_mbps"), "must be positive".into());
                    }
                }
                if let Some(d) = ch.delay_ms {
                    if d < 0.0 {
                        return err(&fld("delay_ms"), "must be non-negative".into());
                    }
                }
            }
        }
        if self.flows.is_empty() {
            return err("flows", "at least one flow required".into());
        }
        for (i, f) in self.flows.iter().enumerate() {
            let fld = |x: &str| format!("flows[{i}].{x}");
            if f.id.is_empty() {
                return err(&fld("id"), "must not be empty".into());
            }
            if self.flows.iter().filter(|o| o.id == f.id).count() > 1 {
                return err(&fld("id"), format!("duplicate flow id `{}`", f.id));
            }
            match f.kind.as_str() {
                "tcp" => {
                    if f.paths.len() != 1 {
                        return err(&fld("paths"), "tcp flow takes exactly one path".into());
                    }
                }
                "mptcp" => {
                    if f.paths.is_empty() {
                        return err(&fld("paths"), "mptcp flow needs at least one path".into());
                    }
                }
                other => {
                    return err(&fld("kind"), format!("unknown kind `{other}`"));
                }
            }
            if f.cc == "paced" {
                match f.rate_mbps {
                    Some(r) if r > 0.0 => {}
                    _ => {
                        return err(&fld("rate_mbps"), "paced cc needs a positive rate".into());
                    }
                }
            } else if CcKind::parse(&f.cc).is_none() {
                return err(&fld("cc"), format!("unknown congestion control `{}`", f.cc));
            }
            if Policy::parse(&f.scheduler).is_none() {
                return err(&fld("scheduler"), format!("unknown scheduler `{}`", f.scheduler));
            }
            if let Some(j) = f.rate_jitter {
                if !(0.0..1.0).contains(&j) {
                    return err(&fld("rate_jitter"), "must be in [0, 1)".into());
                }
            }
            for (p, path) in f.paths.iter().enumerate() {
                if path.is_empty() {
                    return err(&format!("flows[{i}].paths[{p}]"), "empty route".into());
                }
                for hop in path {
                    if !self.links.iter().any(|l| &l.id == hop) {
                        return err(
                            &format!("flows[{i}].paths[{p}]"),
                            format!("unknown link `{hop}`"),
                        );
                    }
                }
            }
            if f.start_s < 0.0 || f.start_s >= self.duration_s {
                return err(&fld("start_s"), "must lie inside the run".into());
            }
            if let Some(stop) = f.stop_s {
                if stop <= f.start_s {
                    return err(&fld("stop_s"), "must be after start_s".into());
                }
            }
            if let Some(mss) = f.mss {
                if mss < 100 || mss > 9000 {
                    return err(&fld("mss"), "must be in [100, 9000]".into());
                }
            }
        }
        Ok(())
    }

    /// Applies dotted-path overrides on the serialized form and re-validates.
    pub fn with_overrides(&self, sets: &[(String, String)]) -> Result<Scenario, ScenarioError> {
        let mut value = serde_json::to_value(self).expect("scenario serializes");
        for (path, raw) in sets {
            apply_override(&mut value, path, raw)?;
        }
        let sc: Scenario = serde_json::from_value(value)
            .map_err(|e| ScenarioError::Parse(format!("after overrides: {e}")))?;
        sc.validate()?;
        Ok(sc)
    }
}

fn parse_scalar(raw: &str) -> serde_json::Value {
    if let Ok(b) = raw.parse::<bool>() {
        return serde_json::Value::Bool(b);
    }
    if let Ok(i) = raw.parse::<i64>() {
        return serde_json::Value::from(i);
    }
    if let Ok(f) = raw.parse::<f64>() {
        return serde_json::Value::from(f);
    }
    serde_json::Value::String(raw.to_string())
}

/// Walks `path` segments (map key, array index, or array element id) and
/// replaces the target with the parsed scalar.
fn apply_override(
    root: &mut serde_json::Value,
    path: &str,
    raw: &str,
) -> Result<(), ScenarioError> {
    let segments: Vec<&str> = path.split('.').collect();
    let mut cur = root;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        let err = |m: String| ScenarioError::Override(path.to_string(), m);
        match cur {
            serde_json::Value::Array(arr) => {
                let idx = if let Ok(n) = seg.parse::<usize>() {
                    n
                } else {
                    arr.iter()
                        .position(|v| v.get("id").and_then(|x| x.as_str()) == Some(*seg))
                        .ok_or_else(|| err(format!("no element with id `{seg}`")))?
                };
                cur = arr
                    .get_mut(idx)
                    .ok_or_else(|| err(format!("index {idx} out of bounds")))?;
                if last {
                    return Err(err("path ends on an array element, not a field".into()));
                }
            }
            serde_json::Value::Object(map) => {
                if last {
                    map.insert(seg.to_string(), parse_scalar(raw));
                    return Ok(());
                }
                cur = map
                    .get_mut(*seg)
                    .ok_or_else(|| err(format!("unknown field `{seg}`")))?;
            }
            _ => return Err(err(format!("cannot descend into scalar at `{seg}`"))),
        }
    }
    Ok(())
}
