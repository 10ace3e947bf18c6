//! Scenario configuration document and its validation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use qosmw_core::manager::KnowledgeBase;
use qosmw_core::message::ResourceAddress;
use qosmw_core::node::NodeRole;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::link::LinkProfile;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("CONFIG_INVALID: {0}")]
pub struct ConfigError(pub String);

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Baseline,
    Adaptive,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Adaptive => "adaptive",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "adaptive" => Ok(Mode::Adaptive),
            other => Err(format!("unknown mode {other:?} (expected baseline or adaptive)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PayloadClass {
    Repetitive,
    Mixed,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub role: NodeRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub a: String,
    pub b: String,
    pub latency_s: f64,
    /// Bandwidth before degradation, bits per second.
    pub bandwidth_bps: f64,
    /// Radio links cross the base station and follow the degradation
    /// schedule.
    #[serde(default)]
    pub radio: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceSpec {
    pub size_bytes: usize,
    pub class: PayloadClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSpec {
    pub request_rate_hz: f64,
    pub duration_s: f64,
    /// Requests issued before this time feed the manager but not the metrics.
    #[serde(default)]
    pub warmup_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Breakpoint {
    /// Offset from the onset, seconds.
    pub after_s: f64,
    /// Fraction of the undegraded radio bandwidth from this point on.
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradationSpec {
    pub onset_s: f64,
    pub breakpoints: Vec<Breakpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub topology: TopologySpec,
    /// Resources hosted by the gateway, by path.
    pub resources: BTreeMap<String, ResourceSpec>,
    pub traffic: TrafficSpec,
    pub degradation: DegradationSpec,
    #[serde(default)]
    pub knowledge_base: KnowledgeBase,
    pub mode: Mode,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn node_with_role(&self, role: NodeRole) -> Option<&str> {
        self.topology
            .nodes
            .iter()
            .find(|n| n.role == role)
            .map(|n| n.id.as_str())
    }

    pub fn link(&self, a: &str, b: &str) -> Option<&LinkSpec> {
        self.topology
            .links
            .iter()
            .find(|l| (l.a == a && l.b == b) || (l.a == b && l.b == a))
    }

    /// Radio bandwidth fraction schedule as `(time, fraction)` breakpoints.
    pub fn fraction_schedule(&self) -> Vec<(f64, f64)> {
        let d = &self.degradation;
        let mut out = vec![(0.0, 1.0)];
        for bp in &d.breakpoints {
            let t = d.onset_s + bp.after_s;
            if t <= 0.0 {
                out[0].1 = bp.fraction;
            } else {
                out.push((t, bp.fraction));
            }
        }
        out
    }

    pub fn link_profile(&self, spec: &LinkSpec) -> LinkProfile {
        if spec.radio {
            LinkProfile {
                base_latency: spec.latency_s,
                bandwidth_schedule: self
                    .fraction_schedule()
                    .into_iter()
                    .map(|(t, f)| (t, f * spec.bandwidth_bps))
                    .collect(),
            }
        } else {
            LinkProfile::constant(spec.latency_s, spec.bandwidth_bps)
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let topo = &self.topology;
        let mut ids = BTreeSet::new();
        for n in &topo.nodes {
            if ResourceAddress::new(n.id.clone(), ["x"]).is_err() {
                return invalid(format!("node id {:?} is not a valid address segment", n.id));
            }
            if !ids.insert(n.id.as_str()) {
                return invalid(format!("duplicate node id {:?}", n.id));
            }
        }
        for role in [
            NodeRole::Application,
            NodeRole::Server,
            NodeRole::Gateway,
            NodeRole::Fog,
        ] {
            let count = topo.nodes.iter().filter(|n| n.role == role).count();
            if count > 1 {
                return invalid(format!("more than one {role:?} node"));
            }
            if count == 0 && role != NodeRole::Fog {
                return invalid(format!("topology needs a {role:?} node"));
            }
        }

        let mut pairs = BTreeSet::new();
        for l in &topo.links {
            if !ids.contains(l.a.as_str()) || !ids.contains(l.b.as_str()) {
                return invalid(format!("link {}-{} references an unknown node", l.a, l.b));
            }
            if l.a == l.b {
                return invalid(format!("self link on {}", l.a));
            }
            let key = if l.a < l.b { (&l.a, &l.b) } else { (&l.b, &l.a) };
            if !pairs.insert(key) {
                return invalid(format!("duplicate link {}-{}", l.a, l.b));
            }
            self.link_profile(l)
                .validate()
                .map_err(|e| ConfigError(format!("link {}-{}: {e}", l.a, l.b)))?;
        }

        let app = self.node_with_role(NodeRole::Application).expect("checked");
        let server = self.node_with_role(NodeRole::Server).expect("checked");
        let gateway = self.node_with_role(NodeRole::Gateway).expect("checked");
        let mut required = vec![(app, server), (server, gateway)];
        if self.mode == Mode::Adaptive {
            let Some(fog) = self.node_with_role(NodeRole::Fog) else {
                return invalid("adaptive mode needs a Fog node");
            };
            required.extend([(server, fog), (fog, gateway)]);
        }
        for (a, b) in required {
            if self.link(a, b).is_none() {
                return invalid(format!("missing link {a}-{b}"));
            }
        }

        if self.resources.is_empty() {
            return invalid("no resources");
        }
        for path in self.resources.keys() {
            if ResourceAddress::new(gateway, path.split('/')).is_err() {
                return invalid(format!("resource path {path:?} is not a valid address path"));
            }
        }

        let t = &self.traffic;
        if !(t.request_rate_hz > 0.0 && t.request_rate_hz.is_finite()) {
            return invalid("traffic.request_rate_hz must be > 0");
        }
        if !(t.duration_s > 0.0 && t.duration_s.is_finite()) {
            return invalid("traffic.duration_s must be > 0");
        }
        if !(t.warmup_s >= 0.0 && t.warmup_s < t.duration_s) {
            return invalid("traffic.warmup_s must be in [0, duration_s)");
        }

        let d = &self.degradation;
        if !(d.onset_s.is_finite() && d.onset_s < t.duration_s) {
            return invalid("degradation.onset_s must be before the end of the run");
        }
        for bp in &d.breakpoints {
            if !(bp.after_s >= 0.0 && bp.after_s.is_finite()) {
                return invalid("degradation breakpoints must have after_s >= 0");
            }
            if !(bp.fraction > 0.0 && bp.fraction.is_finite()) {
                return invalid("degradation fractions must be > 0");
            }
        }
        if d.breakpoints.windows(2).any(|w| w[1].after_s <= w[0].after_s) {
            return invalid("degradation breakpoints must be strictly increasing");
        }

        self.knowledge_base
            .validate()
            .map_err(|e| ConfigError(format!("knowledge_base: {e}")))
    }
}
