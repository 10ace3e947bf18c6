//! Scenario driver: fixed-rate RETRIEVE traffic from the application, the
//! autonomic manager in the loop (adaptive mode) and per-window metrics.

use std::collections::BTreeMap;
use std::sync::Arc;

use qosmw_core::manager::{AuditRecord, AutonomicManager, NodeEffector, RttSample, TopologyView, WINDOW_SECONDS};
use qosmw_core::message::{ErrorCode, Message, ResourceAddress, Verb};
use qosmw_core::node::{Counters, NodeRole, NodeRuntime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ConfigError, Mode, ScenarioConfig};
use crate::network::{Link, Network, Step};
use crate::payload::{resource_rng, synthesize};

/// Administrative action injected at a fixed simulation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ScriptAction {
    Deploy,
    Reverse,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RequestRecord {
    pub correlation_id: String,
    pub resource: String,
    pub issued_at: f64,
    pub received_at: f64,
    pub rtt: f64,
    pub error: Option<ErrorCode>,
    /// Serialized size of the response on the last radio hop it crossed.
    pub radio_response_bytes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowRecord {
    /// 1-based, counted from the end of the warm-up.
    pub index: usize,
    pub start: f64,
    pub end: f64,
    pub samples: usize,
    pub mean_rtt_s: Option<f64>,
    /// Time-weighted mean bandwidth of the server-gateway radio path.
    pub bandwidth_bps: f64,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventRecord {
    pub at: f64,
    pub kind: String,
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsLog {
    pub mode: Mode,
    pub windows: Vec<WindowRecord>,
    pub events: Vec<EventRecord>,
}

impl MetricsLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("window,mean_rtt_s,bandwidth_bps,mode\n");
        for w in &self.windows {
            let mean = w.mean_rtt_s.map(|m| format!("{m:.6}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{mean},{:.6},{}\n",
                w.index,
                w.bandwidth_bps,
                w.mode.as_str()
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: MetricsLog,
    pub audit: Vec<AuditRecord>,
    pub requests: Vec<RequestRecord>,
    pub counters: BTreeMap<String, Counters>,
}

impl RunOutput {
    pub fn audit_jsonl(&self) -> String {
        self.audit.iter().map(|r| r.to_line() + "\n").collect()
    }

    pub fn failed_requests(&self) -> usize {
        self.requests.iter().filter(|r| r.error.is_some()).count()
    }
}

const TAG_ISSUE: u64 = 0;
const TAG_TICK: u64 = 1;
const TAG_SCRIPT: u64 = 2;

/// Correlation ids are fixed-width so request sizes do not drift.
fn correlation_id(i: u64) -> String {
    format!("req-{i:08}")
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput, ConfigError> {
    run_scripted(cfg, &[])
}

/// Runs the scenario with additional administrative actions. Scripted
/// actions need the manager and therefore adaptive mode.
pub fn run_scripted(cfg: &ScenarioConfig, script: &[(f64, ScriptAction)]) -> Result<RunOutput, ConfigError> {
    cfg.validate()?;
    if !script.is_empty() && cfg.mode != Mode::Adaptive {
        return Err(ConfigError("scripted actions need adaptive mode".into()));
    }
    Driver::new(cfg, script).run()
}

struct Driver<'a> {
    cfg: &'a ScenarioConfig,
    net: Network,
    app: String,
    server: String,
    gateway: String,
    app_address: ResourceAddress,
    paths: Vec<String>,
    traffic_rng: ChaCha8Rng,
    manager: Option<(AutonomicManager, NodeEffector)>,
    script: Vec<(f64, ScriptAction)>,
    next_script: usize,
    issued: BTreeMap<usize, (String, String, f64)>,
    requests: Vec<RequestRecord>,
    events: Vec<EventRecord>,
    reports_seen: usize,
}

impl<'a> Driver<'a> {
    fn new(cfg: &'a ScenarioConfig, script: &[(f64, ScriptAction)]) -> Self {
        let role = |r| cfg.node_with_role(r).expect("validated").to_string();
        let (app, server, gateway) = (
            role(NodeRole::Application),
            role(NodeRole::Server),
            role(NodeRole::Gateway),
        );

        let mut net = Network::new();
        let mut runtimes = Vec::new();
        for n in &cfg.topology.nodes {
            let rt = Arc::new(NodeRuntime::new(n.id.clone(), n.role));
            net.add_node(rt.clone());
            runtimes.push(rt);
        }
        let gw = net.node(&gateway).expect("validated").clone();
        for (index, (path, spec)) in cfg.resources.iter().enumerate() {
            let body = synthesize(spec.class, spec.size_bytes, &mut resource_rng(cfg.seed, index as u64));
            gw.put_resource(path.clone(), body);
        }
        for l in &cfg.topology.links {
            let link = Link {
                profile: cfg.link_profile(l),
                radio: l.radio,
            };
            net.add_link(&l.a, &l.b, link);
        }

        let manager = (cfg.mode == Mode::Adaptive).then(|| {
            let view = TopologyView {
                nodes: cfg.topology.nodes.iter().map(|n| (n.id.clone(), n.role)).collect(),
                resources: [(gateway.clone(), gw.resource_paths())].into(),
            };
            (
                AutonomicManager::new(cfg.knowledge_base.clone(), view),
                NodeEffector::new(runtimes),
            )
        });

        let mut script = script.to_vec();
        script.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut traffic_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        traffic_rng.set_stream(0);

        Self {
            app_address: ResourceAddress::new(app.clone(), ["app"]).expect("validated id"),
            cfg,
            net,
            app,
            server,
            gateway,
            paths: cfg.resources.keys().cloned().collect(),
            traffic_rng,
            manager,
            script,
            next_script: 0,
            issued: BTreeMap::new(),
            requests: Vec::new(),
            events: Vec::new(),
            reports_seen: 0,
        }
    }

    fn issue_time(&self, i: u64) -> f64 {
        i as f64 / self.cfg.traffic.request_rate_hz
    }

    fn run(mut self) -> Result<RunOutput, ConfigError> {
        let duration = self.cfg.traffic.duration_s;
        self.net.schedule_timer(0.0, TAG_ISSUE);
        let mut issue_index: u64 = 0;
        if self.manager.is_some() {
            let mut k = 1u64;
            while k as f64 * WINDOW_SECONDS <= duration {
                self.net.schedule_timer(k as f64 * WINDOW_SECONDS, TAG_TICK);
                k += 1;
            }
        }
        for &(at, _) in &self.script {
            self.net.schedule_timer(at, TAG_SCRIPT);
        }

        while let Some(step) = self.net.step() {
            let now = self.net.now();
            match step {
                Step::Timer { tag: TAG_ISSUE, at } => {
                    self.issue(issue_index, at);
                    issue_index += 1;
                    let next = self.issue_time(issue_index);
                    if next < duration {
                        self.net.schedule_timer(next, TAG_ISSUE);
                    }
                }
                Step::Timer { tag: TAG_TICK, at } => {
                    if let Some((m, eff)) = self.manager.as_mut() {
                        m.tick(at, eff);
                    }
                }
                Step::Timer { tag: TAG_SCRIPT, at } => {
                    let (_, action) = self.script[self.next_script];
                    self.next_script += 1;
                    self.scripted(action, at);
                }
                Step::Timer { .. } => unreachable!("unknown timer"),
                Step::Hop { .. } => {}
                Step::Completed {
                    at,
                    flow,
                    response,
                    radio_response_bytes,
                } => self.complete(flow, at, &response, radio_response_bytes),
            }
            if let Some((m, eff)) = self.manager.as_mut() {
                if m.is_executing() {
                    m.progress(now, eff);
                }
            }
            self.collect_reports(now);
        }

        let end = self.net.now();
        if let Some((m, eff)) = self.manager.as_mut() {
            m.progress(end, eff);
        }
        self.collect_reports(end);
        Ok(self.finish())
    }

    fn issue(&mut self, i: u64, at: f64) {
        let path = self.paths[self.traffic_rng.random_range(0..self.paths.len())].clone();
        let cid = correlation_id(i);
        let dst = ResourceAddress::new(self.gateway.clone(), path.split('/')).expect("validated path");
        let msg = Message::request(
            Verb::Retrieve,
            cid.clone(),
            self.app_address.clone(),
            dst,
            Vec::new(),
            at,
        );
        let (app, server) = (self.app.clone(), self.server.clone());
        let flow = self.net.send(at, &app, &server, msg);
        self.issued.insert(flow, (cid, path, at));
    }

    fn complete(&mut self, flow: usize, at: f64, response: &Message, radio_response_bytes: Option<usize>) {
        let (cid, resource, issued_at) = self.issued.remove(&flow).expect("one response per request");
        assert_eq!(response.correlation_id, cid);
        let rtt = at - issued_at;
        if let Some((m, eff)) = self.manager.as_mut() {
            m.observe(
                RttSample {
                    correlation_id: cid.clone(),
                    rtt,
                    at,
                },
                eff,
            );
        }
        self.requests.push(RequestRecord {
            correlation_id: cid,
            resource,
            issued_at,
            received_at: at,
            rtt,
            error: response.error_code(),
            radio_response_bytes,
        });
    }

    fn scripted(&mut self, action: ScriptAction, at: f64) {
        let Some((m, eff)) = self.manager.as_mut() else {
            return;
        };
        let effective = match action {
            ScriptAction::Deploy if !m.is_deployed() && !m.is_executing() => m.force_deploy(at, eff).is_ok(),
            ScriptAction::Reverse if m.is_deployed() => {
                m.force_reverse(at, eff);
                true
            }
            _ => false,
        };
        self.events.push(EventRecord {
            at,
            kind: "script".into(),
            detail: serde_json::json!({ "action": action, "effective": effective }),
        });
    }

    fn collect_reports(&mut self, now: f64) {
        let Some((m, _)) = self.manager.as_ref() else {
            return;
        };
        for report in &m.reports()[self.reports_seen..] {
            self.events.push(EventRecord {
                at: now,
                kind: "plan_execution".into(),
                detail: serde_json::to_value(report).expect("serializable"),
            });
        }
        self.reports_seen = m.reports().len();
    }

    fn finish(mut self) -> RunOutput {
        assert!(self.issued.is_empty(), "every request is answered");
        let t = &self.cfg.traffic;
        let count = ((t.duration_s - t.warmup_s) / WINDOW_SECONDS + 1e-9).floor() as usize;
        let radio = self.cfg.link(&self.server, &self.gateway).expect("validated");
        let profile = self.cfg.link_profile(radio);
        let mut windows: Vec<WindowRecord> = (0..count)
            .map(|k| {
                let start = t.warmup_s + k as f64 * WINDOW_SECONDS;
                let end = start + WINDOW_SECONDS;
                WindowRecord {
                    index: k + 1,
                    start,
                    end,
                    samples: 0,
                    mean_rtt_s: None,
                    bandwidth_bps: profile.mean_bandwidth(start, end),
                    mode: self.cfg.mode,
                }
            })
            .collect();
        let mut sums = vec![0.0; count];
        self.requests.sort_by(|a, b| a.correlation_id.cmp(&b.correlation_id));
        for r in &self.requests {
            if r.error.is_some() || r.issued_at < t.warmup_s {
                continue;
            }
            let k = ((r.issued_at - t.warmup_s) / WINDOW_SECONDS).floor() as usize;
            if k < count {
                sums[k] += r.rtt;
                windows[k].samples += 1;
            }
        }
        for (w, sum) in windows.iter_mut().zip(sums) {
            if w.samples > 0 {
                w.mean_rtt_s = Some(sum / w.samples as f64);
            }
        }
        let counters = self.net.nodes().map(|n| (n.id().to_string(), n.counters())).collect();
        let audit = self.manager.map(|(m, _)| m.audit().to_vec()).unwrap_or_default();
        RunOutput {
            metrics: MetricsLog {
                mode: self.cfg.mode,
                windows,
                events: self.events,
            },
            audit,
            requests: self.requests,
            counters,
        }
    }
}
