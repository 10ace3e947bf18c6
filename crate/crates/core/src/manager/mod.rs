//! MAPE-K autonomic manager.
//!
//! The monitor turns application RTT samples into 20 s windows, the analyzer
//! raises a degradation symptom from the window history, the planner builds
//! the decompressor/compressor/redirector deployment and the executor applies
//! it through an [`Effector`]. Every phase appends to an audit log.

mod analyze;
mod execute;
mod monitor;
mod plan;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use analyze::{analyze, forecast, Symptom, SymptomKind, TREND_POINTS};
pub use execute::{execute, Applied, Effector, EffectorError, ExecutionReport, NodeEffector, PlanExecution, Progress};
pub use monitor::{MetricWindow, Monitor, RttSample, WINDOW_SECONDS};
pub use plan::{
    command_index, plan, reversal_plan, AdaptationPlan, EffectorAction, EffectorCommand, PlanError, PlanTemplate,
    TopologyView, ANF_POSITION, COMPRESSOR_ID, DECOMPRESSOR_ID, REDIRECTOR_ID,
};

fn default_templates() -> BTreeMap<SymptomKind, PlanTemplate> {
    [(SymptomKind::QosDegradationPredicted, PlanTemplate::default())].into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnowledgeBase {
    /// Tolerated application RTT, seconds.
    pub rtt_threshold_s: f64,
    /// Fraction of the threshold above which a window mean alone triggers.
    pub activation_fraction: f64,
    pub forecast_horizon_windows: u32,
    /// Compression threshold handed to the deployed ANFs.
    pub min_payload_bytes: usize,
    /// Remove the deployment once a window mean drops below this value.
    pub reversal_below_s: Option<f64>,
    #[serde(skip, default = "default_templates")]
    pub plan_templates: BTreeMap<SymptomKind, PlanTemplate>,
}

impl Default for KnowledgeBase {
    fn default() -> Self {
        Self {
            rtt_threshold_s: 1.0,
            activation_fraction: 0.8,
            forecast_horizon_windows: 2,
            min_payload_bytes: crate::anf::DEFAULT_MIN_PAYLOAD_BYTES,
            reversal_below_s: None,
            plan_templates: default_templates(),
        }
    }
}

impl KnowledgeBase {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.rtt_threshold_s > 0.0 && self.rtt_threshold_s.is_finite()) {
            return Err(format!("rtt_threshold_s must be > 0, got {}", self.rtt_threshold_s));
        }
        if !(self.activation_fraction > 0.0 && self.activation_fraction <= 1.0) {
            return Err(format!(
                "activation_fraction must be in (0, 1], got {}",
                self.activation_fraction
            ));
        }
        if self.forecast_horizon_windows == 0 {
            return Err("forecast_horizon_windows must be positive".into());
        }
        if let Some(r) = self.reversal_below_s {
            if !(r > 0.0 && r.is_finite()) {
                return Err(format!("reversal_below_s must be > 0, got {r}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Monitor,
    Analyze,
    Plan,
    Execute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub timestamp: f64,
    pub phase: Phase,
    pub payload: Value,
}

impl AuditRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("audit records are serializable")
    }
}

#[derive(Debug)]
enum Epoch {
    Idle,
    Deploying(PlanExecution),
    Deployed(AdaptationPlan),
    Reverting(PlanExecution, AdaptationPlan),
}

/// History kept for analysis; only the trend window is ever consulted.
const HISTORY_LEN: usize = 16;

/// The MAPE-K loop over one managed system.
#[derive(Debug)]
pub struct AutonomicManager {
    kb: KnowledgeBase,
    topology: TopologyView,
    monitor: Monitor,
    history: Vec<MetricWindow>,
    epoch: Epoch,
    plans_issued: u64,
    reports: Vec<ExecutionReport>,
    audit: Vec<AuditRecord>,
}

impl AutonomicManager {
    pub fn new(kb: KnowledgeBase, topology: TopologyView) -> Self {
        Self {
            kb,
            topology,
            monitor: Monitor::new(),
            history: Vec::new(),
            epoch: Epoch::Idle,
            plans_issued: 0,
            reports: Vec::new(),
            audit: Vec::new(),
        }
    }

    pub fn knowledge(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn audit(&self) -> &[AuditRecord] {
        &self.audit
    }

    pub fn reports(&self) -> &[ExecutionReport] {
        &self.reports
    }

    pub fn is_deployed(&self) -> bool {
        matches!(self.epoch, Epoch::Deployed(_))
    }

    pub fn is_executing(&self) -> bool {
        matches!(self.epoch, Epoch::Deploying(_) | Epoch::Reverting(..))
    }

    /// Sensor input. Windows that close because of this sample are analysed
    /// at the next [`AutonomicManager::tick`].
    pub fn observe(&mut self, sample: RttSample, effector: &mut dyn Effector) {
        let at = sample.at;
        for w in self.monitor.push(sample) {
            self.on_window(w, at, effector);
        }
    }

    /// Advances the clock: closes finished windows, runs analysis and
    /// planning on each, and moves any running plan forward.
    pub fn tick(&mut self, now: f64, effector: &mut dyn Effector) {
        for w in self.monitor.advance_to(now) {
            self.on_window(w, now, effector);
        }
        self.progress(now, effector);
    }

    /// Moves a running plan forward if its drain condition allows.
    pub fn progress(&mut self, now: f64, effector: &mut dyn Effector) {
        let epoch = std::mem::replace(&mut self.epoch, Epoch::Idle);
        self.epoch = match epoch {
            Epoch::Deploying(mut run) => match run.step(effector) {
                Progress::Waiting => Epoch::Deploying(run),
                Progress::Finished(report) => {
                    let ok = report.succeeded();
                    self.record_report(now, report);
                    if ok {
                        Epoch::Deployed(run.plan().clone())
                    } else {
                        Epoch::Idle
                    }
                }
            },
            Epoch::Reverting(mut run, deployed) => match run.step(effector) {
                Progress::Waiting => Epoch::Reverting(run, deployed),
                Progress::Finished(report) => {
                    let ok = report.succeeded();
                    self.record_report(now, report);
                    if ok {
                        Epoch::Idle
                    } else {
                        Epoch::Deployed(deployed)
                    }
                }
            },
            other => other,
        };
    }

    /// Starts the standard deployment without waiting for a symptom.
    pub fn force_deploy(&mut self, now: f64, effector: &mut dyn Effector) -> Result<(), PlanError> {
        if !matches!(self.epoch, Epoch::Idle) {
            return Ok(());
        }
        let symptom = Symptom {
            kind: SymptomKind::QosDegradationPredicted,
            observed_mean: f64::NAN,
            forecast_mean: f64::NAN,
            threshold: self.kb.rtt_threshold_s,
            raised_at: now,
        };
        self.start_deployment(&symptom, now)?;
        self.progress(now, effector);
        Ok(())
    }

    /// Starts removing the current deployment.
    pub fn force_reverse(&mut self, now: f64, effector: &mut dyn Effector) {
        if let Epoch::Deployed(deployed) = std::mem::replace(&mut self.epoch, Epoch::Idle) {
            self.start_reversal(deployed, now);
            self.progress(now, effector);
        } else if let Epoch::Idle = self.epoch {
            // nothing deployed
        }
    }

    /// Runs the loop over a finite sample stream, blocking on plan
    /// execution. Returns once the stream is exhausted and no plan is
    /// running.
    pub fn run_loop<I>(&mut self, samples: I, effector: &mut dyn Effector)
    where
        I: IntoIterator<Item = RttSample>,
    {
        let mut last = 0.0;
        for s in samples {
            last = s.at;
            self.tick(s.at, effector);
            self.observe(s, effector);
            self.block_until_idle(last, effector);
        }
        self.tick(last, effector);
        self.block_until_idle(last, effector);
    }

    fn block_until_idle(&mut self, now: f64, effector: &mut dyn Effector) {
        while self.is_executing() {
            self.progress(now, effector);
            if self.is_executing() {
                std::thread::yield_now();
            }
        }
    }

    fn on_window(&mut self, window: MetricWindow, now: f64, _effector: &mut dyn Effector) {
        self.push_audit(
            window.end,
            Phase::Monitor,
            json!({
                "window": window.index,
                "start": window.start,
                "end": window.end,
                "samples": window.samples.len(),
                "mean_rtt": window.mean_rtt,
            }),
        );
        self.history.push(window);
        if self.history.len() > HISTORY_LEN {
            self.history.remove(0);
        }
        let latest = self.history.last().expect("just pushed");
        let latest_mean = latest.mean_rtt;
        let index = latest.index;

        match &self.epoch {
            Epoch::Idle => {
                let symptom = analyze(&self.history, &self.kb);
                self.push_audit(now, Phase::Analyze, json!({ "window": index, "symptom": symptom }));
                if let Some(symptom) = symptom {
                    if let Err(e) = self.start_deployment(&symptom, now) {
                        self.push_audit(now, Phase::Plan, json!({ "error": e.to_string() }));
                    }
                }
            }
            Epoch::Deployed(_) => {
                let reverse = matches!(
                    (self.kb.reversal_below_s, latest_mean),
                    (Some(limit), Some(mean)) if mean < limit
                );
                self.push_audit(
                    now,
                    Phase::Analyze,
                    json!({ "window": index, "symptom": Value::Null, "epoch": "deployed", "reverse": reverse }),
                );
                if reverse {
                    if let Epoch::Deployed(deployed) = std::mem::replace(&mut self.epoch, Epoch::Idle) {
                        self.start_reversal(deployed, now);
                    }
                }
            }
            Epoch::Deploying(_) | Epoch::Reverting(..) => {
                self.push_audit(
                    now,
                    Phase::Analyze,
                    json!({ "window": index, "symptom": Value::Null, "epoch": "executing" }),
                );
            }
        }
    }

    fn next_plan_id(&mut self) -> String {
        self.plans_issued += 1;
        format!("plan-{}", self.plans_issued)
    }

    fn start_deployment(&mut self, symptom: &Symptom, now: f64) -> Result<(), PlanError> {
        let id = self.next_plan_id();
        let p = plan(symptom, &self.kb, &self.topology, id)?;
        self.push_audit(now, Phase::Plan, json!({ "plan": p, "purpose": "deploy" }));
        self.epoch = Epoch::Deploying(PlanExecution::new(p));
        Ok(())
    }

    fn start_reversal(&mut self, deployed: AdaptationPlan, now: f64) {
        let id = self.next_plan_id();
        let p = reversal_plan(&deployed, id);
        self.push_audit(now, Phase::Plan, json!({ "plan": p, "purpose": "reverse" }));
        self.epoch = Epoch::Reverting(PlanExecution::new(p), deployed);
    }

    fn record_report(&mut self, now: f64, report: ExecutionReport) {
        self.push_audit(
            now,
            Phase::Execute,
            serde_json::to_value(&report).expect("report serializes"),
        );
        self.reports.push(report);
    }

    fn push_audit(&mut self, timestamp: f64, phase: Phase, payload: Value) {
        self.audit.push(AuditRecord {
            timestamp,
            phase,
            payload,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::node::{NodeRole, NodeRuntime, PluginKind};
    use std::sync::Arc;

    fn setup() -> (Vec<Arc<NodeRuntime>>, NodeEffector, TopologyView) {
        let nodes: Vec<Arc<NodeRuntime>> = [
            ("server", NodeRole::Server),
            ("fog", NodeRole::Fog),
            ("gateway", NodeRole::Gateway),
        ]
        .into_iter()
        .map(|(id, r)| Arc::new(NodeRuntime::new(id, r)))
        .collect();
        let topo = TopologyView {
            nodes: nodes.iter().map(|n| (n.id().to_string(), n.role())).collect(),
            resources: [("gateway".to_string(), ["maps/t".to_string()].into())].into(),
        };
        (nodes.clone(), NodeEffector::new(nodes), topo)
    }

    fn samples(rtt: f64, from: f64, to: f64) -> Vec<RttSample> {
        let mut out = Vec::new();
        let mut t = from;
        while t < to {
            out.push(RttSample {
                correlation_id: format!("{t}"),
                rtt,
                at: t,
            });
            t += 0.5;
        }
        out
    }

    #[test]
    fn degradation_deploys_once() {
        let (nodes, mut eff, topo) = setup();
        let mut am = AutonomicManager::new(KnowledgeBase::default(), topo);
        am.run_loop(samples(0.3, 0.0, 40.0), &mut eff);
        assert!(!am.is_deployed());
        am.run_loop(samples(0.9, 40.0, 120.0), &mut eff);
        assert!(am.is_deployed());
        assert_eq!(am.reports().len(), 1, "one plan per epoch");
        assert_eq!(
            nodes[0].snapshot().kinds(),
            vec![PluginKind::Redirector, PluginKind::Core]
        );
        let phases: Vec<Phase> = am.audit().iter().map(|r| r.phase).collect();
        assert!(phases.contains(&Phase::Plan) && phases.contains(&Phase::Execute));
    }

    #[test]
    fn failed_plan_is_retried_later() {
        let (_, mut eff, topo) = setup();
        eff.set_unreachable("fog", true);
        let mut am = AutonomicManager::new(KnowledgeBase::default(), topo);
        am.run_loop(samples(0.9, 0.0, 21.0), &mut eff);
        assert!(!am.is_deployed());
        assert!(!am.reports()[0].succeeded());
        eff.set_unreachable("fog", false);
        am.run_loop(samples(0.9, 21.0, 41.0), &mut eff);
        assert!(am.is_deployed());
    }

    #[test]
    fn reversal_when_enabled() {
        let (nodes, mut eff, topo) = setup();
        let kb = KnowledgeBase {
            reversal_below_s: Some(0.2),
            ..KnowledgeBase::default()
        };
        let mut am = AutonomicManager::new(kb, topo);
        am.run_loop(samples(0.9, 0.0, 21.0), &mut eff);
        assert!(am.is_deployed());
        am.run_loop(samples(0.1, 21.0, 61.0), &mut eff);
        assert!(!am.is_deployed());
        for n in &nodes {
            assert_eq!(n.snapshot().kinds(), vec![PluginKind::Core]);
        }
    }

    #[test]
    fn audit_lines_are_json() {
        let (_, mut eff, topo) = setup();
        let mut am = AutonomicManager::new(KnowledgeBase::default(), topo);
        am.run_loop(samples(0.9, 0.0, 21.0), &mut eff);
        for r in am.audit() {
            let v: Value = serde_json::from_str(&r.to_line()).unwrap();
            assert!(v.get("timestamp").is_some() && v.get("phase").is_some() && v.get("payload").is_some());
        }
    }

    #[test]
    fn knowledge_base_validation() {
        assert!(KnowledgeBase::default().validate().is_ok());
        let bad = KnowledgeBase {
            rtt_threshold_s: 0.0,
            ..KnowledgeBase::default()
        };
        assert!(bad.validate().is_err());
        let bad = KnowledgeBase {
            activation_fraction: 1.5,
            ..KnowledgeBase::default()
        };
        assert!(bad.validate().is_err());
        let kb: KnowledgeBase = serde_json::from_str(r#"{"activation_fraction":0.4}"#).unwrap();
        assert_eq!(kb.activation_fraction, 0.4);
        assert_eq!(kb.rtt_threshold_s, 1.0);
        assert!(!kb.plan_templates.is_empty());
    }
}
