//! Closed-form calibration of the radio bandwidth against a target
//! stage-1 baseline RTT.

use qosmw_core::message::{Message, ResourceAddress, Verb};
use qosmw_core::node::NodeRole;
use thiserror::Error;

use crate::config::{ConfigError, LinkSpec, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("UNREACHABLE_TARGET: {0}")]
    UnreachableTarget(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// A timestamp with a full 17 significant digits, so that representative
/// messages are as long as the ones the simulator produces mid-run.
const REPRESENTATIVE_T: f64 = 123.456_789_012_345_67;

/// Serialized sizes of a representative request and the mean response.
fn exchange_sizes(cfg: &ScenarioConfig) -> (usize, f64) {
    let app = cfg.node_with_role(NodeRole::Application).expect("validated");
    let gateway = cfg.node_with_role(NodeRole::Gateway).expect("validated");
    let src = ResourceAddress::new(app, ["app"]).expect("validated");
    let mut req_max = 0;
    let mut resp_sum = 0.0;
    for (path, spec) in &cfg.resources {
        let dst = ResourceAddress::new(gateway, path.split('/')).expect("validated");
        let req = Message::request(
            Verb::Retrieve,
            "req-00000000",
            src.clone(),
            dst,
            Vec::new(),
            REPRESENTATIVE_T,
        );
        let resp = Message::response_to(&req, vec![0; spec.size_bytes], REPRESENTATIVE_T);
        req_max = req_max.max(req.wire_len());
        resp_sum += resp.wire_len() as f64;
    }
    (req_max, resp_sum / cfg.resources.len() as f64)
}

/// Links of the pre-adaptation data path: application - server - gateway.
fn baseline_path(cfg: &ScenarioConfig) -> [&LinkSpec; 2] {
    let app = cfg.node_with_role(NodeRole::Application).expect("validated");
    let server = cfg.node_with_role(NodeRole::Server).expect("validated");
    let gateway = cfg.node_with_role(NodeRole::Gateway).expect("validated");
    [app, server, gateway]
        .windows(2)
        .map(|w| cfg.link(w[0], w[1]).expect("validated"))
        .collect::<Vec<_>>()
        .try_into()
        .expect("two hops")
}

/// Bits of one request/response exchange per hop.
fn exchange_bits(cfg: &ScenarioConfig) -> f64 {
    let (req, resp) = exchange_sizes(cfg);
    8.0 * (req as f64 + resp)
}

/// Analytic stage-1 baseline RTT of `cfg` as configured: per hop, two
/// latencies plus request and response serialization.
pub fn analytic_baseline_rtt(cfg: &ScenarioConfig) -> f64 {
    let bits = exchange_bits(cfg);
    let stage1 = cfg.fraction_schedule()[0].1;
    baseline_path(cfg)
        .iter()
        .map(|l| {
            let bw = if l.radio {
                l.bandwidth_bps * stage1
            } else {
                l.bandwidth_bps
            };
            2.0 * l.latency_s + bits / bw
        })
        .sum()
}

/// The same RTT written as `fixed + radio_bits / B` for a common radio
/// bandwidth `B`.
fn baseline_terms(cfg: &ScenarioConfig) -> (f64, f64) {
    let bits = exchange_bits(cfg);
    let stage1 = cfg.fraction_schedule()[0].1;
    let mut fixed = 0.0;
    let mut radio_bits = 0.0;
    for l in baseline_path(cfg) {
        fixed += 2.0 * l.latency_s;
        if l.radio {
            radio_bits += bits / stage1;
        } else {
            fixed += bits / l.bandwidth_bps;
        }
    }
    (fixed, radio_bits)
}

/// Sets every radio link to the bandwidth for which the analytic stage-1
/// baseline RTT equals `target_rtt`.
pub fn calibrate(target_rtt: f64, cfg: &ScenarioConfig) -> Result<ScenarioConfig, CalibrationError> {
    cfg.validate()?;
    let (fixed, radio_bits) = baseline_terms(cfg);
    if radio_bits == 0.0 {
        return Err(CalibrationError::UnreachableTarget(
            "the baseline path has no radio link to calibrate".into(),
        ));
    }
    let budget = target_rtt - fixed;
    if !(target_rtt.is_finite() && budget > 0.0) {
        return Err(CalibrationError::UnreachableTarget(format!(
            "target {target_rtt} s is not above the latency/wired floor of {fixed:.6} s"
        )));
    }
    let bandwidth = radio_bits / budget;
    if !bandwidth.is_finite() {
        return Err(CalibrationError::UnreachableTarget(format!(
            "target {target_rtt} s needs unbounded bandwidth"
        )));
    }
    let mut out = cfg.clone();
    for l in out.topology.links.iter_mut().filter(|l| l.radio) {
        l.bandwidth_bps = bandwidth;
    }
    out.validate()?;
    Ok(out)
}
