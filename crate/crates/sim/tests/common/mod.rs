#![allow(dead_code)]

use std::path::PathBuf;

use qosmw_sim::config::{Mode, PayloadClass, ResourceSpec, ScenarioConfig};

pub fn shipped_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/vehicular-default.json")
}

pub fn shipped() -> ScenarioConfig {
    ScenarioConfig::load(&shipped_path()).expect("shipped config is valid")
}

/// The shipped topology with small payloads and a short run, for tests
/// that need many simulations.
pub fn small(mode: Mode, class: PayloadClass) -> ScenarioConfig {
    let mut cfg = shipped();
    cfg.mode = mode;
    cfg.resources = (0..4)
        .map(|i| {
            let spec = ResourceSpec {
                size_bytes: 20_000 + 1_000 * i,
                class,
            };
            (format!("maps/tile{i}"), spec)
        })
        .collect();
    cfg.traffic.request_rate_hz = 4.0;
    cfg.traffic.duration_s = 120.0;
    cfg.traffic.warmup_s = 0.0;
    cfg.degradation.onset_s = 40.0;
    cfg.validate().unwrap();
    cfg
}
