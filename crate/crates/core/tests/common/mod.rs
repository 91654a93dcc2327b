#![allow(dead_code)]

use std::path::PathBuf;

use qbmaser::config::{ResolvedRun, RunConfig};

pub fn preset_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../presets").join(format!("{name}.json"))
}

pub fn default_config(overrides: &[&str]) -> RunConfig {
    let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    RunConfig::load(&preset_path("default"), &o).expect("default preset loads")
}

pub fn default_run(overrides: &[&str]) -> ResolvedRun {
    default_config(overrides).resolve().expect("default preset resolves")
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}
