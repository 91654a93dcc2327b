//! Run configuration files and `key=value` overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::ConfigError;
use crate::integrator::SolverConfig;
use crate::model::MeanFieldState;
use crate::params::{validate_parameters, ParameterFile, PhysicalParameters};
use crate::protocol::{ScheduleConfig, ScheduleFile};
use crate::simulation::Kappa0Calibration;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub trajectory_csv: bool,
    pub phase_log: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { trajectory_csv: true, phase_log: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    /// Photons placed in the cavity at t = 0.
    pub seed_photons: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: ParameterFile,
    pub schedule: ScheduleFile,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    /// Record of how `params.kappa0_over_2pi_hz` was obtained.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Kappa0Calibration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Validated, unit-converted inputs of one simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedRun {
    pub params: PhysicalParameters,
    pub schedule: ScheduleConfig,
    pub solver: SolverConfig,
    pub initial: MeanFieldState,
}

impl RunConfig {
    /// Parses a run configuration. A run manifest is accepted too: its
    /// embedded `config` object is used.
    pub fn from_value(value: Value) -> Result<Self, ConfigError> {
        serde_json::from_value(unwrap_manifest(value))
            .map_err(|source| ConfigError::Parse { path: "config".into(), source })
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let label = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(label.clone(), e))?;
        Self::from_str_with_overrides(&text, &label, overrides)
    }

    pub fn from_str_with_overrides(text: &str, label: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let value: Value =
            serde_json::from_str(text).map_err(|source| ConfigError::Parse { path: label.into(), source })?;
        let mut value = unwrap_manifest(value);
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        serde_json::from_value(value).map_err(|source| ConfigError::Parse { path: label.into(), source })
    }

    pub fn resolve(&self) -> Result<ResolvedRun, ConfigError> {
        let mut issues = Vec::new();
        let params = validate_parameters(&self.params);
        if let Err(ConfigError::Invalid(v)) = &params {
            issues.extend(v.iter().cloned());
        }
        if let Err(ConfigError::Invalid(v)) = self.solver.validate() {
            issues.extend(v);
        }
        let kappa_0 = params.as_ref().map(|p| p.kappa_0).unwrap_or(0.0);
        let schedule = self.schedule.resolve(kappa_0);
        if let Err(ConfigError::Invalid(v)) = &schedule {
            issues.extend(v.iter().cloned());
        }
        if !(self.initial.seed_photons >= 0.0) {
            issues.push("initial.seed_photons: must be non-negative".into());
        }
        if !issues.is_empty() {
            return Err(ConfigError::Invalid(issues));
        }
        let mut initial = MeanFieldState::ground();
        initial.n_ph = self.initial.seed_photons;
        Ok(ResolvedRun { params: params?, schedule: schedule?, solver: self.solver, initial })
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("run configuration serializes")
    }
}

fn unwrap_manifest(value: Value) -> Value {
    match value {
        Value::Object(mut m) if !m.contains_key("params") && m.contains_key("config") => {
            m.remove("config").unwrap_or(Value::Null)
        }
        other => other,
    }
}

/// Keys whose object value is a one-of choice: setting any child replaces
/// the whole object.
const ONE_OF: &[&str] = &["schedule.termination"];

/// Applies `dotted.path=value` to a JSON tree. The value is parsed as JSON
/// when possible (numbers, booleans, objects) and taken as a string
/// otherwise.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<(), ConfigError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(spec.into(), "expected key=value".into()))?;
    let path = path.trim();
    if path.is_empty() || path.split('.').any(str::is_empty) {
        return Err(ConfigError::Override(spec.into(), "empty key segment".into()));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    set_path(root, path, value).map_err(|why| ConfigError::Override(spec.into(), why))
}

/// Sets `path` inside `root`, creating intermediate objects.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), String> {
    let parts: Vec<&str> = path.split('.').collect();
    let mut node = root;
    for (depth, key) in parts.iter().enumerate() {
        let prefix = parts[..=depth].join(".");
        let map = node.as_object_mut().ok_or_else(|| format!("`{}` is not an object", parts[..depth].join(".")))?;
        if depth + 1 == parts.len() {
            map.insert((*key).to_string(), value);
            return Ok(());
        }
        let child = map.entry((*key).to_string()).or_insert_with(|| Value::Object(Default::default()));
        if ONE_OF.contains(&prefix.as_str()) || !child.is_object() {
            *child = Value::Object(Default::default());
        }
        node = child;
    }
    unreachable!("loop returns on the last segment")
}
