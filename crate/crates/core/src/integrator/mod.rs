//! Time integration: the adaptive Dormand–Prince path used for production
//! runs and an independent fixed-step RK4 reference.

mod dopri;
mod rk4;

pub use dopri::{integrate_segment, locate_event, DenseStep, Sampling, SegmentOutput, StepControl};
pub use rk4::{rk4_reference, rk4_reference_from, rk4_step_limit};

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::model::StateVector;

/// Absolute tolerances per state block. The blocks live on wildly different
/// scales (coherence ~1e-11, correlation ~1e-18), so one number won't do.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbsTol {
    pub population: f64,
    pub photons: f64,
    pub coherence: f64,
    pub correlation: f64,
}

impl Default for AbsTol {
    fn default() -> Self {
        Self { population: 1e-13, photons: 1e-6, coherence: 1e-18, correlation: 1e-26 }
    }
}

impl AbsTol {
    pub fn vector(&self) -> StateVector {
        let p = self.population;
        [p, p, p, p, p, self.photons, self.coherence, self.coherence, self.correlation]
    }

    fn scaled(&self, f: f64) -> Self {
        Self {
            population: self.population * f,
            photons: self.photons * f,
            coherence: self.coherence * f,
            correlation: self.correlation * f,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub abs_tol: AbsTol,
    pub max_step_s: f64,
    pub initial_step_s: f64,
    /// Output spacing inside modulation windows.
    pub sample_dt_s: f64,
    /// Output spacing during charging and delay phases.
    pub coarse_sample_dt_s: f64,
    pub event_time_tol_s: f64,
    /// Also emit every accepted step endpoint.
    pub record_steps: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: AbsTol::default(),
            max_step_s: 1e-9,
            initial_step_s: 1e-13,
            sample_dt_s: 1e-10,
            coarse_sample_dt_s: 1e-9,
            event_time_tol_s: 1e-15,
            record_steps: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut issues = Vec::new();
        let mut positive = |key: &str, v: f64| {
            if !(v.is_finite() && v > 0.0) {
                issues.push(format!("solver.{key}: must be positive ({v})"));
            }
        };
        positive("rel_tol", self.rel_tol);
        positive("abs_tol.population", self.abs_tol.population);
        positive("abs_tol.photons", self.abs_tol.photons);
        positive("abs_tol.coherence", self.abs_tol.coherence);
        positive("abs_tol.correlation", self.abs_tol.correlation);
        positive("max_step_s", self.max_step_s);
        positive("initial_step_s", self.initial_step_s);
        positive("sample_dt_s", self.sample_dt_s);
        positive("coarse_sample_dt_s", self.coarse_sample_dt_s);
        positive("event_time_tol_s", self.event_time_tol_s);
        if self.event_time_tol_s > self.sample_dt_s {
            issues.push("solver.event_time_tol_s: must not exceed sample_dt_s".to_string());
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(issues))
        }
    }

    /// Same settings with every tolerance multiplied by `factor`.
    pub fn with_tolerance_scale(&self, factor: f64) -> Self {
        Self { rel_tol: self.rel_tol * factor, abs_tol: self.abs_tol.scaled(factor), ..*self }
    }

    pub(crate) fn step_control(&self, stiff_rate: f64) -> StepControl<{ crate::model::STATE_DIM }> {
        StepControl {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol.vector(),
            max_step: self.max_step_s,
            stiff_rate,
            event_time_tol: self.event_time_tol_s,
        }
    }
}
