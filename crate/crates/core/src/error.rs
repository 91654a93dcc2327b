use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("bad override `{0}`: {1}")]
    Override(String, String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("undercoupled below internal loss: kappa = {kappa} < kappa_0 = {kappa_0}")]
    Undercoupled { kappa: f64, kappa_0: f64 },
    #[error("internal loss must be positive (kappa_0 = {0})")]
    NonPositiveInternalLoss(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("threshold event during {phase} phase (threshold is armed only inside tau_2)")]
    ThresholdOutsideWindow { phase: &'static str },
    #[error("threshold {threshold:e} not reached within {limit:e} s of cycle {cycle}")]
    ThresholdNotReached { threshold: f64, limit: f64, cycle: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    #[error("stiffness failure: step size {h:e} s fell below 1e-16 s at t = {t:e} s")]
    StepUnderflow { t: f64, h: f64 },
    #[error("non-finite state at t = {t:e} s")]
    NonFinite { t: f64 },
    #[error("component {component} = {value:e} went negative beyond tolerance at t = {t:e} s")]
    NegativeExcursion { t: f64, component: &'static str, value: f64 },
    #[error("fixed step {dt:e} s does not resolve the fastest rate (need dt <= {limit:e} s)")]
    StepTooLarge { dt: f64, limit: f64 },
    #[error("battery never peaked within {0:e} s of charging; give t_charge_s explicitly")]
    ChargeNotFound(f64),
    #[error("photon number never peaked within {0:e} s")]
    PeakNotFound(f64),
}

/// Failure of a complete simulation, tagged with where it happened.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("cycle {cycle}: {source}")]
    Integration {
        cycle: usize,
        #[source]
        source: IntegrationError,
    },
    #[error("cycle {cycle}: {source}")]
    Protocol {
        cycle: usize,
        #[source]
        source: ProtocolError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("trajectory has an empty phase log")]
    EmptyPhaseLog,
    #[error("trajectory contains no modulation cycle")]
    NoCycles,
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}
