//! Dissipation schedule: the κ(t) generator and its phase state machine.
//!
//! A run is `charging → (delay → τ₂)ⁿ → delay`, where the modulation window
//! τ₂ is `descending → low → ascending` (just `low` for the instantaneous
//! scheme). In threshold mode the window is cut short as soon as the photon
//! number reaches the preset count; in fixed mode it lasts exactly `tau_2`.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, ProtocolError};
use crate::model::MeanFieldState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Instantaneous,
    Linear,
    Sinusoidal,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Instantaneous, Scheme::Linear, Scheme::Sinusoidal];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Instantaneous => "instantaneous",
            Scheme::Linear => "linear",
            Scheme::Sinusoidal => "sinusoidal",
        }
    }

    /// Fraction of the κ_high → κ_low swing completed after a fraction `x`
    /// of the transition time.
    fn transition_shape(self, x: f64) -> f64 {
        match self {
            Scheme::Instantaneous => 1.0,
            Scheme::Linear => x,
            Scheme::Sinusoidal => (FRAC_PI_2 * x).sin().powi(2),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown scheme `{s}` (expected instantaneous, linear or sinusoidal)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Termination {
    /// Modulation window ends when the photon number reaches this count.
    Threshold(f64),
    /// Modulation window lasts exactly this long, s.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionKeyword {
    /// `2/κ_low` with κ_low angular.
    Auto,
    /// `2/(κ_low/2π)`.
    AutoOrdinary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TransitionTime {
    Seconds(f64),
    Keyword(TransitionKeyword),
}

impl Default for TransitionTime {
    fn default() -> Self {
        TransitionTime::Keyword(TransitionKeyword::Auto)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChargeKeyword {
    Auto,
}

/// Length of the pre-modulation charging interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChargeTime {
    Seconds(f64),
    /// Charge until the upper battery level peaks (maximum stored energy).
    Keyword(ChargeKeyword),
}

impl Default for ChargeTime {
    fn default() -> Self {
        ChargeTime::Keyword(ChargeKeyword::Auto)
    }
}

fn default_max_phase() -> f64 {
    1e-4
}

/// Schedule section of a run configuration (κ values as κ/2π in Hz).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleFile {
    pub scheme: Scheme,
    pub kappa_high_over_2pi_hz: f64,
    pub kappa_low_over_2pi_hz: f64,
    pub tau_1_s: f64,
    #[serde(default)]
    pub tau_down_s: TransitionTime,
    /// `"auto"` mirrors `tau_down_s`.
    #[serde(default)]
    pub tau_up_s: TransitionTime,
    pub termination: Termination,
    pub n_cycles: usize,
    #[serde(default)]
    pub t_charge_s: ChargeTime,
    /// Upper bound on any single phase; guards threshold mode against a
    /// threshold that is never reached.
    #[serde(default = "default_max_phase")]
    pub max_phase_s: f64,
}

/// Resolved schedule in angular units and seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub scheme: Scheme,
    pub kappa_high: f64,
    pub kappa_low: f64,
    pub tau_1: f64,
    pub tau_down: f64,
    pub tau_up: f64,
    pub termination: Termination,
    pub n_cycles: usize,
    pub t_charge: ChargeTime,
    pub max_phase: f64,
}

impl ScheduleFile {
    /// Converts to angular units and checks the invariants against the
    /// internal loss `kappa_0` (rad/s).
    pub fn resolve(&self, kappa_0: f64) -> Result<ScheduleConfig, ConfigError> {
        let mut issues = Vec::new();
        let kappa_high = TAU * self.kappa_high_over_2pi_hz;
        let kappa_low = TAU * self.kappa_low_over_2pi_hz;
        if !(kappa_high > kappa_low) {
            issues.push("schedule.kappa_high_over_2pi_hz: must exceed kappa_low_over_2pi_hz".to_string());
        }
        if !(kappa_low > kappa_0) {
            issues.push(format!(
                "schedule.kappa_low_over_2pi_hz: kappa_0 >= kappa_low ({:e} >= {:e} Hz) makes output power non-positive in the low phase",
                kappa_0 / TAU,
                self.kappa_low_over_2pi_hz
            ));
        }
        if !(self.tau_1_s.is_finite() && self.tau_1_s >= 0.0) {
            issues.push(format!("schedule.tau_1_s: must be non-negative ({})", self.tau_1_s));
        }
        match self.termination {
            Termination::Threshold(n) if !(n.is_finite() && n > 0.0) => {
                issues.push(format!("schedule.termination.threshold: must be positive ({n})"))
            }
            Termination::Fixed(t) if !(t.is_finite() && t > 0.0) => {
                issues.push(format!("schedule.termination.fixed: must be positive ({t})"))
            }
            _ => {}
        }
        if let ChargeTime::Seconds(t) = self.t_charge_s {
            if !(t.is_finite() && t >= 0.0) {
                issues.push(format!("schedule.t_charge_s: must be non-negative ({t})"));
            }
        }
        if !(self.max_phase_s > 0.0) {
            issues.push("schedule.max_phase_s: must be positive".to_string());
        }

        let transition = |spec: TransitionTime, key: &str, issues: &mut Vec<String>| match spec {
            TransitionTime::Seconds(t) => {
                if !(t.is_finite() && t > 0.0) {
                    issues.push(format!("schedule.{key}: must be positive ({t})"));
                }
                t
            }
            TransitionTime::Keyword(TransitionKeyword::Auto) => 2.0 / kappa_low,
            TransitionTime::Keyword(TransitionKeyword::AutoOrdinary) => 2.0 / self.kappa_low_over_2pi_hz,
        };
        let (tau_down, tau_up) = if self.scheme == Scheme::Instantaneous {
            (0.0, 0.0)
        } else {
            let down = transition(self.tau_down_s, "tau_down_s", &mut issues);
            let up = match self.tau_up_s {
                TransitionTime::Keyword(TransitionKeyword::Auto) => down,
                other => transition(other, "tau_up_s", &mut issues),
            };
            (down, up)
        };

        if !issues.is_empty() {
            return Err(ConfigError::Invalid(issues));
        }
        Ok(ScheduleConfig {
            scheme: self.scheme,
            kappa_high,
            kappa_low,
            tau_1: self.tau_1_s,
            tau_down,
            tau_up,
            termination: self.termination,
            n_cycles: self.n_cycles,
            t_charge: self.t_charge_s,
            max_phase: self.max_phase_s,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Charging,
    Delay,
    Descending,
    Low,
    Ascending,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Charging => "charging",
            Phase::Delay => "delay",
            Phase::Descending => "descending",
            Phase::Low => "low",
            Phase::Ascending => "ascending",
        }
    }

    /// Whether the phase belongs to the modulation window τ₂.
    pub fn in_modulation(self) -> bool {
        matches!(self, Phase::Descending | Phase::Low | Phase::Ascending)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub phase: Phase,
    pub phase_start: f64,
    pub cycle_index: usize,
    /// κ at the moment a threshold crossing cut the descent short.
    pub kappa_at_interrupt: Option<f64>,
    /// Fraction of the descent reached before ascending; the ascent retraces
    /// the descent curve from here back to zero.
    pub ascent_from: f64,
}

impl PhaseState {
    pub fn charging() -> Self {
        Self {
            phase: Phase::Charging,
            phase_start: 0.0,
            cycle_index: 0,
            kappa_at_interrupt: None,
            ascent_from: 1.0,
        }
    }

    fn enter(&self, phase: Phase, t: f64) -> Self {
        Self {
            phase,
            phase_start: t,
            cycle_index: self.cycle_index,
            kappa_at_interrupt: None,
            ascent_from: 1.0,
        }
    }

    fn next_cycle(&self, t: f64) -> Self {
        let mut next = self.enter(Phase::Delay, t);
        next.cycle_index += 1;
        next
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseEvent {
    Elapsed { t: f64 },
    ThresholdCrossed { t: f64, kappa: f64 },
}

/// How long the current phase runs if nothing interrupts it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseLength {
    Exactly(f64),
    /// Open-ended until the threshold fires, capped at `limit`.
    UntilThreshold { limit: f64 },
}

impl ScheduleConfig {
    /// κ after a fraction `s` of the high → low swing; exact at both ends.
    fn blend(&self, s: f64) -> f64 {
        self.kappa_high * (1.0 - s) + self.kappa_low * s
    }

    /// Descent length actually used in fixed mode when τ₂ is shorter than
    /// the two transitions together: descend for the τ_down share of τ₂.
    fn fixed_descent(&self, tau_2: f64) -> f64 {
        let transitions = self.tau_down + self.tau_up;
        if tau_2 < transitions {
            tau_2 * self.tau_down / transitions
        } else {
            self.tau_down
        }
    }

    pub fn threshold(&self) -> Option<f64> {
        match self.termination {
            Termination::Threshold(n) => Some(n),
            Termination::Fixed(_) => None,
        }
    }
}

/// Total cavity loss at time `t` inside the current phase.
pub fn kappa_at(state: &PhaseState, t: f64, cfg: &ScheduleConfig) -> f64 {
    match state.phase {
        Phase::Charging | Phase::Delay => cfg.kappa_high,
        Phase::Low => cfg.kappa_low,
        Phase::Descending => {
            let x = ((t - state.phase_start) / cfg.tau_down).clamp(0.0, 1.0);
            cfg.blend(cfg.scheme.transition_shape(x))
        }
        Phase::Ascending => {
            let x = (state.ascent_from - (t - state.phase_start) / cfg.tau_up).clamp(0.0, 1.0);
            cfg.blend(cfg.scheme.transition_shape(x))
        }
    }
}

/// Nominal length of the current phase. `t_charge` is the resolved charging
/// interval.
pub fn phase_length(state: &PhaseState, cfg: &ScheduleConfig, t_charge: f64) -> PhaseLength {
    let exact = PhaseLength::Exactly;
    match (state.phase, cfg.termination) {
        (Phase::Charging, _) => exact(t_charge),
        (Phase::Delay, _) => exact(cfg.tau_1),
        (Phase::Descending, Termination::Fixed(tau_2)) => exact(cfg.fixed_descent(tau_2)),
        (Phase::Descending, Termination::Threshold(_)) => exact(cfg.tau_down),
        (Phase::Low, Termination::Fixed(tau_2)) => exact((tau_2 - cfg.tau_down - cfg.tau_up).max(0.0)),
        (Phase::Low, Termination::Threshold(_)) => PhaseLength::UntilThreshold { limit: cfg.max_phase },
        (Phase::Ascending, _) => exact(state.ascent_from * cfg.tau_up),
    }
}

/// Whether a threshold crossing should be watched for in this phase.
pub fn threshold_armed(state: &PhaseState, cfg: &ScheduleConfig) -> bool {
    cfg.threshold().is_some() && matches!(state.phase, Phase::Descending | Phase::Low)
}

/// Event function for threshold localization: `n_ph − N_thr`.
pub fn threshold_gap(state: &MeanFieldState, cfg: &ScheduleConfig) -> Option<f64> {
    cfg.threshold().map(|n_thr| state.n_ph - n_thr)
}

/// One transition of the phase state machine.
pub fn advance(
    state: &PhaseState,
    event: PhaseEvent,
    cfg: &ScheduleConfig,
) -> Result<PhaseState, ProtocolError> {
    let instantaneous = cfg.scheme == Scheme::Instantaneous;
    match event {
        PhaseEvent::Elapsed { t } => Ok(match state.phase {
            Phase::Charging => state.enter(Phase::Delay, t),
            Phase::Delay if instantaneous => state.enter(Phase::Low, t),
            Phase::Delay => state.enter(Phase::Descending, t),
            Phase::Descending => match cfg.termination {
                Termination::Fixed(tau_2) if tau_2 <= cfg.tau_down + cfg.tau_up => {
                    let mut next = state.enter(Phase::Ascending, t);
                    next.ascent_from = cfg.fixed_descent(tau_2) / cfg.tau_down;
                    next
                }
                _ => state.enter(Phase::Low, t),
            },
            Phase::Low if instantaneous => state.next_cycle(t),
            Phase::Low => state.enter(Phase::Ascending, t),
            Phase::Ascending => state.next_cycle(t),
        }),
        PhaseEvent::ThresholdCrossed { t, kappa } => {
            if cfg.threshold().is_none() {
                return Ok(*state);
            }
            match state.phase {
                Phase::Descending => {
                    let mut next = state.enter(Phase::Ascending, t);
                    next.ascent_from = ((t - state.phase_start) / cfg.tau_down).clamp(0.0, 1.0);
                    next.kappa_at_interrupt = Some(kappa);
                    Ok(next)
                }
                Phase::Low if instantaneous => Ok(state.next_cycle(t)),
                Phase::Low => Ok(state.enter(Phase::Ascending, t)),
                other => Err(ProtocolError::ThresholdOutsideWindow { phase: other.name() }),
            }
        }
    }
}
