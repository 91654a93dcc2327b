//! Physical parameters of the pentacene maser battery.
//!
//! Configuration files quote every frequency, coupling, dephasing and cavity
//! rate as `quantity / 2π` in Hz. [`validate_parameters`] converts those to
//! angular units exactly once; everything downstream works in rad/s.
//! Population transfer rates (`k_*`) and the pump coefficient are plain 1/s
//! and pass through unchanged.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Reduced Planck constant, J·s (CODATA 2018, exact).
pub const HBAR: f64 = 1.054_571_817e-34;

/// Raw parameter section as it appears in a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterFile {
    pub omega_m_over_2pi_hz: f64,
    pub omega_35_over_2pi_hz: f64,
    pub g_35_over_2pi_hz: f64,
    pub n_pen: f64,
    pub pump_power_w: f64,
    pub xi_hz_per_w: f64,
    pub k_sp_hz: f64,
    pub k_23_hz: f64,
    pub k_24_hz: f64,
    pub k_25_hz: f64,
    pub k_31_hz: f64,
    pub k_41_hz: f64,
    pub k_51_hz: f64,
    pub k_34_hz: f64,
    pub k_43_hz: f64,
    pub k_35_hz: f64,
    pub k_53_hz: f64,
    pub k_45_hz: f64,
    pub k_54_hz: f64,
    pub chi_34_over_2pi_hz: f64,
    pub chi_35_over_2pi_hz: f64,
    pub chi_45_over_2pi_hz: f64,
    pub kappa0_over_2pi_hz: f64,
    pub n_th: f64,
    pub temperature_k: f64,
    /// Re-adds the `+κ·n_th` thermal source to the photon equation.
    #[serde(default)]
    pub thermal_photons_in_dynamics: bool,
}

impl ParameterFile {
    /// Reference values for pentacene:p-terphenyl at a 2×10⁴ W pump.
    ///
    /// `k_43`, `k_53`, `k_54` are set equal to their reverse partners. The
    /// internal loss is the calibrated default shipped in `presets/default.json`.
    pub fn table1() -> Self {
        Self {
            omega_m_over_2pi_hz: 1.45e9,
            omega_35_over_2pi_hz: 1.45e9,
            g_35_over_2pi_hz: 3.66e-2,
            n_pen: 1e17,
            pump_power_w: 2e4,
            xi_hz_per_w: 3.1e3,
            k_sp_hz: 42e6,
            k_23_hz: 5.52e6,
            k_24_hz: 11e6,
            k_25_hz: 52.4e6,
            k_31_hz: 0.2e4,
            k_41_hz: 1.4e4,
            k_51_hz: 2.2e4,
            k_34_hz: 2.8e4,
            k_43_hz: 2.8e4,
            k_35_hz: 1.1e4,
            k_53_hz: 1.1e4,
            k_45_hz: 0.4e4,
            k_54_hz: 0.4e4,
            chi_34_over_2pi_hz: 0.18e6,
            chi_35_over_2pi_hz: 0.18e6,
            chi_45_over_2pi_hz: 0.18e6,
            kappa0_over_2pi_hz: DEFAULT_KAPPA0_OVER_2PI_HZ,
            n_th: 4000.0,
            temperature_k: 300.0,
            thermal_photons_in_dynamics: false,
        }
    }
}

/// Calibrated internal cavity loss κ₀/2π, Hz. See `presets/default.json`.
pub const DEFAULT_KAPPA0_OVER_2PI_HZ: f64 = 1.90912e5;

/// Validated parameters in SI / angular units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParameters {
    /// Cavity mode angular frequency, rad/s.
    pub omega_m: f64,
    /// |3⟩–|5⟩ transition angular frequency, rad/s.
    pub omega_35: f64,
    /// Single-spin coupling, rad/s.
    pub g_35: f64,
    pub n_pen: f64,
    /// Optical pump power, W.
    pub pump_power: f64,
    /// Pump coefficient, 1/(s·W).
    pub xi_per_watt: f64,
    /// Pump rate ξ, 1/s.
    pub xi: f64,
    pub k_sp: f64,
    pub k_23: f64,
    pub k_24: f64,
    pub k_25: f64,
    pub k_31: f64,
    pub k_41: f64,
    pub k_51: f64,
    pub k_34: f64,
    pub k_43: f64,
    pub k_35: f64,
    pub k_53: f64,
    pub k_45: f64,
    pub k_54: f64,
    /// Dephasing rates, rad/s.
    pub chi_34: f64,
    pub chi_35: f64,
    pub chi_45: f64,
    /// Internal cavity loss κ₀, rad/s.
    pub kappa_0: f64,
    pub n_th: f64,
    pub temperature: f64,
    pub thermal_photons: bool,
}

impl PhysicalParameters {
    pub fn table1() -> Self {
        validate_parameters(&ParameterFile::table1()).expect("table parameters are valid")
    }

    /// Damping rate of the spin–photon coherence, excluding the cavity term.
    pub fn coherence_damping(&self) -> f64 {
        0.5 * (self.k_31 + self.k_51 + self.k_34 + self.k_35 + self.k_53 + self.k_54)
            + 0.25 * self.chi_34
            + self.chi_35
            + 0.25 * self.chi_45
    }

    /// Damping rate of the spin–spin correlation.
    pub fn correlation_damping(&self) -> f64 {
        self.k_31 + self.k_51 + self.k_34 + self.k_35 + self.k_53 + self.k_54
            + 0.5 * self.chi_34
            + 2.0 * self.chi_35
            + 0.5 * self.chi_45
    }

    /// Total depletion rate of the excited singlet |2⟩.
    pub fn singlet_decay(&self) -> f64 {
        self.xi + self.k_sp + self.k_23 + self.k_24 + self.k_25
    }

    /// Fastest non-cavity rate in the model; used to bound explicit steps.
    pub fn fastest_material_rate(&self) -> f64 {
        self.singlet_decay().max(self.correlation_damping())
    }

    /// Energy of one cavity photon, J.
    pub fn photon_energy(&self) -> f64 {
        HBAR * self.omega_m
    }

    /// Energy of one |3⟩→|5⟩ spin quantum, J.
    pub fn spin_quantum(&self) -> f64 {
        HBAR * self.omega_35
    }
}

/// Converts a raw parameter section into angular units and checks it.
///
/// Every problem is collected so the caller sees the full list at once.
pub fn validate_parameters(raw: &ParameterFile) -> Result<PhysicalParameters, ConfigError> {
    let mut issues = Vec::new();
    let mut positive = |key: &str, v: f64| {
        if !(v.is_finite() && v > 0.0) {
            issues.push(format!("params.{key}: non-positive rate ({v})"));
        }
    };
    positive("omega_m_over_2pi_hz", raw.omega_m_over_2pi_hz);
    positive("omega_35_over_2pi_hz", raw.omega_35_over_2pi_hz);
    positive("xi_hz_per_w", raw.xi_hz_per_w);
    positive("k_sp_hz", raw.k_sp_hz);
    positive("k_23_hz", raw.k_23_hz);
    positive("k_24_hz", raw.k_24_hz);
    positive("k_25_hz", raw.k_25_hz);
    positive("k_31_hz", raw.k_31_hz);
    positive("k_41_hz", raw.k_41_hz);
    positive("k_51_hz", raw.k_51_hz);
    positive("k_34_hz", raw.k_34_hz);
    positive("k_43_hz", raw.k_43_hz);
    positive("k_35_hz", raw.k_35_hz);
    positive("k_53_hz", raw.k_53_hz);
    positive("k_45_hz", raw.k_45_hz);
    positive("k_54_hz", raw.k_54_hz);
    positive("chi_34_over_2pi_hz", raw.chi_34_over_2pi_hz);
    positive("chi_35_over_2pi_hz", raw.chi_35_over_2pi_hz);
    positive("chi_45_over_2pi_hz", raw.chi_45_over_2pi_hz);
    positive("kappa0_over_2pi_hz", raw.kappa0_over_2pi_hz);
    positive("temperature_k", raw.temperature_k);

    for (key, v) in [
        ("g_35_over_2pi_hz", raw.g_35_over_2pi_hz),
        ("pump_power_w", raw.pump_power_w),
        ("n_th", raw.n_th),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            issues.push(format!("params.{key}: must be finite and non-negative ({v})"));
        }
    }
    if !(raw.n_pen.is_finite() && raw.n_pen >= 2.0) {
        issues.push(format!("params.n_pen: must be at least 2 ({})", raw.n_pen));
    }

    if !issues.is_empty() {
        return Err(ConfigError::Invalid(issues));
    }

    Ok(PhysicalParameters {
        omega_m: TAU * raw.omega_m_over_2pi_hz,
        omega_35: TAU * raw.omega_35_over_2pi_hz,
        g_35: TAU * raw.g_35_over_2pi_hz,
        n_pen: raw.n_pen,
        pump_power: raw.pump_power_w,
        xi_per_watt: raw.xi_hz_per_w,
        xi: raw.xi_hz_per_w * raw.pump_power_w,
        k_sp: raw.k_sp_hz,
        k_23: raw.k_23_hz,
        k_24: raw.k_24_hz,
        k_25: raw.k_25_hz,
        k_31: raw.k_31_hz,
        k_41: raw.k_41_hz,
        k_51: raw.k_51_hz,
        k_34: raw.k_34_hz,
        k_43: raw.k_43_hz,
        k_35: raw.k_35_hz,
        k_53: raw.k_53_hz,
        k_45: raw.k_45_hz,
        k_54: raw.k_54_hz,
        chi_34: TAU * raw.chi_34_over_2pi_hz,
        chi_35: TAU * raw.chi_35_over_2pi_hz,
        chi_45: TAU * raw.chi_45_over_2pi_hz,
        kappa_0: TAU * raw.kappa0_over_2pi_hz,
        n_th: raw.n_th,
        temperature: raw.temperature_k,
        thermal_photons: raw.thermal_photons_in_dynamics,
    })
}

/// Unit conventions recorded in every run manifest.
pub fn unit_conventions() -> Vec<String> {
    vec![
        "omega, g, chi and kappa inputs are quantity/2pi in Hz; multiplied by 2pi to rad/s at load".into(),
        "k_* and k_sp inputs are rates in 1/s, used unchanged".into(),
        "xi = xi_hz_per_w * pump_power_w, in 1/s".into(),
        "tau_down 'auto' = 2/kappa_low with kappa_low in rad/s".into(),
        "p_ins_w is the signed dE/dt; metrics report |p_ins|".into(),
    ]
}
