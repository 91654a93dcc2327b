//! Mean-field equations of motion for the five-level spin ensemble coupled to
//! a single cavity mode, and the energy/power observables derived from them.
//!
//! The state is kept as nine reals: populations `p1..p5`, the photon number,
//! the real and imaginary parts of the spin–photon coherence ⟨a†σ³⁵⟩, and the
//! (real) two-spin correlation ⟨σ₁⁵³σ₂³⁵⟩.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::params::PhysicalParameters;

pub const STATE_DIM: usize = 9;

pub type StateVector = [f64; STATE_DIM];

pub const IDX_N_PH: usize = 5;
pub const IDX_COH_RE: usize = 6;
pub const IDX_COH_IM: usize = 7;
pub const IDX_CORR: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState {
    /// Level populations ⟨σ¹¹⟩ … ⟨σ⁵⁵⟩.
    pub p: [f64; 5],
    pub n_ph: f64,
    /// ⟨a†σ³⁵⟩; its conjugate is ⟨σ⁵³a⟩.
    pub coh: Complex64,
    pub corr: f64,
}

impl MeanFieldState {
    /// All molecules in the singlet ground state, empty cavity.
    pub fn ground() -> Self {
        Self {
            p: [1.0, 0.0, 0.0, 0.0, 0.0],
            n_ph: 0.0,
            coh: Complex64::new(0.0, 0.0),
            corr: 0.0,
        }
    }

    pub fn from_vector(y: &StateVector) -> Self {
        Self {
            p: [y[0], y[1], y[2], y[3], y[4]],
            n_ph: y[IDX_N_PH],
            coh: Complex64::new(y[IDX_COH_RE], y[IDX_COH_IM]),
            corr: y[IDX_CORR],
        }
    }

    pub fn to_vector(&self) -> StateVector {
        [
            self.p[0],
            self.p[1],
            self.p[2],
            self.p[3],
            self.p[4],
            self.n_ph,
            self.coh.re,
            self.coh.im,
            self.corr,
        ]
    }

    pub fn trace(&self) -> f64 {
        self.p.iter().sum()
    }

    pub fn derivative(&self, kappa: f64, params: &PhysicalParameters) -> MeanFieldState {
        MeanFieldState::from_vector(&rhs(&self.to_vector(), kappa, params))
    }
}

/// Right-hand side of the mean-field system for cavity loss `kappa` (rad/s).
pub fn rhs(y: &StateVector, kappa: f64, prm: &PhysicalParameters) -> StateVector {
    let [p1, p2, p3, p4, p5, n, c_re, c_im, corr] = *y;
    let g = prm.g_35;
    let coh = Complex64::new(c_re, c_im);

    // i·g·(⟨σ⁵³a⟩ − ⟨a†σ³⁵⟩) = 2·g·Im(coh): per-spin |5⟩→|3⟩ stimulated flow.
    let exchange = 2.0 * g * c_im;

    let dp1 = -prm.xi * p1 + (prm.xi + prm.k_sp) * p2 + prm.k_31 * p3 + prm.k_41 * p4 + prm.k_51 * p5;
    let dp2 = prm.xi * p1 - (prm.xi + prm.k_sp) * p2 - prm.k_23 * p2 - prm.k_24 * p2 - prm.k_25 * p2;
    let dp3 = exchange + prm.k_23 * p2 - prm.k_31 * p3 - prm.k_34 * p3 + prm.k_43 * p4 - prm.k_35 * p3
        + prm.k_53 * p5;
    let dp4 = prm.k_24 * p2 - prm.k_41 * p4 + prm.k_34 * p3 - prm.k_43 * p4 - prm.k_45 * p4 + prm.k_54 * p5;
    let dp5 = -exchange + prm.k_25 * p2 - prm.k_51 * p5 + prm.k_35 * p3 - prm.k_53 * p5 + prm.k_45 * p4
        - prm.k_54 * p5;

    let mut dn = prm.n_pen * exchange - kappa * n;
    if prm.thermal_photons {
        dn += kappa * prm.n_th;
    }

    let i = Complex64::i();
    let dcoh = i * (prm.omega_m - prm.omega_35) * coh
        + i * g * (prm.n_pen - 1.0) * corr
        + i * g * ((1.0 + n) * p5 - n * p3)
        - prm.coherence_damping() * coh
        - 0.5 * kappa * coh;

    // i·g·conj(c)·(p5 − p3) + i·g·c·(p3 − p5) = 2·g·(p5 − p3)·Im(c), real.
    let dcorr = 2.0 * g * (p5 - p3) * c_im - prm.correlation_damping() * corr;

    [dp1, dp2, dp3, dp4, dp5, dn, dcoh.re, dcoh.im, dcorr]
}

/// Battery energy E = N·ħ·ω₃₅·p5, J.
pub fn battery_energy(state: &MeanFieldState, params: &PhysicalParameters) -> f64 {
    params.n_pen * params.spin_quantum() * state.p[4]
}

/// Signed instantaneous battery power dE/dt, W.
pub fn instantaneous_power(state: &MeanFieldState, kappa: f64, params: &PhysicalParameters) -> f64 {
    let d = rhs(&state.to_vector(), kappa, params);
    params.n_pen * params.spin_quantum() * d[4]
}

/// k_c = κ/κ₀ − 1.
pub fn coupling_coefficient(kappa: f64, kappa_0: f64) -> Result<f64, ModelError> {
    if !(kappa_0 > 0.0) {
        return Err(ModelError::NonPositiveInternalLoss(kappa_0));
    }
    if kappa < kappa_0 {
        return Err(ModelError::Undercoupled { kappa, kappa_0 });
    }
    Ok(kappa / kappa_0 - 1.0)
}

/// Output power P = N_ph·ħ·ω_m·κ·k_c/(1 + k_c), W.
pub fn output_power(n_ph: f64, kappa: f64, params: &PhysicalParameters) -> Result<f64, ModelError> {
    if kappa == params.kappa_0 {
        return Ok(0.0);
    }
    let kc = coupling_coefficient(kappa, params.kappa_0)?;
    Ok(n_ph * params.photon_energy() * kappa * kc / (1.0 + kc))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedObservables {
    pub energy: f64,
    pub p_ins: f64,
    pub kappa: f64,
    pub k_c: f64,
    pub p_out: f64,
}

impl DerivedObservables {
    pub fn compute(
        state: &MeanFieldState,
        kappa: f64,
        params: &PhysicalParameters,
    ) -> Result<Self, ModelError> {
        let k_c = if kappa == params.kappa_0 {
            0.0
        } else {
            coupling_coefficient(kappa, params.kappa_0)?
        };
        Ok(Self {
            energy: battery_energy(state, params),
            p_ins: instantaneous_power(state, kappa, params),
            kappa,
            k_c,
            p_out: output_power(state.n_ph, kappa, params)?,
        })
    }
}
