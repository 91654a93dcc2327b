//! Cross-check of the adaptive solver against the fixed-step reference.

use serde::{Deserialize, Serialize};

use crate::error::SimulationError;
use crate::integrator::{rk4_reference_from, SolverConfig};
use crate::model::MeanFieldState;
use crate::params::PhysicalParameters;
use crate::protocol::{ChargeTime, ScheduleConfig};
use crate::simulation::{resolve_charge_time, run_simulation_from};
use crate::trajectory::Trajectory;

/// Agreement required by default.
pub const ORACLE_TOLERANCE: f64 = 1e-4;
/// Default reference step, s.
pub const ORACLE_RK4_DT_S: f64 = 1e-12;
/// Relative deviations are only taken where the reference holds at least
/// this many photons; below it the relative error measures round-off.
pub const ORACLE_PHOTON_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub t_charge_s: f64,
    pub rk4_dt_s: f64,
    /// Sample times present in both runs.
    pub matched_samples: usize,
    pub compared_samples: usize,
    pub max_rel_deviation: f64,
    pub t_at_max_s: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Runs the first pulse (charging, one cycle, trailing delay) with both
/// solvers and compares n_ph at shared sample times. The charging time is
/// resolved once with the adaptive solver and handed to both runs.
pub fn oracle_check(
    params: &PhysicalParameters,
    schedule: &ScheduleConfig,
    solver: &SolverConfig,
    initial: &MeanFieldState,
    rk4_dt: f64,
    tolerance: f64,
) -> Result<OracleReport, SimulationError> {
    let t_charge = resolve_charge_time(params, schedule, solver, initial)?;
    let mut first = *schedule;
    first.n_cycles = first.n_cycles.min(1);
    first.t_charge = ChargeTime::Seconds(t_charge);
    let adaptive = run_simulation_from(params, &first, solver, initial)?;
    let reference = rk4_reference_from(params, &first, rk4_dt, solver.sample_dt_s, initial)?;
    let (matched, compared, dev, t_max) = compare(&adaptive, &reference, 1e-6 * solver.sample_dt_s);
    Ok(OracleReport {
        t_charge_s: t_charge,
        rk4_dt_s: rk4_dt,
        matched_samples: matched,
        compared_samples: compared,
        max_rel_deviation: dev,
        t_at_max_s: t_max,
        tolerance,
        passed: compared > 0 && dev < tolerance,
    })
}

/// Returns (matched, compared, max relative deviation, time of the maximum).
fn compare(a: &Trajectory, r: &Trajectory, t_tol: f64) -> (usize, usize, f64, f64) {
    let rt = r.times();
    let (mut matched, mut compared, mut dev, mut t_max) = (0, 0, 0.0_f64, 0.0);
    for s in &a.samples {
        let k = rt.partition_point(|&t| t < s.t - t_tol);
        let Some(rs) = r.samples.get(k).filter(|rs| (rs.t - s.t).abs() <= t_tol) else {
            continue;
        };
        matched += 1;
        let n_ref = rs.state.n_ph;
        if n_ref < ORACLE_PHOTON_FLOOR {
            continue;
        }
        compared += 1;
        let d = (s.state.n_ph - n_ref).abs() / n_ref;
        if d > dev {
            dev = d;
            t_max = s.t;
        }
    }
    (matched, compared, dev, t_max)
}
