//! Drives the integrator through the dissipation schedule.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{IntegrationError, ProtocolError, SimulationError};
use crate::integrator::{integrate_segment, Sampling, SegmentOutput, SolverConfig};
use crate::model::{rhs, MeanFieldState, StateVector, IDX_N_PH, STATE_DIM};
use crate::params::{unit_conventions, PhysicalParameters};
use crate::protocol::{
    advance, kappa_at, phase_length, threshold_armed, ChargeTime, Phase, PhaseEvent, PhaseLength, PhaseState,
    ScheduleConfig,
};
use crate::trajectory::{Manifest, PhaseLogEntry, Sample, Trajectory};

/// Rejects states that left the physical domain by more than a few
/// hundred tolerances. Nothing is clamped.
fn guard(solver: &SolverConfig) -> impl Fn(f64, &StateVector) -> Result<(), IntegrationError> {
    let pop_floor = -(1e4 * solver.abs_tol.population).max(1e-12);
    let ph_floor = -1e4 * solver.abs_tol.photons;
    move |t, y| {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(IntegrationError::NonFinite { t });
        }
        const NAMES: [&str; 5] = ["p1", "p2", "p3", "p4", "p5"];
        for (i, name) in NAMES.iter().enumerate() {
            if y[i] < pop_floor {
                return Err(IntegrationError::NegativeExcursion { t, component: name, value: y[i] });
            }
        }
        if y[IDX_N_PH] < ph_floor {
            return Err(IntegrationError::NegativeExcursion { t, component: "n_ph", value: y[IDX_N_PH] });
        }
        Ok(())
    }
}

struct Stepper<'a> {
    params: &'a PhysicalParameters,
    solver: &'a SolverConfig,
    h: f64,
}

impl<'a> Stepper<'a> {
    fn new(params: &'a PhysicalParameters, solver: &'a SolverConfig) -> Self {
        Self { params, solver, h: solver.initial_step_s }
    }

    #[allow(clippy::too_many_arguments)]
    fn segment(
        &mut self,
        t0: f64,
        y0: StateVector,
        t1: f64,
        kappa: impl Fn(f64) -> f64,
        kappa_max: f64,
        grid_dt: f64,
        event: Option<&dyn Fn(&StateVector) -> f64>,
    ) -> Result<SegmentOutput<STATE_DIM>, IntegrationError> {
        let prm = self.params;
        let ctl = self.solver.step_control(kappa_max.max(prm.fastest_material_rate()));
        let sampling = Sampling { grid_dt, record_steps: self.solver.record_steps };
        let out = integrate_segment(
            |t, y: &StateVector| rhs(y, kappa(t), prm),
            t0,
            y0,
            t1,
            self.h,
            &ctl,
            &sampling,
            event,
            &guard(self.solver),
        )?;
        self.h = out.next_h;
        Ok(out)
    }
}

fn manifest(
    method: String,
    params: &PhysicalParameters,
    schedule: &ScheduleConfig,
    solver: &SolverConfig,
    t_charge: f64,
    initial: &MeanFieldState,
) -> Manifest {
    Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        method,
        params: *params,
        schedule: *schedule,
        solver: *solver,
        t_charge_s: t_charge,
        initial_state: *initial,
        conventions: unit_conventions(),
    }
}

/// Charging time: an explicit duration, or the moment the upper battery
/// level peaks under the pump at κ_high.
pub fn resolve_charge_time(
    params: &PhysicalParameters,
    schedule: &ScheduleConfig,
    solver: &SolverConfig,
    initial: &MeanFieldState,
) -> Result<f64, SimulationError> {
    let fail = |source| SimulationError::Integration { cycle: 0, source };
    match schedule.t_charge {
        ChargeTime::Seconds(t) => Ok(t),
        ChargeTime::Keyword(_) => {
            let k = schedule.kappa_high;
            let falling_p5 = |y: &StateVector| -rhs(y, k, params)[4];
            let mut stepper = Stepper::new(params, solver);
            let out = stepper
                .segment(0.0, initial.to_vector(), schedule.max_phase, |_| k, k, schedule.max_phase, Some(&falling_p5))
                .map_err(fail)?;
            let t = out.event_time.ok_or_else(|| fail(IntegrationError::ChargeNotFound(schedule.max_phase)))?;
            debug!("charging resolved to {t:e} s (p5 = {})", out.y_end[4]);
            Ok(t)
        }
    }
}

pub fn run_simulation(
    params: &PhysicalParameters,
    schedule: &ScheduleConfig,
    solver: &SolverConfig,
) -> Result<Trajectory, SimulationError> {
    run_simulation_from(params, schedule, solver, &MeanFieldState::ground())
}

/// Full run: charging, `n_cycles` of (delay, modulation window), and a
/// trailing delay. Phase boundaries and threshold crossings are segment
/// breaks. Across a κ jump two samples share the same time: the left limit
/// (old κ) and the right limit (new κ).
pub fn run_simulation_from(
    params: &PhysicalParameters,
    schedule: &ScheduleConfig,
    solver: &SolverConfig,
    initial: &MeanFieldState,
) -> Result<Trajectory, SimulationError> {
    let t_charge = resolve_charge_time(params, schedule, solver, initial)?;
    let mut stepper = Stepper::new(params, solver);
    let mut ps = PhaseState::charging();
    let mut t = 0.0;
    let mut y = initial.to_vector();
    let mut samples = vec![Sample::new(t, schedule.kappa_high, &y, params)?];
    let mut phase_log = vec![PhaseLogEntry {
        t,
        phase: Phase::Charging,
        cycle_index: 0,
        kappa: schedule.kappa_high,
        sample_index: 0,
    }];

    loop {
        let cycle = ps.cycle_index;
        let integ = |source| SimulationError::Integration { cycle, source };
        let armed = threshold_armed(&ps, schedule);
        let (duration, open_ended) = match phase_length(&ps, schedule, t_charge) {
            PhaseLength::Exactly(d) => (d, false),
            PhaseLength::UntilThreshold { limit } => (limit, true),
        };
        let n_thr = schedule.threshold().unwrap_or(f64::INFINITY);
        let gap = move |y: &StateVector| y[IDX_N_PH] - n_thr;

        let mut event_time = None;
        if armed && gap(&y) >= 0.0 {
            event_time = Some(t);
        } else if duration > 0.0 {
            let kappa_max = if ps.phase == Phase::Low { schedule.kappa_low } else { schedule.kappa_high };
            let grid = if ps.phase.in_modulation() { solver.sample_dt_s } else { solver.coarse_sample_dt_s };
            let state = ps;
            let out = stepper
                .segment(
                    t,
                    y,
                    t + duration,
                    |s| kappa_at(&state, s, schedule),
                    kappa_max,
                    grid,
                    if armed { Some(&gap) } else { None },
                )
                .map_err(integ)?;
            for (ts, ys) in &out.samples {
                samples.push(Sample::new(*ts, kappa_at(&ps, *ts, schedule), ys, params)?);
            }
            t = out.t_end;
            y = out.y_end;
            event_time = out.event_time;
            samples.push(Sample::new(t, kappa_at(&ps, t, schedule), &y, params)?);
        }

        let event = match event_time {
            Some(te) => PhaseEvent::ThresholdCrossed { t: te, kappa: kappa_at(&ps, te, schedule) },
            None if open_ended => {
                return Err(SimulationError::Protocol {
                    cycle,
                    source: ProtocolError::ThresholdNotReached { threshold: n_thr, limit: duration, cycle },
                })
            }
            None => PhaseEvent::Elapsed { t },
        };

        let finished = match ps.phase {
            Phase::Charging => schedule.n_cycles == 0,
            Phase::Delay => ps.cycle_index == schedule.n_cycles,
            _ => false,
        };
        if finished {
            break;
        }

        ps = advance(&ps, event, schedule).map_err(|source| SimulationError::Protocol { cycle, source })?;
        let kappa_new = kappa_at(&ps, t, schedule);
        if samples.last().map(|s| s.kappa) != Some(kappa_new) {
            samples.push(Sample::new(t, kappa_new, &y, params)?);
        }
        phase_log.push(PhaseLogEntry {
            t,
            phase: ps.phase,
            cycle_index: ps.cycle_index,
            kappa: kappa_new,
            sample_index: samples.len() - 1,
        });
    }

    Ok(Trajectory {
        samples,
        phase_log,
        manifest: manifest("dopri5".into(), params, schedule, solver, t_charge, initial),
    })
}

/// Result of the internal-loss calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa0Calibration {
    /// Calibrated κ₀/2π, Hz.
    pub kappa0_over_2pi_hz: f64,
    pub kappa_low_over_2pi_hz: f64,
    pub target_power_w: f64,
    /// Largest photon number of the unmodulated run and when it occurs.
    pub n_ph_max: f64,
    pub t_peak_s: f64,
}

/// First maximum of the photon number with κ held constant from `initial`.
pub fn first_photon_peak(
    params: &PhysicalParameters,
    kappa: f64,
    horizon: f64,
    solver: &SolverConfig,
    initial: &MeanFieldState,
) -> Result<(f64, f64), SimulationError> {
    let fail = |source| SimulationError::Integration { cycle: 0, source };
    let falling_n = |y: &StateVector| -rhs(y, kappa, params)[IDX_N_PH];
    let mut stepper = Stepper::new(params, solver);
    let out = stepper
        .segment(0.0, initial.to_vector(), horizon, |_| kappa, kappa, horizon, Some(&falling_n))
        .map_err(fail)?;
    match out.event_time {
        Some(t) => Ok((t, out.y_end[IDX_N_PH])),
        None => Err(fail(IntegrationError::PeakNotFound(horizon))),
    }
}

/// Picks κ₀ so the unmodulated device (κ ≡ κ_low from switch-on) peaks at
/// `target_power_w`. Intracavity dynamics do not involve κ₀, so this is a
/// single run followed by P = n·ħω·(κ − κ₀) solved for κ₀.
pub fn calibrate_kappa0(
    params: &PhysicalParameters,
    kappa_low: f64,
    target_power_w: f64,
    solver: &SolverConfig,
) -> Result<Kappa0Calibration, SimulationError> {
    let (t_peak, n_max) = first_photon_peak(params, kappa_low, 1e-4, solver, &MeanFieldState::ground())?;
    let kappa_0 = kappa_low - target_power_w / (n_max * params.photon_energy());
    Ok(Kappa0Calibration {
        kappa0_over_2pi_hz: kappa_0 / std::f64::consts::TAU,
        kappa_low_over_2pi_hz: kappa_low / std::f64::consts::TAU,
        target_power_w,
        n_ph_max: n_max,
        t_peak_s: t_peak,
    })
}
