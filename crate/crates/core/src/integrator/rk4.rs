//! Classical fixed-step RK4, kept deliberately separate from the adaptive
//! path so the two can cross-check each other.

use crate::error::{IntegrationError, ProtocolError, SimulationError};
use crate::integrator::SolverConfig;
use crate::model::{rhs, MeanFieldState, StateVector, IDX_N_PH};
use crate::params::{unit_conventions, PhysicalParameters};
use crate::protocol::{
    advance, kappa_at, phase_length, threshold_armed, ChargeTime, Phase, PhaseEvent, PhaseLength, PhaseState,
    ScheduleConfig,
};
use crate::trajectory::{Manifest, PhaseLogEntry, Sample, Trajectory};

/// Largest admissible step: a tenth of the fastest cavity decay time.
pub fn rk4_step_limit(schedule: &ScheduleConfig) -> f64 {
    0.1 / schedule.kappa_high
}

fn step(f: &dyn Fn(f64, &StateVector) -> StateVector, t: f64, y: &StateVector, h: f64) -> StateVector {
    let add = |a: &StateVector, b: &StateVector, c: f64| -> StateVector { std::array::from_fn(|i| a[i] + c * b[i]) };
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &add(y, &k1, 0.5 * h));
    let k3 = f(t + 0.5 * h, &add(y, &k2, 0.5 * h));
    let k4 = f(t + h, &add(y, &k3, h));
    std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

struct Fixed {
    dt: f64,
    /// Samples are kept every `stride` grid steps.
    stride: u64,
    sample_dt: f64,
    event_tol: f64,
}

struct Leg {
    t_end: f64,
    y_end: StateVector,
    event: bool,
    samples: Vec<(f64, StateVector)>,
}

impl Fixed {
    /// Steps from `t0` to `t1`, landing on every multiple of `dt` in
    /// between. With `event`, stops at the first rising zero found by
    /// bisection on re-taken partial steps.
    fn leg(
        &self,
        f: &dyn Fn(f64, &StateVector) -> StateVector,
        t0: f64,
        y0: StateVector,
        t1: f64,
        event: Option<&dyn Fn(&StateVector) -> f64>,
    ) -> Result<Leg, IntegrationError> {
        let mut t = t0;
        let mut y = y0;
        let mut k = (t0 / self.dt).floor() as u64 + 1;
        let mut samples = Vec::new();
        let mut g_prev = event.map(|g| g(&y));
        while t < t1 {
            let t_grid = k as f64 * self.dt;
            let t_next = if t_grid < t1 { t_grid } else { t1 };
            let y_next = step(f, t, &y, t_next - t);
            if y_next.iter().any(|v| !v.is_finite()) {
                return Err(IntegrationError::NonFinite { t: t_next });
            }
            if let (Some(g), Some(gp)) = (event, g_prev) {
                let gn = g(&y_next);
                if gp < 0.0 && gn >= 0.0 {
                    let (mut lo, mut hi) = (0.0, t_next - t);
                    while hi - lo > self.event_tol {
                        let mid = 0.5 * (lo + hi);
                        if g(&step(f, t, &y, mid)) >= 0.0 {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    let y_ev = step(f, t, &y, hi);
                    return Ok(Leg { t_end: t + hi, y_end: y_ev, event: true, samples });
                }
                g_prev = Some(gn);
            }
            if t_next == t_grid && t_next < t1 && k % self.stride == 0 {
                samples.push(((k / self.stride) as f64 * self.sample_dt, y_next));
            }
            if t_next == t_grid {
                k += 1;
            }
            t = t_next;
            y = y_next;
        }
        Ok(Leg { t_end: t, y_end: y, event: false, samples })
    }
}

/// Runs the schedule with fixed-step RK4 of size `dt` (s), keeping samples
/// every `sample_dt` (rounded to a whole number of steps).
pub fn rk4_reference(
    params: &PhysicalParameters,
    schedule: &ScheduleConfig,
    dt: f64,
    sample_dt: f64,
) -> Result<Trajectory, SimulationError> {
    rk4_reference_from(params, schedule, dt, sample_dt, &MeanFieldState::ground())
}

pub fn rk4_reference_from(
    params: &PhysicalParameters,
    schedule: &ScheduleConfig,
    dt: f64,
    sample_dt: f64,
    initial: &MeanFieldState,
) -> Result<Trajectory, SimulationError> {
    let limit = rk4_step_limit(schedule);
    if !(dt > 0.0 && dt <= limit) {
        return Err(SimulationError::Integration { cycle: 0, source: IntegrationError::StepTooLarge { dt, limit } });
    }
    let fx = Fixed {
        dt,
        stride: ((sample_dt / dt).round() as u64).max(1),
        sample_dt: dt * ((sample_dt / dt).round()).max(1.0),
        event_tol: (dt * 1e-4).max(1e-18),
    };
    let initial = *initial;
    let integ = |cycle, source| SimulationError::Integration { cycle, source };

    let t_charge = match schedule.t_charge {
        ChargeTime::Seconds(t) => t,
        ChargeTime::Keyword(_) => {
            let k = schedule.kappa_high;
            let f = |_: f64, y: &StateVector| rhs(y, k, params);
            let falling_p5 = |y: &StateVector| -rhs(y, k, params)[4];
            let leg = fx
                .leg(&f, 0.0, initial.to_vector(), schedule.max_phase, Some(&falling_p5))
                .map_err(|e| integ(0, e))?;
            if !leg.event {
                return Err(integ(0, IntegrationError::ChargeNotFound(schedule.max_phase)));
            }
            leg.t_end
        }
    };

    let mut ps = PhaseState::charging();
    let mut t = 0.0;
    let mut y: StateVector = initial.to_vector();
    let mut samples = vec![Sample::new(t, schedule.kappa_high, &y, params)?];
    let mut phase_log =
        vec![PhaseLogEntry { t, phase: Phase::Charging, cycle_index: 0, kappa: schedule.kappa_high, sample_index: 0 }];
    let n_thr = schedule.threshold().unwrap_or(f64::INFINITY);
    let gap = |y: &StateVector| y[IDX_N_PH] - n_thr;

    loop {
        let cycle = ps.cycle_index;
        let armed = threshold_armed(&ps, schedule);
        let (duration, open_ended) = match phase_length(&ps, schedule, t_charge) {
            PhaseLength::Exactly(d) => (d, false),
            PhaseLength::UntilThreshold { limit } => (limit, true),
        };
        let mut fired = false;
        if armed && gap(&y) >= 0.0 {
            fired = true;
        } else if duration > 0.0 {
            let state = ps;
            let f = |s: f64, y: &StateVector| rhs(y, kappa_at(&state, s, schedule), params);
            let leg = fx
                .leg(&f, t, y, t + duration, if armed { Some(&gap) } else { None })
                .map_err(|e| integ(cycle, e))?;
            for (ts, ys) in &leg.samples {
                samples.push(Sample::new(*ts, kappa_at(&ps, *ts, schedule), ys, params)?);
            }
            t = leg.t_end;
            y = leg.y_end;
            fired = leg.event;
            samples.push(Sample::new(t, kappa_at(&ps, t, schedule), &y, params)?);
        }
        let event = if fired {
            PhaseEvent::ThresholdCrossed { t, kappa: kappa_at(&ps, t, schedule) }
        } else if open_ended {
            return Err(SimulationError::Protocol {
                cycle,
                source: ProtocolError::ThresholdNotReached { threshold: n_thr, limit: duration, cycle },
            });
        } else {
            PhaseEvent::Elapsed { t }
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

    let solver = SolverConfig { sample_dt_s: fx.sample_dt, coarse_sample_dt_s: fx.sample_dt, ..Default::default() };
    Ok(Trajectory {
        samples,
        phase_log,
        manifest: Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            method: format!("rk4(dt={dt:e})"),
            params: *params,
            schedule: *schedule,
            solver,
            t_charge_s: t_charge,
            initial_state: initial,
            conventions: unit_conventions(),
        },
    })
}
