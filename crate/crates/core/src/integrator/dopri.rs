//! Dormand–Prince 5(4) with FSAL, PI step-size control and the standard
//! fourth-order continuous extension.
//!
//! Coefficients: Dormand & Prince (1980); dense output and controller follow
//! Hairer, Nørsett & Wanner, *Solving ODEs I*, §II.5–II.6.

use log::warn;

use crate::error::IntegrationError;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const MIN_STEP: f64 = 1e-16;
/// DP5's stability interval on the negative real axis is about 3.3.
const STABILITY_RADIUS: f64 = 3.0;
/// Interior probes per step when scanning for event sign changes.
const EVENT_PROBES: usize = 8;

/// Error-control settings for one integration.
#[derive(Debug, Clone, Copy)]
pub struct StepControl<const N: usize> {
    pub rel_tol: f64,
    pub abs_tol: [f64; N],
    pub max_step: f64,
    /// Fastest decay rate the step must stay stable against, 1/s.
    pub stiff_rate: f64,
    pub event_time_tol: f64,
}

impl<const N: usize> StepControl<N> {
    fn step_cap(&self) -> f64 {
        if self.stiff_rate > 0.0 {
            self.max_step.min(STABILITY_RADIUS / self.stiff_rate)
        } else {
            self.max_step
        }
    }
}

/// Which samples to emit between the segment's endpoints.
#[derive(Debug, Clone, Copy)]
pub struct Sampling {
    /// Samples at every integer multiple of this spacing.
    pub grid_dt: f64,
    /// Also emit each accepted step endpoint.
    pub record_steps: bool,
}

/// Continuous extension of one accepted step.
#[derive(Debug, Clone)]
pub struct DenseStep<const N: usize> {
    pub t0: f64,
    pub h: f64,
    rcont: [[f64; N]; 5],
}

impl<const N: usize> DenseStep<N> {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn eval(&self, t: f64) -> [f64; N] {
        let theta = (t - self.t0) / self.h;
        let theta1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = &self.rcont;
        std::array::from_fn(|i| {
            r1[i] + theta * (r2[i] + theta1 * (r3[i] + theta * (r4[i] + theta1 * r5[i])))
        })
    }
}

#[derive(Debug, Clone)]
pub struct SegmentOutput<const N: usize> {
    pub t_end: f64,
    pub y_end: [f64; N],
    /// Set when the event function stopped the segment early.
    pub event_time: Option<f64>,
    /// Interior samples, strictly between the segment's start and end.
    pub samples: Vec<(f64, [f64; N])>,
    /// Suggested size of the next step.
    pub next_h: f64,
    pub accepted: usize,
    pub rejected: usize,
}

struct Stages<const N: usize> {
    k: [[f64; N]; 7],
    y_new: [f64; N],
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|i| y[i] + h * terms.iter().map(|(c, k)| c * k[i]).sum::<f64>())
}

fn stages<const N: usize, F>(f: &F, t: f64, y: &[f64; N], k1: [f64; N], h: f64) -> Stages<N>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let k2 = f(t + C2 * h, &axpy(y, h, &[(A21, &k1)]));
    let k3 = f(t + C3 * h, &axpy(y, h, &[(A31, &k1), (A32, &k2)]));
    let k4 = f(t + C4 * h, &axpy(y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
    let k5 = f(
        t + C5 * h,
        &axpy(y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    );
    let k6 = f(
        t + h,
        &axpy(y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
    );
    let y_new = axpy(y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = f(t + h, &y_new);
    Stages { k: [k1, k2, k3, k4, k5, k6, k7], y_new }
}

fn error_norm<const N: usize>(
    y: &[f64; N],
    st: &Stages<N>,
    h: f64,
    ctl: &StepControl<N>,
) -> f64 {
    let k = &st.k;
    let mut acc = 0.0;
    for i in 0..N {
        let err = h * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
        let scale = ctl.abs_tol[i] + ctl.rel_tol * y[i].abs().max(st.y_new[i].abs());
        acc += (err / scale).powi(2);
    }
    (acc / N as f64).sqrt()
}

fn dense<const N: usize>(t0: f64, h: f64, y0: &[f64; N], st: &Stages<N>) -> DenseStep<N> {
    let k = &st.k;
    let mut rcont = [[0.0; N]; 5];
    for i in 0..N {
        let ydiff = st.y_new[i] - y0[i];
        let bspl = h * k[0][i] - ydiff;
        rcont[0][i] = y0[i];
        rcont[1][i] = ydiff;
        rcont[2][i] = bspl;
        rcont[3][i] = ydiff - h * k[6][i] - bspl;
        rcont[4][i] = h
            * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]);
    }
    DenseStep { t0, h, rcont }
}

/// Refines a sign change of `f` on `[a, b]` to within `tol`, returning the
/// end of the final bracket on the far side of the crossing (the first time
/// at which the event has certainly happened). `None` without a sign change.
pub fn locate_event(a: f64, b: f64, f: impl Fn(f64) -> f64, tol: f64) -> Option<f64> {
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Some(a);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    // Illinois false position, with a bisection whenever the bracket has not
    // at least halved over the previous iteration.
    let mut side = 0i8;
    let mut prev_width = b - a;
    for _ in 0..400 {
        if b - a <= tol || fb == 0.0 {
            break;
        }
        let mut c = b - fb * (b - a) / (fb - fa);
        if !(c > a && c < b) || (b - a) > 0.5 * prev_width {
            c = 0.5 * (a + b);
        }
        prev_width = b - a;
        let fc = f(c);
        if fc == 0.0 {
            return Some(c);
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    Some(b)
}

/// Earliest rising crossing (`g < 0` → `g >= 0`) of `event` inside `step`.
fn scan_step<const N: usize>(
    step: &DenseStep<N>,
    g_start: f64,
    event: &dyn Fn(&[f64; N]) -> f64,
    tol: f64,
) -> Option<f64> {
    let mut crossings = Vec::new();
    let mut t_prev = step.t0;
    let mut g_prev = g_start;
    for j in 1..=EVENT_PROBES {
        let t = if j == EVENT_PROBES {
            step.t1()
        } else {
            step.t0 + step.h * j as f64 / EVENT_PROBES as f64
        };
        let g = event(&step.eval(t));
        if g_prev < 0.0 && g >= 0.0 {
            crossings.push((t_prev, t));
        }
        t_prev = t;
        g_prev = g;
    }
    if crossings.len() > 1 {
        warn!(
            "{} event crossings inside one step at t = {:e} s; taking the earliest",
            crossings.len(),
            step.t0
        );
    }
    let (a, b) = *crossings.first()?;
    locate_event(a, b, |t| event(&step.eval(t)), tol)
}

/// Adaptive integration of `y' = f(t, y)` over `[t0, t1]`.
///
/// Emits samples on the `sampling` grid (and optionally at step endpoints)
/// strictly inside the segment. With `event`, stops at the first rising zero
/// crossing of `event(y)`. `guard` vets every accepted state.
#[allow(clippy::too_many_arguments)]
pub fn integrate_segment<const N: usize, F>(
    f: F,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    h_init: f64,
    ctl: &StepControl<N>,
    sampling: &Sampling,
    event: Option<&dyn Fn(&[f64; N]) -> f64>,
    guard: &dyn Fn(f64, &[f64; N]) -> Result<(), IntegrationError>,
) -> Result<SegmentOutput<N>, IntegrationError>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let mut t = t0;
    let mut y = y0;
    let mut samples = Vec::new();
    let cap = ctl.step_cap();
    let mut h = h_init.min(cap).min(t1 - t0);
    let mut k1 = f(t, &y);
    let mut fac_old: f64 = 1e-4;
    let mut last_rejected = false;
    let mut accepted = 0;
    let mut rejected = 0;
    let mut g_prev = event.map(|g| g(&y));
    let mut next_grid = ((t0 / sampling.grid_dt).floor() as i64 + 1) as f64;

    if t1 <= t0 {
        return Ok(SegmentOutput {
            t_end: t0,
            y_end: y0,
            event_time: None,
            samples,
            next_h: h_init,
            accepted,
            rejected,
        });
    }

    loop {
        if h < MIN_STEP {
            return Err(IntegrationError::StepUnderflow { t, h });
        }
        let last = t + h >= t1 - 1e-3 * h;
        if last {
            h = t1 - t;
        }
        let st = stages(&f, t, &y, k1, h);
        let err = error_norm(&y, &st, h, ctl);
        if !err.is_finite() {
            rejected += 1;
            last_rejected = true;
            h *= FAC_MIN;
            continue;
        }
        let fac11 = err.powf(0.2 - BETA * 0.75);
        if err > 1.0 {
            rejected += 1;
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            last_rejected = true;
            continue;
        }

        // accepted
        accepted += 1;
        let t_new = if last { t1 } else { t + h };
        if st.y_new.iter().any(|v| !v.is_finite()) {
            return Err(IntegrationError::NonFinite { t: t_new });
        }
        let step = dense(t, h, &y, &st);

        let mut stop_at = None;
        if let (Some(g), Some(gp)) = (event, g_prev) {
            let g_new = g(&st.y_new);
            let crossed_inside = gp < 0.0 && (g_new >= 0.0 || EVENT_PROBES > 1);
            if crossed_inside {
                stop_at = scan_step(&step, gp, g, ctl.event_time_tol);
            }
            g_prev = Some(g_new);
        }

        let t_emit_end = stop_at.unwrap_or(t_new);
        while next_grid * sampling.grid_dt < t_emit_end {
            let tg = next_grid * sampling.grid_dt;
            samples.push((tg, step.eval(tg)));
            next_grid += 1.0;
        }

        if let Some(t_event) = stop_at {
            // Restart the stages exactly at the event for an accurate end state.
            let y_event = if t_event > t {
                stages(&f, t, &y, k1, t_event - t).y_new
            } else {
                y
            };
            guard(t_event, &y_event)?;
            return Ok(SegmentOutput {
                t_end: t_event,
                y_end: y_event,
                event_time: Some(t_event),
                samples,
                next_h: h,
                accepted,
                rejected,
            });
        }

        guard(t_new, &st.y_new)?;
        if last {
            return Ok(SegmentOutput {
                t_end: t1,
                y_end: st.y_new,
                event_time: None,
                samples,
                next_h: h_next(h, fac11, &mut fac_old, err, last_rejected, cap),
                accepted,
                rejected,
            });
        }
        if sampling.record_steps {
            match samples.last() {
                Some((ts, _)) if *ts == t_new => {}
                _ => samples.push((t_new, st.y_new)),
            }
        }
        h = h_next(h, fac11, &mut fac_old, err, last_rejected, cap);
        last_rejected = false;
        t = t_new;
        y = st.y_new;
        k1 = st.k[6];
    }
}

fn h_next(h: f64, fac11: f64, fac_old: &mut f64, err: f64, last_rejected: bool, cap: f64) -> f64 {
    let fac = (fac11 / fac_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
    *fac_old = err.max(1e-4);
    let mut h_new = h / fac;
    if last_rejected {
        h_new = h_new.min(h);
    }
    h_new.min(cap)
}
