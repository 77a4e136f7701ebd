//! Adaptive Runge-Kutta-Fehlberg 4(5) time stepping.
//!
//! Complex coefficient vectors are advanced with plain complex arithmetic.
//! The local error estimate is the mixed norm
//! `max_k |y5_k - y4_k| / (1 + |y_k|)`, compared against a single tolerance
//! that acts as both absolute and relative bound.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{ModeBand, SpectralState};

/// A first-order system `dy/dt = f(t, y)` over complex coefficients.
pub trait OdeSystem {
    fn rhs(&mut self, t: f64, y: &[Complex64], dy: &mut [Complex64]);
}

impl<F> OdeSystem for F
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
{
    fn rhs(&mut self, t: f64, y: &[Complex64], dy: &mut [Complex64]) {
        self(t, y, dy)
    }
}

/// Which member of the embedded pair is carried forward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Propagation {
    Fifth,
    Fourth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub tolerance: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub safety: f64,
    pub max_growth: f64,
    pub max_steps: usize,
    pub propagate: Propagation,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            dt_init: 1e-6,
            dt_min: 1e-9,
            dt_max: 1e-3,
            safety: 0.9,
            max_growth: 5.0,
            max_steps: 100_000_000,
            propagate: Propagation::Fifth,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if !(0.0 < self.dt_min && self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return Err(Error::invalid(format!(
                "need 0 < dt_min <= dt_init <= dt_max, got {} / {} / {}",
                self.dt_min, self.dt_init, self.dt_max
            )));
        }
        if !(self.safety > 0.0 && self.safety < 1.0) {
            return Err(Error::invalid("safety factor must lie in (0, 1)"));
        }
        if !(self.max_growth > 1.0) {
            return Err(Error::invalid("max_growth must exceed 1"));
        }
        Ok(())
    }
}

// Fehlberg's 4(5) tableau.
const C: [f64; 6] = [0.0, 1.0 / 4.0, 3.0 / 8.0, 12.0 / 13.0, 1.0, 1.0 / 2.0];
const A: [[f64; 5]; 6] = [
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 4.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 32.0, 9.0 / 32.0, 0.0, 0.0, 0.0],
    [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0, 0.0, 0.0],
    [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0, 0.0],
    [
        -8.0 / 27.0,
        2.0,
        -3544.0 / 2565.0,
        1859.0 / 4104.0,
        -11.0 / 40.0,
    ],
];
const B5: [f64; 6] = [
    16.0 / 135.0,
    0.0,
    6656.0 / 12825.0,
    28561.0 / 56430.0,
    -9.0 / 50.0,
    2.0 / 55.0,
];
const B4: [f64; 6] = [
    25.0 / 216.0,
    0.0,
    1408.0 / 2565.0,
    2197.0 / 4104.0,
    -1.0 / 5.0,
    0.0,
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub accepted: bool,
    pub error: f64,
    pub dt_next: f64,
}

/// Stage storage for repeated RKF45 steps on a fixed dimension.
#[derive(Clone, Debug)]
pub struct Rkf45 {
    k: [Vec<Complex64>; 6],
    stage: Vec<Complex64>,
    y5: Vec<Complex64>,
    y4: Vec<Complex64>,
    rhs_evals: usize,
}

impl Rkf45 {
    pub fn new(dim: usize) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); dim];
        Self {
            k: std::array::from_fn(|_| z.clone()),
            stage: z.clone(),
            y5: z.clone(),
            y4: z,
            rhs_evals: 0,
        }
    }

    pub fn rhs_evals(&self) -> usize {
        self.rhs_evals
    }

    /// Evaluates both embedded solutions for one step of size `dt` without
    /// error control. Returns `false` if any stage produced a non-finite value.
    pub fn pair<S: OdeSystem + ?Sized>(
        &mut self,
        system: &mut S,
        t: f64,
        y: &[Complex64],
        dt: f64,
    ) -> bool {
        for s in 0..6 {
            self.stage.copy_from_slice(y);
            for (j, &a) in A[s][..s].iter().enumerate() {
                if a != 0.0 {
                    let w = a * dt;
                    for (z, kj) in self.stage.iter_mut().zip(&self.k[j]) {
                        *z += kj * w;
                    }
                }
            }
            system.rhs(t + C[s] * dt, &self.stage, &mut self.k[s]);
            self.rhs_evals += 1;
        }
        self.y5.copy_from_slice(y);
        self.y4.copy_from_slice(y);
        for s in 0..6 {
            let (w5, w4) = (B5[s] * dt, B4[s] * dt);
            for ((a, b), ks) in self.y5.iter_mut().zip(self.y4.iter_mut()).zip(&self.k[s]) {
                *a += ks * w5;
                *b += ks * w4;
            }
        }
        self.y5
            .iter()
            .chain(&self.y4)
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn fifth(&self) -> &[Complex64] {
        &self.y5
    }

    pub fn fourth(&self) -> &[Complex64] {
        &self.y4
    }

    /// One controlled step. On acceptance `y` is overwritten with the new
    /// state; on rejection it is left untouched.
    pub fn try_step<S: OdeSystem + ?Sized>(
        &mut self,
        system: &mut S,
        t: f64,
        y: &mut [Complex64],
        dt: f64,
        control: &StepControl,
    ) -> Result<StepOutcome> {
        let at_floor = dt <= control.dt_min * (1.0 + 1e-12);
        if !self.pair(system, t, y, dt) {
            if at_floor {
                return Err(Error::Stall { time: t, dt });
            }
            return Ok(StepOutcome {
                accepted: false,
                error: f64::INFINITY,
                dt_next: (0.5 * dt).max(control.dt_min),
            });
        }

        let error = y
            .iter()
            .zip(self.y5.iter().zip(&self.y4))
            .map(|(u, (a, b))| (a - b).norm() / (1.0 + u.norm()))
            .fold(0.0_f64, f64::max);
        let accepted = error <= control.tolerance;
        if !accepted && at_floor {
            return Err(Error::Stall { time: t, dt });
        }

        let factor = if error == 0.0 {
            control.max_growth
        } else {
            (control.safety * (control.tolerance / error).powf(0.2)).clamp(0.1, control.max_growth)
        };
        let dt_next = (dt * factor).clamp(control.dt_min, control.dt_max);

        if accepted {
            let src = match control.propagate {
                Propagation::Fifth => &self.y5,
                Propagation::Fourth => &self.y4,
            };
            y.copy_from_slice(src);
        }
        Ok(StepOutcome {
            accepted,
            error,
            dt_next,
        })
    }
}

/// Single controlled step returning the candidate state alongside the
/// outcome; the candidate equals `y` when the step is rejected.
pub fn rkf45_step<S: OdeSystem + ?Sized>(
    system: &mut S,
    t: f64,
    y: &[Complex64],
    dt: f64,
    control: &StepControl,
) -> Result<(Vec<Complex64>, StepOutcome)> {
    let mut stepper = Rkf45::new(y.len());
    let mut next = y.to_vec();
    let outcome = stepper.try_step(system, t, &mut next, dt, control)?;
    Ok((next, outcome))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum IntegrationStatus {
    Completed,
    Stalled { time: f64, dt: f64 },
    MaxSteps { time: f64, steps: usize },
}

impl IntegrationStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, IntegrationStatus::Completed)
    }
}

/// State handed to an observer at each record time.
#[derive(Debug)]
pub struct RecordPoint<'a> {
    pub time: f64,
    pub state: &'a [Complex64],
    /// Current controller step size.
    pub dt: f64,
    pub accepted_steps: usize,
}

#[derive(Clone, Debug)]
pub struct IntegrationSummary {
    pub status: IntegrationStatus,
    pub final_time: f64,
    pub final_state: Vec<Complex64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evals: usize,
    pub dt_history: Vec<f64>,
}

/// Record times: `t0`, every multiple of `cadence` after it, the extra
/// times, and `t_end`, merged and sorted.
pub fn record_times(t0: f64, t_end: f64, cadence: f64, extra: &[f64]) -> Vec<f64> {
    let eps = 1e-12 * t_end.abs().max(1.0);
    let mut times = vec![t0];
    if cadence > 0.0 {
        let mut j = 1u64;
        loop {
            let t = t0 + j as f64 * cadence;
            if t >= t_end - eps {
                break;
            }
            times.push(t);
            j += 1;
        }
    }
    times.extend(
        extra
            .iter()
            .copied()
            .filter(|&t| t > t0 + eps && t < t_end - eps),
    );
    times.push(t_end);
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() <= eps);
    times
}

/// Advances `y0` from `t0` to exactly `t_end`, landing on every record time
/// and calling `observer` there (including at `t0`).
///
/// Configuration errors are returned as `Err`; a stall or step budget
/// overrun ends the run early with the corresponding status.
#[allow(clippy::too_many_arguments)]
pub fn integrate_with<S, O>(
    system: &mut S,
    y0: Vec<Complex64>,
    t0: f64,
    t_end: f64,
    control: &StepControl,
    cadence: f64,
    extra_times: &[f64],
    mut observer: O,
) -> Result<IntegrationSummary>
where
    S: OdeSystem + ?Sized,
    O: FnMut(RecordPoint<'_>),
{
    control.validate()?;
    if !(t_end > t0) {
        return Err(Error::invalid(format!(
            "t_end ({t_end}) must exceed the initial time ({t0})"
        )));
    }
    let targets = record_times(t0, t_end, cadence, extra_times);
    let mut stepper = Rkf45::new(y0.len());
    let mut y = y0;
    let mut t = t0;
    let mut dt = control.dt_init;
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut dt_history = Vec::new();
    let mut status = IntegrationStatus::Completed;

    observer(RecordPoint {
        time: t,
        state: &y,
        dt,
        accepted_steps: 0,
    });

    'targets: for &target in &targets[1..] {
        while t < target {
            if accepted + rejected >= control.max_steps {
                status = IntegrationStatus::MaxSteps {
                    time: t,
                    steps: accepted + rejected,
                };
                break 'targets;
            }
            let remaining = target - t;
            let clipped = dt >= remaining;
            let h = if clipped { remaining } else { dt };
            match stepper.try_step(system, t, &mut y, h, control) {
                Err(Error::Stall { time, dt }) => {
                    status = IntegrationStatus::Stalled { time, dt };
                    break 'targets;
                }
                Err(e) => return Err(e),
                Ok(out) if out.accepted => {
                    accepted += 1;
                    dt_history.push(h);
                    if clipped {
                        t = target;
                        dt = dt.max(out.dt_next).min(control.dt_max);
                    } else {
                        t += h;
                        dt = out.dt_next;
                    }
                }
                Ok(out) => {
                    rejected += 1;
                    dt = out.dt_next.min(h);
                }
            }
        }
        observer(RecordPoint {
            time: t,
            state: &y,
            dt,
            accepted_steps: accepted,
        });
    }

    Ok(IntegrationSummary {
        status,
        final_time: t,
        final_state: y,
        accepted_steps: accepted,
        rejected_steps: rejected,
        rhs_evals: stepper.rhs_evals(),
        dt_history,
    })
}

/// Snapshots collected by [`integrate`].
#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<SpectralState>,
    pub dt_history: Vec<f64>,
    pub rhs_eval_count: usize,
    pub status: IntegrationStatus,
}

impl TrajectoryRecord {
    pub fn is_complete(&self) -> bool {
        self.status.is_completed()
    }

    pub fn last(&self) -> Option<&SpectralState> {
        self.states.last()
    }
}

pub fn integrate<S: OdeSystem + ?Sized>(
    initial: &SpectralState,
    system: &mut S,
    t_end: f64,
    control: &StepControl,
    record_cadence: f64,
) -> Result<TrajectoryRecord> {
    let lo = initial.modes.lo();
    let mut times = Vec::new();
    let mut states = Vec::new();
    let summary = integrate_with(
        system,
        initial.modes.coeffs().to_vec(),
        initial.time,
        t_end,
        control,
        record_cadence,
        &[],
        |p| {
            times.push(p.time);
            states.push(SpectralState::new(
                ModeBand::from_vec(lo, p.state.to_vec()),
                p.time,
            ));
        },
    )?;
    // a stalled run ends between record times; keep its last state too
    if !summary.status.is_completed() && times.last() != Some(&summary.final_time) {
        times.push(summary.final_time);
        states.push(SpectralState::new(
            ModeBand::from_vec(lo, summary.final_state.clone()),
            summary.final_time,
        ));
    }
    Ok(TrajectoryRecord {
        times,
        states,
        dt_history: summary.dt_history,
        rhs_eval_count: summary.rhs_evals,
        status: summary.status,
    })
}
