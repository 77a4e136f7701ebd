//! Measured quantities: mass, Hamiltonians, gradient norm, spectra, spatial
//! concentration, ground-state reference values, ejection detection and
//! blow-up rate fitting.
//!
//! Reported masses are physical integrals `∫|u|² dx = 2π Σ|u_k|²`; the bare
//! coefficient sum is kept alongside as `mass_discrete`. The dissipation rate
//! is the t-model's `d(Σ_F |u_k|²)/dt`, i.e. in discrete units.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{efficient_size, GridFft, ModeSet, SpectralState};
use crate::tmodel::{mass_dissipation_rate, TModelRhsBreakdown};

/// Ground-state mass as printed in the literature this suite reproduces.
pub const REPORTED_GROUND_STATE_MASS: f64 = 2.7412;

/// Blow-up instant estimated independently by mesh refinement for `A = 1.80`.
pub const REFERENCE_BLOWUP_TIME: f64 = 0.13504;

/// One timestamped row of measurements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub time: f64,
    pub mass_physical: f64,
    pub mass_discrete: f64,
    /// `∫ [½|u_x|² - |u|⁶/6] dx`.
    pub hamiltonian_quadrature: f64,
    /// `Σ_k [½k²|u_k|² - |u_k|⁶/6]`, the coefficient-wise formula.
    pub hamiltonian_spectral: f64,
    /// `Σ_k k²|u_k|²`.
    pub gradient_l2: f64,
    pub dissipation_rate: f64,
    pub tail_mass: f64,
    pub dt: f64,
}

/// Which wavenumbers count towards the tail mass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailSign {
    /// `|k| >= k_min`.
    #[default]
    Symmetric,
    /// `k >= k_min`.
    Positive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasureOptions {
    pub tail_k_min: i64,
    pub tail_sign: TailSign,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        Self {
            tail_k_min: 25,
            tail_sign: TailSign::Symmetric,
        }
    }
}

/// Measurement context that keeps its transform plan between calls.
pub struct Meter {
    options: MeasureOptions,
    fft: Option<GridFft>,
    buf: Vec<Complex64>,
}

impl Meter {
    pub fn new(options: MeasureOptions) -> Self {
        Self {
            options,
            fft: None,
            buf: Vec::new(),
        }
    }

    pub fn options(&self) -> &MeasureOptions {
        &self.options
    }

    /// `∫|u|⁶ dx`, exact for the band-limited field: the grid is three times
    /// the band width so the zero mode of `|u|⁶` takes no wrap-around.
    fn sextic_integral(&mut self, state: &SpectralState) -> f64 {
        let m = efficient_size(3 * state.modes.len().max(1));
        if self.fft.as_ref().map(GridFft::len) != Some(m) {
            self.fft = Some(GridFft::new(m));
            self.buf = vec![Complex64::new(0.0, 0.0); m];
        }
        let fft = self.fft.as_mut().expect("planned above");
        fft.synthesize(state.modes.lo(), state.modes.coeffs(), &mut self.buf);
        let sum: f64 = self.buf.iter().map(|z| z.norm_sqr().powi(3)).sum();
        2.0 * PI * sum / m as f64
    }

    pub fn measure(
        &mut self,
        state: &SpectralState,
        breakdown: Option<&TModelRhsBreakdown>,
        dt: f64,
    ) -> DiagnosticsRecord {
        let mut mass = 0.0;
        let mut gradient = 0.0;
        let mut spectral_h = 0.0;
        for (k, u) in state.modes.iter() {
            let a = u.norm_sqr();
            let k2 = (k * k) as f64;
            mass += a;
            gradient += k2 * a;
            spectral_h += 0.5 * k2 * a - a * a * a / 6.0;
        }
        let sextic = self.sextic_integral(state);
        DiagnosticsRecord {
            time: state.time,
            mass_physical: 2.0 * PI * mass,
            mass_discrete: mass,
            hamiltonian_quadrature: PI * gradient - sextic / 6.0,
            hamiltonian_spectral: spectral_h,
            gradient_l2: gradient,
            dissipation_rate: breakdown.map(mass_dissipation_rate).unwrap_or(0.0),
            tail_mass: tail_mass_signed(state, self.options.tail_k_min, self.options.tail_sign),
            dt,
        }
    }
}

pub fn measure(state: &SpectralState, breakdown: Option<&TModelRhsBreakdown>) -> DiagnosticsRecord {
    Meter::new(MeasureOptions::default()).measure(state, breakdown, 0.0)
}

/// Per-mode mass `|u_k|²` in ascending wavenumber order.
pub fn spectrum(state: &SpectralState) -> Vec<(i64, f64)> {
    state.modes.iter().map(|(k, u)| (k, u.norm_sqr())).collect()
}

/// `Σ_{|k| >= k_min} |u_k|²` over the modes the state holds.
pub fn tail_mass(state: &SpectralState, k_min: i64) -> f64 {
    tail_mass_signed(state, k_min, TailSign::Symmetric)
}

pub fn tail_mass_signed(state: &SpectralState, k_min: i64, sign: TailSign) -> f64 {
    state
        .modes
        .iter()
        .filter(|&(k, _)| match sign {
            TailSign::Symmetric => k.abs() >= k_min,
            TailSign::Positive => k >= k_min,
        })
        .map(|(_, u)| u.norm_sqr())
        .fold(0.0, |a, b| a + b)
}

/// Mass of the `k_min..` tail counted only over `set`.
pub fn tail_mass_in(state: &SpectralState, k_min: i64, set: &ModeSet) -> f64 {
    state
        .modes
        .iter()
        .filter(|&(k, _)| k.abs() >= k_min && set.contains(k))
        .map(|(_, u)| u.norm_sqr())
        .fold(0.0, |a, b| a + b)
}

/// `∫_a^b |u(x)|² dx`, exact for the trigonometric polynomial the state
/// represents: `Σ_d c_d ∫_a^b e^{idx} dx` with `c_d = Σ_k u_k u*_{k-d}`.
pub fn interval_mass(state: &SpectralState, a: f64, b: f64) -> Result<f64> {
    if !(0.0 <= a && a < b && b <= 2.0 * PI) {
        return Err(Error::invalid(format!(
            "interval [{a}, {b}] must satisfy 0 <= a < b <= 2π"
        )));
    }
    let u = state.modes.coeffs();
    let w = u.len();
    let mut total = (b - a) * state.modes.norm_sqr_sum();
    for d in 1..w {
        let c: Complex64 = (d..w).map(|j| u[j] * u[j - d].conj()).sum();
        let df = d as f64;
        // c_d e^{idx} + conj(c_d) e^{-idx} = 2 Re(c_d e^{idx})
        let integral = (Complex64::from_polar(1.0, df * b) - Complex64::from_polar(1.0, df * a))
            / Complex64::new(0.0, df);
        total += 2.0 * (c * integral).re;
    }
    Ok(total)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, 50)
}

/// `Q(x) = (3 / cosh²(2x))^{1/4}`, the ground state of `Q'' + Q⁵ - Q = 0`.
pub fn ground_state_profile(x: f64) -> f64 {
    (3.0 / (2.0 * x).cosh().powi(2)).powf(0.25)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundStateReference {
    /// `∫_ℝ Q² dx` by adaptive quadrature.
    pub mass: f64,
    /// `√3 π / 2`.
    pub mass_closed_form: f64,
    pub reported_mass: f64,
    /// `Q(0) = 3^{1/4}`.
    pub peak: f64,
    /// Largest `|Q'' + Q⁵ - Q|` found on `[-5, 5]` with finite differences.
    pub max_residual: f64,
}

impl GroundStateReference {
    pub fn profile(&self, x: f64) -> f64 {
        ground_state_profile(x)
    }

    /// Relative gap between the reported and the quadrature mass.
    pub fn reported_discrepancy(&self) -> f64 {
        (self.reported_mass - self.mass).abs() / self.mass
    }
}

pub fn ground_state_reference() -> GroundStateReference {
    let density = |x: f64| ground_state_profile(x).powi(2);
    // the integrand decays like e^{-2|x|}; past |x| = 20 it is below 1e-17
    let mass = adaptive_simpson(&density, -20.0, 20.0, 1e-13);

    let h = 1e-3;
    let mut max_residual = 0.0_f64;
    for i in 0..=1000 {
        let x = -5.0 + 0.01 * i as f64;
        let q = ground_state_profile;
        let d2 = (-q(x + 2.0 * h) + 16.0 * q(x + h) - 30.0 * q(x) + 16.0 * q(x - h)
            - q(x - 2.0 * h))
            / (12.0 * h * h);
        let r = d2 + q(x).powi(5) - q(x);
        max_residual = max_residual.max(r.abs());
    }
    GroundStateReference {
        mass,
        mass_closed_form: 3f64.sqrt() * PI / 2.0,
        reported_mass: REPORTED_GROUND_STATE_MASS,
        peak: ground_state_profile(0.0),
        max_residual,
    }
}

/// One row fed to [`detect_ejection`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateSample {
    pub time: f64,
    pub rate: f64,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EjectionEvent {
    pub t_peak: f64,
    pub peak_rate: f64,
    pub mass_before: f64,
    pub mass_after: f64,
    pub ejected: f64,
    pub window: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EjectionOptions {
    /// Peaks must exceed this multiple of the median `|rate|`.
    pub threshold_ratio: f64,
    /// Peaks must also exceed this fraction of the largest `|rate|`.
    pub min_peak_fraction: f64,
    /// The window extends while `|rate|` stays above this fraction of the peak.
    pub window_fraction: f64,
    /// Samples averaged on each side of the window for the mass levels.
    pub edge_samples: usize,
}

impl Default for EjectionOptions {
    fn default() -> Self {
        Self {
            threshold_ratio: 100.0,
            min_peak_fraction: 0.0,
            window_fraction: 0.01,
            edge_samples: 50,
        }
    }
}

pub fn detect_ejection(series: &[RateSample], threshold_ratio: f64) -> Vec<EjectionEvent> {
    detect_ejection_with(
        series,
        &EjectionOptions {
            threshold_ratio,
            ..EjectionOptions::default()
        },
    )
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Finds isolated peaks of `|rate|` and the mass lost across each.
pub fn detect_ejection_with(
    series: &[RateSample],
    options: &EjectionOptions,
) -> Vec<EjectionEvent> {
    let n = series.len();
    if n < 3 {
        return Vec::new();
    }
    let rate: Vec<f64> = series.iter().map(|s| s.rate.abs()).collect();
    let largest = rate.iter().copied().fold(0.0, f64::max);
    let threshold = (options.threshold_ratio * median(&mut rate.clone()))
        .max(options.min_peak_fraction * largest);

    let mut peaks: Vec<usize> = (1..n - 1)
        .filter(|&i| rate[i] > threshold && rate[i] >= rate[i - 1] && rate[i] > rate[i + 1])
        .collect();
    peaks.sort_by(|&a, &b| rate[b].total_cmp(&rate[a]).then(a.cmp(&b)));

    let mut windows: Vec<(usize, usize, usize)> = Vec::new();
    for p in peaks {
        if windows.iter().any(|&(lo, hi, _)| lo <= p && p <= hi) {
            continue;
        }
        let floor = options.window_fraction * rate[p];
        let mut lo = p;
        while lo > 0 && rate[lo - 1] >= floor {
            lo -= 1;
        }
        let mut hi = p;
        while hi + 1 < n && rate[hi + 1] >= floor {
            hi += 1;
        }
        windows.push((lo, hi, p));
    }
    windows.sort_by_key(|w| w.0);

    let edge = options.edge_samples.max(1);
    windows
        .into_iter()
        .map(|(lo, hi, p)| {
            let before: Vec<f64> = series[lo.saturating_sub(edge)..lo]
                .iter()
                .map(|s| s.mass)
                .collect();
            let after: Vec<f64> = series[(hi + 1).min(n)..(hi + 1 + edge).min(n)]
                .iter()
                .map(|s| s.mass)
                .collect();
            let mean = |v: &[f64], fallback: f64| {
                if v.is_empty() {
                    fallback
                } else {
                    v.iter().sum::<f64>() / v.len() as f64
                }
            };
            let mass_before = mean(&before, series[lo].mass);
            let mass_after = mean(&after, series[hi].mass);
            EjectionEvent {
                t_peak: series[p].time,
                peak_rate: series[p].rate,
                mass_before,
                mass_after,
                ejected: (mass_before - mass_after).max(0.0),
                window: [series[lo].time, series[hi].time],
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Pearson correlation coefficient.
    pub correlation: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "linear fit needs two or more paired points, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let correlation = if syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        correlation,
    })
}

/// Best pure power-law fit `C (T - t)^{-p}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub blowup_time: f64,
    pub exponent: f64,
    pub amplitude: f64,
    pub residual: f64,
}

/// Best log-log fit `C ln|ln(T - t)| / (T - t)` together with the competing
/// power law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupFit {
    pub blowup_time: f64,
    pub amplitude: f64,
    /// RMS of the log-space residuals.
    pub residual: f64,
    pub power_law: PowerLawFit,
    pub loglog_preferred: bool,
}

pub const MIN_FIT_ROWS: usize = 8;

fn loglog_profile(tau: f64) -> f64 {
    tau.ln().abs().ln() / tau
}

/// Log-space least squares for a fixed blow-up time. Returns `(ln C, rms)`.
fn loglog_residual(rows: &[(f64, f64)], blowup: f64) -> (f64, f64) {
    let mut r = Vec::with_capacity(rows.len());
    for &(t, g) in rows {
        let l = loglog_profile(blowup - t);
        if !(l > 0.0 && l.is_finite()) {
            return (f64::NAN, f64::INFINITY);
        }
        r.push(g.ln() - l.ln());
    }
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    let sse: f64 = r.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, (sse / r.len() as f64).sqrt())
}

/// Returns `(ln C, p, rms)` for a fixed blow-up time.
fn power_residual(rows: &[(f64, f64)], blowup: f64) -> (f64, f64, f64) {
    let xs: Vec<f64> = rows.iter().map(|&(t, _)| (blowup - t).ln()).collect();
    if xs.iter().any(|x| !x.is_finite()) {
        return (f64::NAN, f64::NAN, f64::INFINITY);
    }
    let ys: Vec<f64> = rows.iter().map(|&(_, g)| g.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return (f64::NAN, f64::NAN, f64::INFINITY);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    (intercept, -slope, (sse / n).sqrt())
}

/// Minimises `objective` over `T = t_last + δ`, scanning `δ` geometrically
/// and refining the best bracket by golden-section search.
fn minimise_blowup<F: Fn(f64) -> f64>(objective: F, t_last: f64, lo: f64, hi: f64) -> f64 {
    const SCAN: usize = 2000;
    let d_lo = (lo - t_last).max(1e-12 * t_last.abs().max(1.0));
    let d_hi = hi - t_last;
    let ratio = (d_hi / d_lo).powf(1.0 / (SCAN - 1) as f64);
    let deltas: Vec<f64> = (0..SCAN).map(|i| d_lo * ratio.powi(i as i32)).collect();
    let values: Vec<f64> = deltas.iter().map(|&d| objective(t_last + d)).collect();
    let best = (0..SCAN)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("non-empty scan");
    let mut a = deltas[best.saturating_sub(1)];
    let mut b = deltas[(best + 1).min(SCAN - 1)];
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (objective(t_last + c), objective(t_last + d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (t_last.abs() + b) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = objective(t_last + c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = objective(t_last + d);
        }
    }
    let refined = 0.5 * (a + b);
    if objective(t_last + refined) <= values[best] {
        t_last + refined
    } else {
        t_last + deltas[best]
    }
}

/// Fits `gradient_l2 ≈ C ln|ln(T - t)| / (T - t)` to pre-singularity rows
/// `(t, gradient_l2)`, searching `T` in `candidates` (clipped to lie after
/// the last row). A free-exponent power law is fitted on the same rows and
/// `loglog_preferred` records which model has the smaller residual.
pub fn loglog_fit(series: &[(f64, f64)], candidates: (f64, f64)) -> Result<BlowupFit> {
    if series.len() < MIN_FIT_ROWS {
        return Err(Error::InsufficientData(format!(
            "blow-up fit needs at least {MIN_FIT_ROWS} rows, got {}",
            series.len()
        )));
    }
    if series.iter().any(|&(t, g)| !(g > 0.0) || !t.is_finite()) {
        return Err(Error::invalid(
            "blow-up fit needs finite times and positive values",
        ));
    }
    let t_last = series.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = candidates;
    if !(hi > t_last && hi > lo) {
        return Err(Error::invalid(format!(
            "candidate interval [{lo}, {hi}] must extend past the last row at t = {t_last}"
        )));
    }

    let t_ll = minimise_blowup(|t| loglog_residual(series, t).1, t_last, lo, hi);
    let (ln_c, residual) = loglog_residual(series, t_ll);

    let t_pl = minimise_blowup(|t| power_residual(series, t).2, t_last, lo, hi);
    let (ln_cp, exponent, residual_pl) = power_residual(series, t_pl);

    Ok(BlowupFit {
        blowup_time: t_ll,
        amplitude: ln_c.exp(),
        residual,
        power_law: PowerLawFit {
            blowup_time: t_pl,
            exponent,
            amplitude: ln_cp.exp(),
            residual: residual_pl,
        },
        loglog_preferred: residual < residual_pl,
    })
}
