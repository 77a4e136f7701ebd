//! Acceptance suite. Every check writes one `PASS` or `FAIL` line to stdout
//! (bypassing the test harness capture) and then asserts.

mod common;

use std::f64::consts::PI;
use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::{bands, quintic_all, random_coeffs, rel_err, rng, tmodel_oracle, zip_modes, I};
use nls_tmodel::diagnostics::{
    ground_state_reference, interval_mass, loglog_fit, REPORTED_GROUND_STATE_MASS,
};
use nls_tmodel::experiment::{simulate, simulate_all, summarize, RunOutcome, SweepSummary};
use nls_tmodel::integrator::integrate;
use nls_tmodel::spectral::{quintic_rhs, quintic_rhs_oracle};
use nls_tmodel::tmodel::{mass_dissipation_rate, tmodel_rhs};
use nls_tmodel::{
    Complex64, FullGalerkin, ModeBand, ModePartition, ModeSet, SolverConfig, SolverKind,
    SpectralState, StepControl,
};

const ORACLE_REL_TOL: f64 = 1e-12;
const ORACLE_MIN_CASES: usize = 100;
const ORACLE_MAX_RUNTIME: Duration = Duration::from_secs(60);

const PLANE_WAVE_TOLERANCE: f64 = 1e-10;
const PLANE_WAVE_REL_TOL: f64 = 1e-8;

const CONSERVATION_MASS_TOL: f64 = 1e-8;
const CONSERVATION_HAMILTONIAN_REL_TOL: f64 = 1e-6;
const CONSERVATION_MAX_RUNTIME: Duration = Duration::from_secs(300);

const IDENTITY_REL_TOL: f64 = 1e-10;
const IDENTITY_MIN_STATES: usize = 100;
const IDENTITY_FD_REL_TOL: f64 = 0.01;
/// The differenced mass carries up to about 1e-10 of integrator noise, so a
/// 1% comparison needs rates above this.
const IDENTITY_FD_RATE_FLOOR: f64 = 1e-8;
const IDENTITY_FD_MIN_POINTS: usize = 50;

const EVENT_AMPLITUDE: f64 = 1.80;
const EVENT_N: usize = 128;
const EVENT_T_END: f64 = 0.3;
const EVENT_T_PEAK_RANGE: [f64; 2] = [0.125, 0.145];
const EVENT_MONOTONE_TOL: f64 = 1e-8;
const EVENT_PLATEAU_REL_TOL: f64 = 1e-6;

const EXTENDED_N: usize = 512;
const EXTENDED_T_PEAK: f64 = 0.13508;
const EXTENDED_T_PEAK_TOL: f64 = 0.0005;
const EXTENDED_EJECTED: f64 = 0.446;
const EXTENDED_EJECTED_TOL: f64 = 0.02;

const GROUND_STATE_TOL: f64 = 1e-6;
const GROUND_STATE_MAX_DISCREPANCY: f64 = 0.01;

const CONCENTRATION_RESOLUTIONS: [usize; 2] = [128, 256];
const CONCENTRATION_HALF_WIDTH: f64 = 0.05;
const CONCENTRATION_RANGE: [f64; 2] = [2.4, 3.0];

const SWEEP_RESOLUTIONS: [usize; 4] = [16, 32, 64, 128];
const SWEEP_SNAPSHOTS: [f64; 2] = [0.1355, 0.75];
const SWEEP_T_END: f64 = 0.75;
const SWEEP_MIN_CORRELATION: f64 = 0.99;

const FIT_T_RANGE: [f64; 2] = [0.125, 0.145];
const FIT_SEARCH_SPAN: f64 = 0.1;
const FIT_SYNTHETIC_T: f64 = 0.13504;
const FIT_SYNTHETIC_AMPLITUDE: f64 = 0.7;
const FIT_SYNTHETIC_TOL: f64 = 1e-4;

fn verdict(name: &str, ok: bool, detail: String) {
    let line = format!("\n{} {name}: {detail}\n", if ok { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(ok, "{name}: {detail}");
}

fn event_config(n: usize) -> SolverConfig {
    SolverConfig {
        solver: SolverKind::TModel,
        amplitude: EVENT_AMPLITUDE,
        resolved_modes: n,
        t_end: EVENT_T_END,
        snapshot_times: Vec::new(),
        ..SolverConfig::default()
    }
}

fn event_run() -> &'static RunOutcome {
    static RUN: OnceLock<RunOutcome> = OnceLock::new();
    RUN.get_or_init(|| simulate(&event_config(EVENT_N)).expect("event run"))
}

fn sweep_summary() -> &'static SweepSummary {
    static SWEEP: OnceLock<SweepSummary> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let configs: Vec<SolverConfig> = SWEEP_RESOLUTIONS
            .iter()
            .map(|&n| {
                let mut c = event_config(n);
                c.t_end = SWEEP_T_END;
                c.snapshot_times = SWEEP_SNAPSHOTS.to_vec();
                c
            })
            .collect();
        let outcomes: Vec<RunOutcome> = simulate_all(&configs)
            .into_iter()
            .map(|r| r.expect("sweep run"))
            .collect();
        summarize(&outcomes)
    })
}

#[test]
fn oracle_equivalence() {
    let start = Instant::now();
    let mut r = rng(101);
    let mut cases = 0;
    let mut worst = 0.0_f64;
    for n in [4usize, 6, 8] {
        let p = ModePartition::new(n, 5).unwrap();
        let ((f0, f1), g) = bands(n);
        let f = ModeSet::interval(f0, f1);
        for _ in 0..40 {
            let u = random_coeffs(&mut r, n, 1.0);
            let state = ModeBand::from_vec(f0, u.clone());
            let q = quintic_all(&zip_modes(f0, &u));
            let direct: Vec<Complex64> = f
                .iter()
                .map(|k| {
                    I * q.get(&k).copied().unwrap_or_default() - I * (k * k) as f64 * state.get(k)
                })
                .collect();
            let fast = quintic_rhs(&state, &f, &f).unwrap();
            let slow = quintic_rhs_oracle(&state, &f, &f).unwrap();
            worst = worst.max(rel_err(fast.coeffs(), slow.coeffs()));
            worst = worst.max(rel_err(slow.coeffs(), &direct));

            let t = 0.1 + 0.02 * cases as f64;
            let b = tmodel_rhs(&SpectralState::new(state, t), &p).unwrap();
            let o = tmodel_oracle((f0, f1), g, &u);
            worst = worst.max(rel_err(b.total().coeffs(), &o.total(t)));
            cases += 1;
        }
    }
    let elapsed = start.elapsed();
    let ok = cases >= ORACLE_MIN_CASES && worst <= ORACLE_REL_TOL && elapsed < ORACLE_MAX_RUNTIME;
    verdict(
        "oracle equivalence",
        ok,
        format!("{cases} states, worst relative error {worst:.2e}, {elapsed:.1?}"),
    );
}

#[test]
fn exact_plane_wave() {
    let (amp, m) = (Complex64::new(0.5, 0.0), 1i64);
    let omega = amp.norm().powi(4) - (m * m) as f64;
    let p = ModePartition::new(8, 5).unwrap();
    let (lo, hi) = p.full_bounds();
    let band = ModeBand::from_fn(lo, hi, |k| {
        if k == m {
            amp
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let control = StepControl {
        tolerance: PLANE_WAVE_TOLERANCE,
        ..StepControl::default()
    };
    let traj = integrate(
        &SpectralState::new(band, 0.0),
        &mut FullGalerkin::new(p),
        1.0,
        &control,
        0.0,
    )
    .unwrap();
    let last = traj.states.last().unwrap();
    let exact = amp * Complex64::from_polar(1.0, omega);
    let err = (last.modes.get(m) - exact).norm() / exact.norm();
    let ok = traj.is_complete() && last.time == 1.0 && err <= PLANE_WAVE_REL_TOL;
    verdict(
        "exact plane wave",
        ok,
        format!("relative error {err:.2e} at t = {}", last.time),
    );
}

#[test]
fn subcritical_conservation() {
    let start = Instant::now();
    let c = SolverConfig {
        solver: SolverKind::FullGalerkin,
        amplitude: 0.5,
        resolved_modes: 64,
        t_end: 1.0,
        record_cadence: 1e-3,
        snapshot_times: Vec::new(),
        ..SolverConfig::default()
    };
    let run = simulate(&c).unwrap();
    let elapsed = start.elapsed();
    let m0 = run.records[0].mass_physical;
    let h0 = run.records[0].hamiltonian_quadrature;
    let mass_drift = run
        .records
        .iter()
        .map(|r| (r.mass_physical - m0).abs())
        .fold(0.0, f64::max);
    let h_drift = run
        .records
        .iter()
        .map(|r| (r.hamiltonian_quadrature - h0).abs() / h0.abs())
        .fold(0.0, f64::max);
    let ok = run.status.is_completed()
        && mass_drift < CONSERVATION_MASS_TOL
        && h_drift < CONSERVATION_HAMILTONIAN_REL_TOL
        && elapsed < CONSERVATION_MAX_RUNTIME;
    verdict(
        "subcritical conservation",
        ok,
        format!(
            "mass drift {mass_drift:.2e} (< {CONSERVATION_MASS_TOL:.0e}), hamiltonian relative drift {h_drift:.2e} (< {CONSERVATION_HAMILTONIAN_REL_TOL:.0e}), {elapsed:.1?}"
        ),
    );
}

#[test]
fn dissipation_identity() {
    let mut r = rng(202);
    let mut states = 0;
    let mut worst_state = 0.0_f64;
    for n in [4usize, 6, 8, 16] {
        let p = ModePartition::new(n, 5).unwrap();
        let ((f0, f1), g) = bands(n);
        for j in 0..30 {
            let u = random_coeffs(&mut r, n, 1.0);
            let t = 0.05 + 0.1 * j as f64;
            let b = tmodel_rhs(
                &SpectralState::new(ModeBand::from_vec(f0, u.clone()), t),
                &p,
            )
            .unwrap();
            let flux: f64 = u
                .iter()
                .zip(b.total().coeffs())
                .map(|(a, d)| 2.0 * (a.conj() * d).re)
                .sum();
            let g_norm: f64 = if n <= 8 {
                tmodel_oracle((f0, f1), g, &u)
                    .r
                    .values()
                    .map(|z| z.norm_sqr())
                    .sum()
            } else {
                -mass_dissipation_rate(&b) / (2.0 * t)
            };
            let rhs = -2.0 * t * g_norm;
            worst_state = worst_state.max((flux - rhs).abs() / rhs.abs());
            states += 1;
        }
    }

    let run = event_run();
    let [w0, w1] = run
        .events
        .first()
        .map(|e| e.window)
        .unwrap_or([f64::NAN; 2]);
    let rec = &run.records;
    let mut points = 0;
    let mut worst_fd = 0.0_f64;
    for i in 2..rec.len().saturating_sub(2) {
        let away = (i - 2..=i + 2).all(|j| rec[j].time < w0 || rec[j].time > w1);
        if !away || rec[i].dissipation_rate.abs() <= IDENTITY_FD_RATE_FLOOR {
            continue;
        }
        let h = rec[i + 1].time - rec[i].time;
        let m = |j: usize| rec[j].mass_discrete;
        let fd = (-m(i + 2) + 8.0 * m(i + 1) - 8.0 * m(i - 1) + m(i - 2)) / (12.0 * h);
        worst_fd =
            worst_fd.max((fd - rec[i].dissipation_rate).abs() / rec[i].dissipation_rate.abs());
        points += 1;
    }
    let ok = states >= IDENTITY_MIN_STATES
        && worst_state <= IDENTITY_REL_TOL
        && points >= IDENTITY_FD_MIN_POINTS
        && worst_fd <= IDENTITY_FD_REL_TOL;
    verdict(
        "dissipation identity",
        ok,
        format!(
            "{states} states, worst relative error {worst_state:.2e}; trajectory: {points} points, worst finite-difference mismatch {:.3}%",
            100.0 * worst_fd
        ),
    );
}

#[test]
fn ejection_event() {
    let run = event_run();
    let events = &run.events;
    let in_range = |t: f64| (EVENT_T_PEAK_RANGE[0]..=EVENT_T_PEAK_RANGE[1]).contains(&t);
    let masses: Vec<f64> = run.records.iter().map(|r| r.mass_physical).collect();
    let max_rise = masses
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let (pre, post) = match events.first() {
        Some(e) => {
            let before: Vec<f64> = run
                .records
                .iter()
                .filter(|r| r.time < e.window[0])
                .map(|r| r.mass_physical)
                .collect();
            let after: Vec<f64> = run
                .records
                .iter()
                .filter(|r| r.time > e.window[1])
                .map(|r| r.mass_physical)
                .collect();
            (plateau_spread(&before), plateau_spread(&after))
        }
        None => (f64::INFINITY, f64::INFINITY),
    };
    let t_peak = events.first().map(|e| e.t_peak).unwrap_or(f64::NAN);
    let ok = run.status.is_completed()
        && events.len() == 1
        && in_range(t_peak)
        && max_rise <= EVENT_MONOTONE_TOL
        && pre <= EVENT_PLATEAU_REL_TOL
        && post <= EVENT_PLATEAU_REL_TOL;
    verdict(
        "ejection event N=128",
        ok,
        format!(
            "{} event(s), t_peak {t_peak:.5}, largest mass rise {max_rise:.1e}, relative mass spread before window {pre:.2e}, after window {post:.2e} (limit {EVENT_PLATEAU_REL_TOL:.0e})",
            events.len()
        ),
    );
}

/// `(max - min) / first` over a run of masses.
fn plateau_spread(masses: &[f64]) -> f64 {
    match masses.first() {
        Some(&m0) => {
            let hi = masses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = masses.iter().copied().fold(f64::INFINITY, f64::min);
            (hi - lo) / m0
        }
        None => f64::INFINITY,
    }
}

#[test]
#[ignore = "multi-hour run"]
fn ejection_event_extended() {
    let run = simulate(&event_config(EXTENDED_N)).unwrap();
    let e = run.events.first();
    let t_peak = e.map(|e| e.t_peak).unwrap_or(f64::NAN);
    let ejected = e.map(|e| e.ejected).unwrap_or(f64::NAN);
    let ok = (t_peak - EXTENDED_T_PEAK).abs() <= EXTENDED_T_PEAK_TOL
        && (ejected - EXTENDED_EJECTED).abs() <= EXTENDED_EJECTED_TOL;
    verdict(
        "ejection event N=512",
        ok,
        format!("t_peak {t_peak:.5} (expected {EXTENDED_T_PEAK}), ejected {ejected:.4} (expected {EXTENDED_EJECTED})"),
    );
}

#[test]
fn ground_state() {
    let g = ground_state_reference();
    let derived = 3f64.sqrt() * PI / 2.0;
    let err = (g.mass - derived).abs();
    let gap = (REPORTED_GROUND_STATE_MASS - g.mass).abs() / g.mass;
    let ok = err <= GROUND_STATE_TOL && gap < GROUND_STATE_MAX_DISCREPANCY;
    verdict(
        "ground state",
        ok,
        format!(
            "quadrature mass {:.7} vs {derived:.7} (error {err:.1e}); reported {REPORTED_GROUND_STATE_MASS} differs by {:.3}%",
            g.mass,
            100.0 * gap
        ),
    );
}

#[test]
fn concentration_at_peak() {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in CONCENTRATION_RESOLUTIONS {
        let fresh;
        let run = if n == EVENT_N {
            event_run()
        } else {
            fresh = simulate(&event_config(n)).unwrap();
            &fresh
        };
        let peak = run.peak_state.as_ref();
        let mass = peak
            .map(|s| {
                interval_mass(
                    s,
                    PI - CONCENTRATION_HALF_WIDTH,
                    PI + CONCENTRATION_HALF_WIDTH,
                )
                .unwrap()
            })
            .unwrap_or(f64::NAN);
        let t = peak.map(|s| s.time).unwrap_or(f64::NAN);
        ok &= (CONCENTRATION_RANGE[0]..=CONCENTRATION_RANGE[1]).contains(&mass);
        parts.push(format!("N={n} t={t:.5} mass {mass:.4}"));
    }
    verdict(
        "concentration",
        ok,
        format!(
            "mass in [pi-0.05, pi+0.05] at t_peak: {} (range {:?})",
            parts.join(", "),
            CONCENTRATION_RANGE
        ),
    );
}

#[test]
fn resolution_trends() {
    let s = sweep_summary();
    let t = &s.trends;
    let mut ok = !s.partial;
    let mut parts = Vec::new();
    for fit in &t.tail_mass {
        let corr = fit.fit.as_ref().map(|f| f.correlation).unwrap_or(f64::NAN);
        let increasing = fit.increasing == Some(true);
        ok &= increasing && corr >= SWEEP_MIN_CORRELATION;
        let values: Vec<String> = s
            .rows
            .iter()
            .filter_map(|r| {
                r.tail_mass
                    .iter()
                    .find(|(tt, _)| *tt == fit.time)
                    .and_then(|(_, v)| *v)
            })
            .map(|v| format!("{v:.3e}"))
            .collect();
        parts.push(format!(
            "tail mass at t={} [{}] increasing={increasing} correlation={corr:.4}",
            fit.time,
            values.join(", ")
        ));
    }
    let post = t.post_gradient_increasing == Some(true);
    let converging = t.mass_after_converging == Some(true);
    ok &= post && converging;
    let after: Vec<String> = s
        .rows
        .iter()
        .map(|r| {
            r.mass_after
                .map(|m| format!("{m:.4}"))
                .unwrap_or_else(|| "-".into())
        })
        .collect();
    parts.push(format!("post-event gradient increasing={post}"));
    parts.push(format!(
        "mass_after [{}] converging={converging}",
        after.join(", ")
    ));
    verdict("resolution trends", ok, parts.join("; "));
}

#[test]
fn blowup_fit() {
    let run = event_run();
    let t_peak = run
        .events
        .first()
        .map(|e| e.t_peak)
        .unwrap_or(f64::INFINITY);
    let series: Vec<(f64, f64)> = run
        .records
        .iter()
        .filter(|r| r.time < t_peak)
        .map(|r| (r.time, r.gradient_l2))
        .collect();
    let t_last = series.last().map(|p| p.0).unwrap_or(0.0);
    let real = loglog_fit(&series, (t_last, t_last + FIT_SEARCH_SPAN));
    let t_fit = real.as_ref().map(|f| f.blowup_time).unwrap_or(f64::NAN);

    let synthetic: Vec<(f64, f64)> = (0..200)
        .map(|j| {
            let t = 0.05 + j as f64 * 0.0004;
            let tau: f64 = FIT_SYNTHETIC_T - t;
            (t, FIT_SYNTHETIC_AMPLITUDE * tau.ln().abs().ln() / tau)
        })
        .collect();
    let s_last = synthetic.last().unwrap().0;
    let fit = loglog_fit(&synthetic, (s_last, s_last + FIT_SEARCH_SPAN)).unwrap();
    let t_err = (fit.blowup_time - FIT_SYNTHETIC_T).abs();
    let a_err = (fit.amplitude - FIT_SYNTHETIC_AMPLITUDE).abs() / FIT_SYNTHETIC_AMPLITUDE;

    let ok = (FIT_T_RANGE[0]..=FIT_T_RANGE[1]).contains(&t_fit)
        && fit.loglog_preferred
        && t_err <= FIT_SYNTHETIC_TOL
        && a_err <= FIT_SYNTHETIC_TOL;
    verdict(
        "blow-up fit",
        ok,
        format!(
            "N=128 pre-event T_fit {t_fit:.5} from {} rows; synthetic T error {t_err:.1e}, amplitude relative error {a_err:.1e}, log-log preferred={}",
            series.len(),
            fit.loglog_preferred
        ),
    );
}
