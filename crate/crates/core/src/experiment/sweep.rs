use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::SolverConfig;
use super::run::{fmt_f64, now, simulate, write_lines, write_outputs, RunOutcome};
use crate::diagnostics::{linear_fit, tail_mass_signed, LinearFit};
use crate::error::{Error, Result};

/// Cross-resolution quantities for one resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub resolved_modes: usize,
    pub completed: bool,
    pub event_count: usize,
    pub t_peak: Option<f64>,
    pub mass_before: Option<f64>,
    pub mass_after: Option<f64>,
    pub ejected: Option<f64>,
    pub peak_gradient: f64,
    /// Mean `gradient_l2` over the post window.
    pub post_gradient_mean: Option<f64>,
    /// Standard deviation over mean of `gradient_l2` in the post window.
    pub post_gradient_rel_std: Option<f64>,
    pub post_hamiltonian_mean: Option<f64>,
    /// Post-window mean Hamiltonian minus the initial Hamiltonian.
    pub hamiltonian_jump: Option<f64>,
    /// `(time, tail mass)` at each snapshot time.
    pub tail_mass: Vec<(f64, Option<f64>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub time: f64,
    pub increasing: Option<bool>,
    pub fit: Option<LinearFit>,
}

/// Pass/fail of each resolution trend. `None` means the check is vacuous:
/// fewer than two resolutions, or no ejection at any resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendChecks {
    pub tail_mass: Vec<TailFit>,
    pub peak_gradient_increasing: Option<bool>,
    pub post_gradient_increasing: Option<bool>,
    pub hamiltonian_jump_increasing: Option<bool>,
    /// `|mass_after(N) - mass_after(2N)|` strictly decreasing in `N`.
    pub mass_after_converging: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub partial: bool,
    pub rows: Vec<SweepRow>,
    pub trends: TrendChecks,
}

fn strictly_increasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] > w[0])
}

/// `Some(check)` when every value is present and there are at least two.
fn trend(values: Vec<Option<f64>>, check: impl Fn(&[f64]) -> bool) -> Option<bool> {
    let values: Option<Vec<f64>> = values.into_iter().collect();
    match values {
        Some(v) if v.len() >= 2 => Some(check(&v)),
        Some(_) => None,
        // an event is missing at some resolution while present at others
        None => Some(false),
    }
}

fn post_window_stats(outcome: &RunOutcome) -> (Option<f64>, Option<f64>, Option<f64>) {
    let [lo, hi] = outcome.config.post_window;
    let rows: Vec<_> = outcome
        .records
        .iter()
        .filter(|r| r.time >= lo && r.time <= hi)
        .collect();
    if rows.is_empty() {
        return (None, None, None);
    }
    let n = rows.len() as f64;
    let g_mean = rows.iter().map(|r| r.gradient_l2).sum::<f64>() / n;
    let g_var = rows
        .iter()
        .map(|r| (r.gradient_l2 - g_mean).powi(2))
        .sum::<f64>()
        / n;
    let h_mean = rows.iter().map(|r| r.hamiltonian_quadrature).sum::<f64>() / n;
    (Some(g_mean), Some(g_var.sqrt() / g_mean), Some(h_mean))
}

pub fn sweep_row(outcome: &RunOutcome) -> SweepRow {
    let event = outcome.events.last();
    let first = outcome.events.first();
    let (post_gradient_mean, post_gradient_rel_std, post_hamiltonian_mean) =
        post_window_stats(outcome);
    let h0 = outcome.records.first().map(|r| r.hamiltonian_quadrature);
    let config = &outcome.config;
    SweepRow {
        resolved_modes: outcome.partition.resolved_count(),
        completed: outcome.status.is_completed(),
        event_count: outcome.events.len(),
        t_peak: first.map(|e| e.t_peak),
        mass_before: first.map(|e| e.mass_before),
        mass_after: event.map(|e| e.mass_after),
        ejected: match (first, event) {
            (Some(a), Some(b)) => Some(a.mass_before - b.mass_after),
            _ => None,
        },
        peak_gradient: outcome
            .records
            .iter()
            .map(|r| r.gradient_l2)
            .fold(0.0, f64::max),
        post_gradient_mean,
        post_gradient_rel_std,
        post_hamiltonian_mean,
        hamiltonian_jump: post_hamiltonian_mean.zip(h0).map(|(h, h0)| h - h0),
        tail_mass: config
            .snapshot_times
            .iter()
            .map(|&t| {
                (
                    t,
                    outcome
                        .snapshot_at(t)
                        .map(|s| tail_mass_signed(s, config.tail_k_min, config.tail_sign)),
                )
            })
            .collect(),
    }
}

/// Cross-resolution tables and trend checks for outcomes sorted by `N`.
pub fn summarize(outcomes: &[RunOutcome]) -> SweepSummary {
    let mut rows: Vec<SweepRow> = outcomes.iter().map(sweep_row).collect();
    rows.sort_by_key(|r| r.resolved_modes);
    let partial = rows.iter().any(|r| !r.completed);
    let ns: Vec<f64> = rows.iter().map(|r| r.resolved_modes as f64).collect();

    let any_events = rows.iter().any(|r| r.event_count > 0);
    let comparable = any_events && rows.len() >= 2;

    let times: Vec<f64> = rows
        .first()
        .map(|r| r.tail_mass.iter().map(|(t, _)| *t).collect())
        .unwrap_or_default();
    let tail_mass = times
        .iter()
        .enumerate()
        .map(|(i, &time)| {
            let values: Option<Vec<f64>> = rows.iter().map(|r| r.tail_mass[i].1).collect();
            match values {
                Some(v) if comparable => TailFit {
                    time,
                    increasing: Some(strictly_increasing(&v)),
                    fit: linear_fit(&ns, &v).ok(),
                },
                None if comparable => TailFit {
                    time,
                    increasing: Some(false),
                    fit: None,
                },
                _ => TailFit {
                    time,
                    increasing: None,
                    fit: None,
                },
            }
        })
        .collect();

    let mass_after_diffs: Vec<Option<f64>> = rows
        .iter()
        .filter_map(|r| {
            let twice = rows
                .iter()
                .find(|s| s.resolved_modes == 2 * r.resolved_modes)?;
            Some(
                r.mass_after
                    .zip(twice.mass_after)
                    .map(|(a, b)| (a - b).abs()),
            )
        })
        .collect();
    let gate = |check: Option<bool>| if comparable { check } else { None };

    let trends = TrendChecks {
        tail_mass,
        peak_gradient_increasing: gate(trend(
            rows.iter().map(|r| Some(r.peak_gradient)).collect(),
            strictly_increasing,
        )),
        post_gradient_increasing: gate(trend(
            rows.iter().map(|r| r.post_gradient_mean).collect(),
            strictly_increasing,
        )),
        hamiltonian_jump_increasing: gate(trend(
            rows.iter()
                .map(|r| r.hamiltonian_jump.map(f64::abs))
                .collect(),
            strictly_increasing,
        )),
        mass_after_converging: gate(trend(mass_after_diffs, |d| {
            d.windows(2).all(|w| w[1] < w[0])
        })),
    };
    SweepSummary {
        partial,
        rows,
        trends,
    }
}

/// Configurations for each resolution, each writing into `<output_dir>/N<n>`.
pub fn sweep_configs(base: &SolverConfig, resolutions: &[usize]) -> Vec<SolverConfig> {
    resolutions
        .iter()
        .map(|&n| {
            let mut c = base.clone();
            c.resolved_modes = n;
            c.output_dir = base.output_dir.join(format!("N{n}"));
            c.label = format!("{}-N{n}", base.label);
            c
        })
        .collect()
}

/// Simulates every resolution concurrently, one thread per run.
pub fn simulate_all(configs: &[SolverConfig]) -> Vec<Result<RunOutcome>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|c| scope.spawn(move || simulate(c)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    })
}

pub fn write_sweep(summary: &SweepSummary, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let times: Vec<f64> = summary
        .rows
        .first()
        .map(|r| r.tail_mass.iter().map(|(t, _)| *t).collect())
        .unwrap_or_default();
    let mut header = String::from(
        "N,completed,event_count,t_peak,mass_before,mass_after,ejected,peak_gradient,post_gradient_mean,post_gradient_rel_std,post_hamiltonian_mean,hamiltonian_jump",
    );
    for t in &times {
        header.push_str(&format!(",tail_mass_t{}", super::run::time_tag(*t)));
    }
    write_lines(
        &dir.join("sweep.csv"),
        &header,
        summary.rows.iter().map(|r| {
            let mut line = format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.resolved_modes,
                r.completed,
                r.event_count,
                opt(r.t_peak),
                opt(r.mass_before),
                opt(r.mass_after),
                opt(r.ejected),
                fmt_f64(r.peak_gradient),
                opt(r.post_gradient_mean),
                opt(r.post_gradient_rel_std),
                opt(r.post_hamiltonian_mean),
                opt(r.hamiltonian_jump),
            );
            for (_, v) in &r.tail_mass {
                line.push(',');
                line.push_str(&opt(*v));
            }
            line
        }),
    )?;
    fs::write(
        dir.join("sweep.json"),
        serde_json::to_string_pretty(summary)?,
    )?;
    Ok(())
}

/// Runs `base` at every resolution, writes each run's files plus
/// `sweep.csv` / `sweep.json` into `base.output_dir`.
pub fn sweep(base: &SolverConfig, resolutions: &[usize]) -> Result<SweepSummary> {
    if resolutions.is_empty() {
        return Err(Error::config("resolutions", "must not be empty"));
    }
    base.validate()?;
    let configs = sweep_configs(base, resolutions);
    for c in &configs {
        c.validate()?;
    }
    let started = now();
    let results = simulate_all(&configs);
    let mut outcomes = Vec::new();
    let mut failed = false;
    for (config, result) in configs.iter().zip(results) {
        match result {
            Ok(outcome) => {
                write_outputs(&outcome, &config.output_dir, started.clone())?;
                outcomes.push(outcome);
            }
            Err(_) => failed = true,
        }
    }
    let mut summary = summarize(&outcomes);
    summary.partial |= failed;
    write_sweep(&summary, &base.output_dir)?;
    Ok(summary)
}
