use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{SolverConfig, SolverKind};
use crate::diagnostics::{
    adaptive_simpson, detect_ejection_with, spectrum, DiagnosticsRecord, EjectionEvent, Meter,
    RateSample,
};
use crate::error::Result;
use crate::galerkin::FullGalerkin;
use crate::integrator::{integrate_with, IntegrationStatus, OdeSystem};
use crate::spectral::{initial_condition, ModeBand, ModePartition, SpectralState};
use crate::tmodel::TModel;

pub const TIMESERIES_HEADER: &str = "time,dt,mass_physical,mass_discrete,hamiltonian_quadrature,hamiltonian_spectral,gradient_l2,dissipation_rate,tail_mass";

/// Everything a finished (or stalled) simulation produced, kept in memory.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub config: SolverConfig,
    pub partition: ModePartition,
    pub records: Vec<DiagnosticsRecord>,
    /// Full Galerkin runs only: the same rows measured on `F` alone.
    pub resolved_records: Option<Vec<DiagnosticsRecord>>,
    pub events: Vec<EjectionEvent>,
    /// States at the initial time, each configured snapshot time and the end.
    pub snapshots: Vec<SpectralState>,
    /// State at the record with the largest `|dissipation_rate|`.
    pub peak_state: Option<SpectralState>,
    pub status: IntegrationStatus,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evals: usize,
    pub dt_history: Vec<f64>,
    /// Continuum mass of the initial Gaussian minus the mass of its projection.
    pub initial_mass_defect: f64,
}

impl RunOutcome {
    pub fn snapshot_at(&self, t: f64) -> Option<&SpectralState> {
        self.snapshots
            .iter()
            .find(|s| (s.time - t).abs() <= 1e-12 * t.abs().max(1.0))
    }

    pub fn rate_samples(&self) -> Vec<RateSample> {
        self.records
            .iter()
            .map(|r| RateSample {
                time: r.time,
                rate: r.dissipation_rate,
                mass: r.mass_physical,
            })
            .collect()
    }
}

enum System {
    Galerkin(FullGalerkin),
    TModel(TModel),
}

impl OdeSystem for System {
    fn rhs(&mut self, t: f64, y: &[Complex64], dy: &mut [Complex64]) {
        match self {
            System::Galerkin(s) => s.rhs(t, y, dy),
            System::TModel(s) => s.rhs(t, y, dy),
        }
    }
}

fn continuum_mass(amplitude: f64) -> f64 {
    let f = |x: f64| amplitude * amplitude * (-2.0 * (x - PI).powi(2)).exp();
    adaptive_simpson(&f, 0.0, 2.0 * PI, 1e-14)
}

/// Integrates one configuration and measures it at every record time.
/// `on_record` sees each diagnostics row as soon as it is computed.
pub fn simulate_with<F>(config: &SolverConfig, mut on_record: F) -> Result<RunOutcome>
where
    F: FnMut(&DiagnosticsRecord),
{
    config.validate()?;
    let partition = config.partition()?;
    let full_state = initial_condition(config.amplitude, &partition)?;
    let initial = match config.solver {
        SolverKind::FullGalerkin => full_state,
        SolverKind::TModel => full_state.restricted(&partition.resolved()),
    };
    let initial_mass_defect =
        continuum_mass(config.amplitude) - 2.0 * PI * initial.modes.norm_sqr_sum();

    let mut system = match config.solver {
        SolverKind::FullGalerkin => System::Galerkin(FullGalerkin::new(partition)),
        SolverKind::TModel => System::TModel(TModel::new(partition)),
    };
    let mut probe = match config.solver {
        SolverKind::TModel => Some(TModel::new(partition)),
        SolverKind::FullGalerkin => None,
    };
    let resolved = partition.resolved();
    let mut meter = Meter::new(config.measure_options());
    let mut resolved_meter = Meter::new(config.measure_options());

    let lo = initial.modes.lo();
    let mut records = Vec::new();
    let mut resolved_records = Vec::new();
    let mut snapshots = Vec::new();
    let mut peak: Option<(f64, SpectralState)> = None;
    let eps = 1e-12 * config.t_end.max(1.0);
    let wanted = |t: f64| {
        t == 0.0
            || (t - config.t_end).abs() <= eps
            || config.snapshot_times.iter().any(|&s| (s - t).abs() <= eps)
    };

    let summary = integrate_with(
        &mut system,
        initial.modes.coeffs().to_vec(),
        initial.time,
        config.t_end,
        &config.control,
        config.record_cadence,
        &config.snapshot_times,
        |point| {
            let state =
                SpectralState::new(ModeBand::from_vec(lo, point.state.to_vec()), point.time);
            let breakdown = probe
                .as_mut()
                .map(|m| m.breakdown(&state).expect("state lives on F"));
            let record = meter.measure(&state, breakdown.as_ref(), point.dt);
            on_record(&record);
            if config.solver == SolverKind::FullGalerkin {
                let restricted = state.restricted(&resolved);
                resolved_records.push(resolved_meter.measure(&restricted, None, point.dt));
            }
            let rate = record.dissipation_rate.abs();
            if rate > 0.0 && peak.as_ref().is_none_or(|(best, _)| rate > *best) {
                peak = Some((rate, state.clone()));
            }
            if wanted(point.time) {
                snapshots.push(state);
            }
            records.push(record);
        },
    )?;

    let events = match config.solver {
        SolverKind::TModel => {
            let samples: Vec<RateSample> = records
                .iter()
                .map(|r| RateSample {
                    time: r.time,
                    rate: r.dissipation_rate,
                    mass: r.mass_physical,
                })
                .collect();
            detect_ejection_with(&samples, &config.ejection)
        }
        SolverKind::FullGalerkin => Vec::new(),
    };

    Ok(RunOutcome {
        config: config.clone(),
        partition,
        records,
        resolved_records: (config.solver == SolverKind::FullGalerkin).then_some(resolved_records),
        events,
        snapshots,
        peak_state: peak.map(|(_, s)| s),
        status: summary.status,
        accepted_steps: summary.accepted_steps,
        rejected_steps: summary.rejected_steps,
        rhs_evals: summary.rhs_evals,
        dt_history: summary.dt_history,
        initial_mass_defect,
    })
}

pub fn simulate(config: &SolverConfig) -> Result<RunOutcome> {
    simulate_with(config, |_| {})
}

/// 17 significant digits.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Short, file-name friendly rendering of a time: `0.1355`, `0.75`, `0`.
pub fn time_tag(t: f64) -> String {
    let s = format!("{t:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() {
        "0".into()
    } else {
        s.to_string()
    }
}

pub fn timeseries_row(r: &DiagnosticsRecord) -> String {
    [
        r.time,
        r.dt,
        r.mass_physical,
        r.mass_discrete,
        r.hamiltonian_quadrature,
        r.hamiltonian_spectral,
        r.gradient_l2,
        r.dissipation_rate,
        r.tail_mass,
    ]
    .iter()
    .map(|&v| fmt_f64(v))
    .collect::<Vec<_>>()
    .join(",")
}

/// Appends complete lines only: each row is handed to the OS in one write.
pub(crate) struct RowWriter {
    file: File,
}

impl RowWriter {
    pub(crate) fn create(path: &Path, header: &str) -> Result<Self> {
        let mut file = File::create(path)?;
        file.write_all(format!("{header}\n").as_bytes())?;
        Ok(Self { file })
    }

    pub(crate) fn row(&mut self, line: &str) -> Result<()> {
        let mut buf = String::with_capacity(line.len() + 1);
        buf.push_str(line);
        buf.push('\n');
        self.file.write_all(buf.as_bytes())?;
        Ok(())
    }
}

pub(crate) fn write_lines(
    path: &Path,
    header: &str,
    rows: impl IntoIterator<Item = String>,
) -> Result<()> {
    let mut body = String::new();
    body.push_str(header);
    body.push('\n');
    for r in rows {
        body.push_str(&r);
        body.push('\n');
    }
    fs::write(path, body)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: SolverConfig,
    pub code_version: String,
    pub started: String,
    pub finished: String,
    pub completed: bool,
    pub integration: IntegrationStatus,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evals: usize,
    pub event_count: usize,
    pub initial_mass_defect: f64,
    pub files: Vec<FileEntry>,
}

pub(crate) fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub(crate) fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

/// Physical `|u(x)|` on a grid of `4K` points.
fn solution_rows(state: &SpectralState, partition: &ModePartition) -> Result<Vec<String>> {
    let m = 4 * partition.total_count();
    let field = state.to_physical(m)?;
    Ok(field
        .samples
        .iter()
        .enumerate()
        .map(|(j, u)| format!("{},{}", fmt_f64(field.x(j)), fmt_f64(u.norm())))
        .collect())
}

/// Writes the per-run files of an already simulated outcome into `dir`.
pub fn write_outputs(outcome: &RunOutcome, dir: &Path, started: String) -> Result<RunManifest> {
    fs::create_dir_all(dir)?;

    let ts = dir.join("timeseries.csv");
    write_lines(
        &ts,
        TIMESERIES_HEADER,
        outcome.records.iter().map(timeseries_row),
    )?;
    write_remaining(outcome, dir, started, vec![ts])
}

fn write_remaining(
    outcome: &RunOutcome,
    dir: &Path,
    started: String,
    mut written: Vec<PathBuf>,
) -> Result<RunManifest> {
    if let Some(resolved) = &outcome.resolved_records {
        let path = dir.join("timeseries_resolved.csv");
        write_lines(
            &path,
            TIMESERIES_HEADER,
            resolved.iter().map(timeseries_row),
        )?;
        written.push(path);
    }
    written.extend(write_snapshots(outcome, dir)?);
    let events = dir.join("events.json");
    fs::write(&events, serde_json::to_string_pretty(&outcome.events)?)?;
    written.push(events);
    finish_manifest(outcome, dir, started, &written)
}

fn write_snapshots(outcome: &RunOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for snap in &outcome.snapshots {
        let tag = time_tag(snap.time);
        let spectrum_path = dir.join(format!("spectrum_t{tag}.csv"));
        write_lines(
            &spectrum_path,
            "k,mass",
            spectrum(snap)
                .into_iter()
                .map(|(k, m)| format!("{k},{}", fmt_f64(m))),
        )?;
        written.push(spectrum_path);
        let sol = dir.join(format!("solution_t{tag}.csv"));
        write_lines(&sol, "x,abs_u", solution_rows(snap, &outcome.partition)?)?;
        written.push(sol);
    }
    Ok(written)
}

fn finish_manifest(
    outcome: &RunOutcome,
    dir: &Path,
    started: String,
    written: &[PathBuf],
) -> Result<RunManifest> {
    let files = written
        .iter()
        .map(|p| {
            Ok(FileEntry {
                path: p
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                sha256: sha256_file(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        config: outcome.config.clone(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        started,
        finished: now(),
        completed: outcome.status.is_completed(),
        integration: outcome.status.clone(),
        accepted_steps: outcome.accepted_steps,
        rejected_steps: outcome.rejected_steps,
        rhs_evals: outcome.rhs_evals,
        event_count: outcome.events.len(),
        initial_mass_defect: outcome.initial_mass_defect,
        files,
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

/// Runs one configuration, streaming `timeseries.csv` while integrating and
/// writing the remaining files afterwards into `config.output_dir`.
pub fn run(config: &SolverConfig) -> Result<RunManifest> {
    config.validate()?;
    let started = now();
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir)?;
    let ts = dir.join("timeseries.csv");
    let mut writer = RowWriter::create(&ts, TIMESERIES_HEADER)?;
    let mut io_error = None;
    let outcome = simulate_with(config, |r| {
        if io_error.is_none() {
            if let Err(e) = writer.row(&timeseries_row(r)) {
                io_error = Some(e);
            }
        }
    })?;
    if let Some(e) = io_error {
        return Err(e);
    }

    write_remaining(&outcome, &dir, started, vec![ts])
}
