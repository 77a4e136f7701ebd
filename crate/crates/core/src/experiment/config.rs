use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{EjectionOptions, MeasureOptions, TailSign};
use crate::error::{Error, Result};
use crate::integrator::{Propagation, StepControl};
use crate::spectral::ModePartition;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    FullGalerkin,
    TModel,
}

impl FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "galerkin" | "full_galerkin" | "full" => Ok(SolverKind::FullGalerkin),
            "tmodel" | "t_model" | "t-model" => Ok(SolverKind::TModel),
            other => Err(format!(
                "unknown solver `{other}` (expected galerkin or tmodel)"
            )),
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::FullGalerkin => "galerkin",
            SolverKind::TModel => "tmodel",
        })
    }
}

/// Everything needed to reproduce one run.
///
/// Config files are flat TOML; every key below may also be given on the
/// command line as `--set KEY=VALUE`.
///
/// | key | default | meaning |
/// |-----|---------|---------|
/// | `solver` | `tmodel` | `galerkin` or `tmodel` |
/// | `A` | 1.80 | initial amplitude |
/// | `N` | 64 | resolved modes |
/// | `ratio` | 5 | `K / N` |
/// | `t_end` | 0.75 | final time |
/// | `record_cadence` | 1e-4 | spacing of diagnostics rows |
/// | `tolerance` | 1e-10 | RKF45 error tolerance |
/// | `dt_init`, `dt_min`, `dt_max` | 1e-6, 1e-9, 1e-3 | step bounds |
/// | `safety`, `max_growth` | 0.9, 5 | controller constants |
/// | `max_steps` | 1e8 | attempted step budget |
/// | `propagate` | `fifth` | `fifth` or `fourth` |
/// | `tail_k_min` | 25 | tail-mass cutoff |
/// | `tail_signed` | false | count only `k >= tail_k_min` |
/// | `window_lo`, `window_hi` | π∓0.05 | concentration window |
/// | `snapshot_times` | [0.1355, 0.75] | spectrum/solution dumps |
/// | `ejection_threshold` | 100 | peak / median rate ratio |
/// | `ejection_min_peak_fraction` | 0.01 | peak / largest rate ratio |
/// | `ejection_window_fraction` | 0.01 | window edge / peak ratio |
/// | `ejection_edge_samples` | 50 | rows averaged beside the window |
/// | `post_lo`, `post_hi` | 0.3, 0.75 | post-event averaging interval |
/// | `resolutions` | [16, 32, 64, 128] | sweep resolutions |
/// | `output_dir` | `out` | output directory |
/// | `label` | `run` | run label |
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub solver: SolverKind,
    pub amplitude: f64,
    pub resolved_modes: usize,
    pub ratio: usize,
    pub t_end: f64,
    pub record_cadence: f64,
    pub control: StepControl,
    pub tail_k_min: i64,
    pub tail_sign: TailSign,
    pub window: [f64; 2],
    pub snapshot_times: Vec<f64>,
    pub ejection: EjectionOptions,
    pub post_window: [f64; 2],
    pub resolutions: Vec<usize>,
    pub output_dir: PathBuf,
    pub label: String,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            solver: SolverKind::TModel,
            amplitude: 1.80,
            resolved_modes: 64,
            ratio: ModePartition::DEFAULT_RATIO,
            t_end: 0.75,
            record_cadence: 1e-4,
            control: StepControl::default(),
            tail_k_min: 25,
            tail_sign: TailSign::Symmetric,
            window: [PI - 0.05, PI + 0.05],
            snapshot_times: vec![0.1355, 0.75],
            ejection: EjectionOptions {
                min_peak_fraction: 0.01,
                ..EjectionOptions::default()
            },
            post_window: [0.3, 0.75],
            resolutions: vec![16, 32, 64, 128],
            output_dir: PathBuf::from("out"),
            label: "run".into(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str, what: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(key, format!("expected {what}, got `{value}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str, what: &str) -> Result<Vec<T>> {
    let trimmed = value.trim().trim_start_matches('[').trim_end_matches(']');
    if trimmed.trim().is_empty() {
        return Ok(Vec::new());
    }
    trimmed.split(',').map(|v| parse(key, v, what)).collect()
}

impl SolverConfig {
    /// Applies one `KEY=VALUE` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let c = &mut self.control;
        match key {
            "solver" => {
                self.solver = value.parse().map_err(|e: String| Error::config(key, e))?;
            }
            "A" | "amplitude" => self.amplitude = parse(key, value, "a number")?,
            "N" | "resolved_modes" => self.resolved_modes = parse(key, value, "an integer")?,
            "ratio" => self.ratio = parse(key, value, "an integer")?,
            "t_end" => self.t_end = parse(key, value, "a number")?,
            "record_cadence" => self.record_cadence = parse(key, value, "a number")?,
            "tolerance" => c.tolerance = parse(key, value, "a number")?,
            "dt_init" => c.dt_init = parse(key, value, "a number")?,
            "dt_min" => c.dt_min = parse(key, value, "a number")?,
            "dt_max" => c.dt_max = parse(key, value, "a number")?,
            "safety" => c.safety = parse(key, value, "a number")?,
            "max_growth" => c.max_growth = parse(key, value, "a number")?,
            "max_steps" => c.max_steps = parse(key, value, "an integer")?,
            "propagate" => {
                c.propagate = match value.trim() {
                    "fifth" | "5" => Propagation::Fifth,
                    "fourth" | "4" => Propagation::Fourth,
                    _ => return Err(Error::config(key, "expected `fifth` or `fourth`")),
                }
            }
            "tail_k_min" => self.tail_k_min = parse(key, value, "an integer")?,
            "tail_signed" => {
                let signed: bool = parse(key, value, "true or false")?;
                self.tail_sign = if signed {
                    TailSign::Positive
                } else {
                    TailSign::Symmetric
                };
            }
            "window_lo" => self.window[0] = parse(key, value, "a number")?,
            "window_hi" => self.window[1] = parse(key, value, "a number")?,
            "snapshot_times" => self.snapshot_times = parse_list(key, value, "a list of numbers")?,
            "ejection_threshold" => self.ejection.threshold_ratio = parse(key, value, "a number")?,
            "ejection_min_peak_fraction" => {
                self.ejection.min_peak_fraction = parse(key, value, "a number")?
            }
            "ejection_window_fraction" => {
                self.ejection.window_fraction = parse(key, value, "a number")?
            }
            "ejection_edge_samples" => {
                self.ejection.edge_samples = parse(key, value, "an integer")?
            }
            "post_lo" => self.post_window[0] = parse(key, value, "a number")?,
            "post_hi" => self.post_window[1] = parse(key, value, "a number")?,
            "resolutions" => self.resolutions = parse_list(key, value, "a list of integers")?,
            "output_dir" => self.output_dir = PathBuf::from(value.trim()),
            "label" => self.label = value.trim().to_string(),
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Applies a `KEY=VALUE` string as given on the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(assignment, "expected KEY=VALUE"))?;
        self.set(key.trim(), value)
    }

    fn set_toml(&mut self, key: &str, value: &toml::Value) -> Result<()> {
        let text = match value {
            toml::Value::String(s) => s.clone(),
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(b) => b.to_string(),
            toml::Value::Array(items) => {
                let parts: Result<Vec<String>> = items
                    .iter()
                    .map(|v| match v {
                        toml::Value::Integer(i) => Ok(i.to_string()),
                        toml::Value::Float(f) => Ok(f.to_string()),
                        _ => Err(Error::config(key, "lists may only hold numbers")),
                    })
                    .collect();
                parts?.join(",")
            }
            _ => return Err(Error::config(key, "nested tables are not supported")),
        };
        self.set(key, &text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Input {
            path: "<config>".into(),
            reason: e.to_string(),
        })?;
        let mut config = SolverConfig::default();
        for (key, value) in &table {
            config.set_toml(key, value)?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Input {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Input { reason, .. } => Error::Input {
                path: path.display().to_string(),
                reason,
            },
            other => other,
        })
    }

    pub fn partition(&self) -> Result<ModePartition> {
        ModePartition::new(self.resolved_modes, self.ratio)
            .map_err(|e| Error::config("N", e.to_string()))
    }

    pub fn measure_options(&self) -> MeasureOptions {
        MeasureOptions {
            tail_k_min: self.tail_k_min,
            tail_sign: self.tail_sign,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.partition()?;
        let positive = [
            ("A", self.amplitude),
            ("t_end", self.t_end),
            ("record_cadence", self.record_cadence),
            ("tolerance", self.control.tolerance),
            ("ejection_threshold", self.ejection.threshold_ratio),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, format!("must be positive, got {v}")));
            }
        }
        self.control
            .validate()
            .map_err(|e| Error::config("dt_min/dt_init/dt_max", e.to_string()))?;
        if self.tail_k_min < 0 {
            return Err(Error::config("tail_k_min", "must be non-negative"));
        }
        if !(0.0 <= self.window[0] && self.window[0] < self.window[1] && self.window[1] <= 2.0 * PI)
        {
            return Err(Error::config(
                "window_lo",
                "window must satisfy 0 <= lo < hi <= 2π",
            ));
        }
        if self.snapshot_times.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::config(
                "snapshot_times",
                "times must be non-negative",
            ));
        }
        if !(self.post_window[0] < self.post_window[1]) {
            return Err(Error::config("post_lo", "post window must satisfy lo < hi"));
        }
        if self.label.is_empty() {
            return Err(Error::config("label", "must not be empty"));
        }
        Ok(())
    }
}
