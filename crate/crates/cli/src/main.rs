use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nls_tmodel::diagnostics::{ground_state_reference, loglog_fit, TailSign};
use nls_tmodel::experiment::{run, sweep, SolverConfig, SolverKind};
use nls_tmodel::Error;

#[derive(Parser)]
#[command(
    name = "nls-tmodel",
    version,
    about = "Focusing quintic NLS: full Galerkin and t-model runs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one configuration and write its data files.
    Run(RunArgs),
    /// Run a configuration at several resolutions and compare them.
    Sweep(SweepArgs),
    /// Print the ground-state reference values.
    GroundState,
    /// Fit the log-log blow-up law to the gradient column of a timeseries.csv.
    FitBlowup(FitArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set N=64`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["galerkin", "tmodel"])]
    solver: Option<String>,
    /// Count only positive wavenumbers in tail_mass.
    #[arg(long)]
    tail_signed: bool,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated resolved-mode counts; defaults to the config's list.
    #[arg(long, value_delimiter = ',')]
    resolutions: Option<Vec<usize>>,
}

#[derive(Args)]
struct FitArgs {
    /// Path to a timeseries.csv.
    timeseries: PathBuf,
    /// Ignore rows before this time.
    #[arg(long, default_value_t = 0.0)]
    t_min: f64,
    /// Ignore rows after this time; defaults to the time of maximal gradient.
    #[arg(long)]
    t_max: Option<f64>,
    /// Upper end of the blow-up time search; defaults to the last row + 0.1.
    #[arg(long)]
    search_max: Option<f64>,
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::InvalidArgument(_) | Error::Input { .. } => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Run(other.to_string()),
        }
    }
}

fn build_config(args: &CommonArgs) -> Result<SolverConfig, Failure> {
    let mut config = match &args.config {
        Some(path) => SolverConfig::load(path)?,
        None => SolverConfig::default(),
    };
    for assignment in &args.overrides {
        config.apply_override(assignment)?;
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    if let Some(solver) = &args.solver {
        config.solver = solver.parse::<SolverKind>().map_err(Failure::Usage)?;
    }
    if args.tail_signed {
        config.tail_sign = TailSign::Positive;
    }
    config.validate()?;
    Ok(config)
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let config = build_config(&args.common)?;
    let manifest = run(&config)?;
    if !args.common.quiet {
        println!(
            "{}: {} accepted steps, {} events, output in {}",
            if manifest.completed {
                "completed"
            } else {
                "incomplete"
            },
            manifest.accepted_steps,
            manifest.event_count,
            config.output_dir.display()
        );
    }
    if manifest.completed {
        Ok(())
    } else {
        Err(Failure::Run(format!(
            "integration did not finish: {:?}",
            manifest.integration
        )))
    }
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Failure> {
    let config = build_config(&args.common)?;
    let resolutions = args
        .resolutions
        .clone()
        .unwrap_or_else(|| config.resolutions.clone());
    let summary = sweep(&config, &resolutions)?;
    if !args.common.quiet {
        println!(
            "{}",
            serde_json::to_string_pretty(&summary.trends).expect("serialisable")
        );
    }
    if summary.partial {
        Err(Failure::Run("at least one resolution failed".into()))
    } else {
        Ok(())
    }
}

fn read_gradient_series(path: &Path) -> Result<Vec<(f64, f64)>, Failure> {
    let bad = |reason: String| Failure::Usage(format!("{}: {reason}", path.display()));
    let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad("empty file".into()))?
        .split(',')
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| bad(format!("missing column `{name}`")))
    };
    let (ti, gi) = (col("time")?, col("gradient_l2")?);
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            let parse = |j: usize| {
                fields
                    .get(j)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| bad(format!("malformed row {}", i + 2)))
            };
            Ok((parse(ti)?, parse(gi)?))
        })
        .collect()
}

fn cmd_fit(args: &FitArgs) -> Result<(), Failure> {
    let rows = read_gradient_series(&args.timeseries)?;
    let t_max = args.t_max.unwrap_or_else(|| {
        rows.iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map_or(f64::INFINITY, |r| r.0)
    });
    let series: Vec<(f64, f64)> = rows
        .into_iter()
        .filter(|&(t, _)| t >= args.t_min && t < t_max)
        .collect();
    let t_last = series.last().map_or(0.0, |r| r.0);
    let fit = loglog_fit(&series, (t_last, args.search_max.unwrap_or(t_last + 0.1)))?;
    println!(
        "{}",
        serde_json::to_string_pretty(&fit).expect("serialisable")
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::GroundState => {
            let g = ground_state_reference();
            println!(
                "{}",
                serde_json::to_string_pretty(&g).expect("serialisable")
            );
            println!(
                "mass {:.10} (closed form {:.10}), reported {:.4}, discrepancy {:.3}%",
                g.mass,
                g.mass_closed_form,
                g.reported_mass,
                100.0 * g.reported_discrepancy()
            );
            Ok(())
        }
        Command::FitBlowup(args) => cmd_fit(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
