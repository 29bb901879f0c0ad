use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use leo_coverage::neff::{FitMetric, NeffFitSpec};
use leo_coverage_cli::config::{emit_config, fingerprint, load_config, Kind, LoadedConfig, Output, SweepVariable};
use leo_coverage_cli::fit::{run_fit, write_curve, write_report};
use leo_coverage_cli::sweep::{run_sweep, write_csv, SweepSpec};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "leo-coverage", version, about = "Coverage and rate of LEO satellite constellations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `[mc] seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Also write the canonical form of the loaded configuration here.
    #[arg(long)]
    emit_config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic coverage probability per threshold.
    Coverage {
        #[command(flatten)]
        common: Common,
        /// Thresholds in dB; defaults to the configured sweep or threshold.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        threshold_db: Vec<f64>,
    },
    /// Analytic average rate per number of channels.
    Rate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        n_channels: Vec<u32>,
    },
    /// Monte Carlo coverage and rate per threshold.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        threshold_db: Vec<f64>,
    },
    /// Fit the effective number of satellites to a simulated Walker curve.
    FitNeff {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = MetricArg::Coverage)]
        metric: MetricArg,
        /// Lower search bound; defaults to a quarter of the Walker size.
        #[arg(long)]
        n_lo: Option<f64>,
        /// Upper search bound; defaults to four times the Walker size.
        #[arg(long)]
        n_hi: Option<f64>,
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
        /// Fit points (thresholds in dB or channel counts).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        fit_points: Vec<f64>,
        /// Write the fitted and target curves as CSV.
        #[arg(long)]
        curve_out: Option<PathBuf>,
    },
    /// Run the `[sweep]` section of the configuration.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Coverage,
    Rate,
}

enum Failure {
    Config(String),
    Numeric(String),
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn load(common: &Common) -> Result<(LoadedConfig, u64), Failure> {
    let cfg = load_config(&common.config).map_err(|e| Failure::Config(e.to_string()))?;
    if common.workers == 0 {
        return Err(Failure::Config("--workers must be at least 1".into()));
    }
    let seed = common.seed.unwrap_or(cfg.raw.mc.seed);
    if let Some(p) = &common.emit_config {
        std::fs::write(p, emit_config(&cfg)).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
    }
    eprintln!("fingerprint {}", fingerprint(&cfg, seed));
    Ok((cfg, seed))
}

fn configured_values(cfg: &LoadedConfig, variable: SweepVariable) -> Option<Vec<f64>> {
    cfg.raw
        .sweep
        .as_ref()
        .filter(|s| s.variable == variable)
        .map(|s| s.values.clone())
}

fn check_increasing(values: &[f64], what: &str) -> Result<(), Failure> {
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Failure::Config(format!("{what} must be strictly increasing")));
    }
    Ok(())
}

fn sweep_and_write(cfg: &LoadedConfig, spec: &SweepSpec, common: &Common, seed: u64) -> Result<(), Failure> {
    let fp = fingerprint(cfg, seed);
    let rows = run_sweep(cfg, spec, seed, common.workers, &fp).map_err(Failure::Numeric)?;
    write_csv(spec, &rows, output(&common.out)?).map_err(|e| Failure::Config(format!("cannot write CSV: {e}")))?;
    let failed = rows.iter().filter(|r| r.failed()).count();
    if failed > 0 {
        return Err(Failure::Numeric(format!("{failed} of {} rows failed", rows.len())));
    }
    Ok(())
}

fn threshold_values(cfg: &LoadedConfig, given: &[f64]) -> Result<Vec<f64>, Failure> {
    let values = if !given.is_empty() {
        given.to_vec()
    } else {
        configured_values(cfg, SweepVariable::ThresholdDb)
            .unwrap_or_else(|| vec![cfg.raw.sweep.as_ref().map(|s| s.threshold_db).unwrap_or(0.0)])
    };
    check_increasing(&values, "--threshold-db")?;
    Ok(values)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Coverage { common, threshold_db } => {
            let (cfg, seed) = load(&common)?;
            let spec = SweepSpec {
                variable: SweepVariable::ThresholdDb,
                values: threshold_values(&cfg, &threshold_db)?,
                outputs: vec![Output::AnalyticCoverage],
                kinds: vec![],
                threshold_db: 0.0,
            };
            sweep_and_write(&cfg, &spec, &common, seed)
        }
        Command::Rate { common, n_channels } => {
            let (cfg, seed) = load(&common)?;
            let values = if !n_channels.is_empty() {
                n_channels.iter().map(|&k| f64::from(k)).collect()
            } else {
                configured_values(&cfg, SweepVariable::NChannels)
                    .unwrap_or_else(|| vec![f64::from(cfg.scenario.net.n_channels())])
            };
            check_increasing(&values, "--n-channels")?;
            let spec = SweepSpec {
                variable: SweepVariable::NChannels,
                values,
                outputs: vec![Output::AnalyticRate],
                kinds: vec![],
                threshold_db: 0.0,
            };
            sweep_and_write(&cfg, &spec, &common, seed)
        }
        Command::Simulate { common, threshold_db } => {
            let (cfg, seed) = load(&common)?;
            let kinds = cfg
                .raw
                .sweep
                .as_ref()
                .map(|s| s.kinds.clone())
                .filter(|k| !k.is_empty())
                .unwrap_or_else(|| vec![Kind::Bpp]);
            let spec = SweepSpec {
                variable: SweepVariable::ThresholdDb,
                values: threshold_values(&cfg, &threshold_db)?,
                outputs: vec![Output::McCoverage, Output::McRate],
                kinds,
                threshold_db: 0.0,
            };
            sweep_and_write(&cfg, &spec, &common, seed)
        }
        Command::FitNeff {
            common,
            metric,
            n_lo,
            n_hi,
            tolerance,
            fit_points,
            curve_out,
        } => {
            let (cfg, seed) = load(&common)?;
            let n_walker = cfg
                .walker
                .map(|w| w.n_sats() as f64)
                .ok_or_else(|| Failure::Config("fit-neff needs a [walker] section".into()))?;
            let metric = match metric {
                MetricArg::Coverage => FitMetric::Coverage,
                MetricArg::Rate => FitMetric::Rate,
            };
            let mut spec = NeffFitSpec::new(
                metric,
                n_lo.unwrap_or((0.25 * n_walker).max(1.0)),
                n_hi.unwrap_or(4.0 * n_walker),
            )
            .with_tolerance(tolerance);
            if !fit_points.is_empty() {
                spec = spec.with_fit_points(fit_points);
            }
            spec.validate().map_err(|e| Failure::Config(e.to_string()))?;
            let report = run_fit(&cfg, &spec, seed, common.workers).map_err(Failure::Numeric)?;
            write_report(&report, output(&common.out)?).map_err(|e| Failure::Config(e.to_string()))?;
            if let Some(p) = curve_out {
                let f = File::create(&p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
                write_curve(&report, f).map_err(|e| Failure::Config(e.to_string()))?;
            }
            Ok(())
        }
        Command::Sweep { common } => {
            let (cfg, seed) = load(&common)?;
            let spec = cfg
                .raw
                .sweep
                .as_ref()
                .map(SweepSpec::from)
                .ok_or_else(|| Failure::Config(format!("{}: no [sweep] section", common.config.display())))?;
            sweep_and_write(&cfg, &spec, &common, seed)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_NUMERIC)
        }
    }
}
