//! Parameter sweeps and their CSV form.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};

use leo_coverage::metrics::{coverage, rate};
use leo_coverage::simkit::{simulate, ConstellationKind, MCConfig, WalkerParams};
use leo_coverage::{GeometryParams, NetworkParams, ScenarioConfig, SinrThreshold};
use rayon::prelude::*;

use crate::config::{Kind, LoadedConfig, Output, SweepSection, SweepVariable};

/// What to compute and over which values.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub outputs: Vec<Output>,
    pub kinds: Vec<Kind>,
    pub threshold_db: f64,
}

impl From<&SweepSection> for SweepSpec {
    fn from(s: &SweepSection) -> Self {
        Self {
            variable: s.variable,
            values: s.values.clone(),
            outputs: s.outputs.clone(),
            kinds: s.kinds.clone(),
            threshold_db: s.threshold_db,
        }
    }
}

/// One column of results.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Column {
    pub output: Output,
    /// `None` for analytic outputs.
    pub kind: Option<Kind>,
}

impl SweepSpec {
    pub fn columns(&self) -> Vec<Column> {
        let mut cols = Vec::new();
        for &output in &self.outputs {
            if output.is_mc() {
                cols.extend(self.kinds.iter().map(|&k| Column { output, kind: Some(k) }));
            } else {
                cols.push(Column { output, kind: None });
            }
        }
        cols
    }

    fn column_name(&self, c: &Column) -> String {
        match c.kind {
            Some(k) if self.kinds.len() > 1 => format!("{}_{}", c.output.name(), k.name()),
            _ => c.output.name().to_string(),
        }
    }

    /// `swept_value`, outputs, `_stderr` columns for Monte Carlo outputs,
    /// then `error`.
    pub fn header(&self) -> Vec<String> {
        let cols = self.columns();
        let mut h = vec!["swept_value".to_string()];
        h.extend(cols.iter().map(|c| self.column_name(c)));
        h.extend(
            cols.iter()
                .filter(|c| c.kind.is_some())
                .map(|c| format!("{}_stderr", self.column_name(c))),
        );
        h.push("error".into());
        h
    }
}

/// A computed cell: value and, for Monte Carlo outputs, its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub value: f64,
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub swept_value: f64,
    /// One entry per [`SweepSpec::columns`]; `None` where computation failed.
    pub cells: Vec<Option<Cell>>,
    pub errors: Vec<String>,
    pub fingerprint: String,
}

impl ResultRow {
    pub fn failed(&self) -> bool {
        !self.errors.is_empty()
    }
}

/// Scenario, constellation and threshold for one swept value.
struct RowSetup {
    scenario: std::result::Result<ScenarioConfig, String>,
    geom: Option<GeometryParams>,
    threshold: std::result::Result<SinrThreshold, String>,
    user_latitude_deg: f64,
}

fn setup_row(cfg: &LoadedConfig, spec: &SweepSpec, v: f64) -> RowSetup {
    let base = &cfg.scenario;
    let mut row = RowSetup {
        scenario: Ok(base.clone()),
        geom: Some(base.geom),
        threshold: SinrThreshold::from_db(spec.threshold_db).map_err(|e| e.to_string()),
        user_latitude_deg: cfg.user_latitude_deg,
    };
    match spec.variable {
        SweepVariable::ThresholdDb => row.threshold = SinrThreshold::from_db(v).map_err(|e| e.to_string()),
        SweepVariable::NChannels => {
            row.scenario = base
                .net
                .with_n_channels(v as u32)
                .map(|net| base.with_net(net))
                .map_err(|e| e.to_string());
        }
        SweepVariable::AltitudeKm => {
            match GeometryParams::from_km(base.geom.earth_radius() / 1000.0, v) {
                Ok(g) => {
                    row.scenario = Ok(base.with_geom(g));
                    row.geom = Some(g);
                }
                Err(e) => {
                    row.scenario = Err(e.to_string());
                    row.geom = None;
                }
            }
        }
        SweepVariable::UserLatitudeDeg => row.user_latitude_deg = v,
    }
    row
}

fn constellation(
    cfg: &LoadedConfig,
    kind: Kind,
    scenario: &ScenarioConfig,
    geom: GeometryParams,
    latitude: f64,
) -> std::result::Result<(ScenarioConfig, ConstellationKind), String> {
    match kind {
        Kind::Bpp => Ok((
            scenario.clone(),
            ConstellationKind::Bpp {
                user_latitude_deg: latitude,
            },
        )),
        Kind::Walker => {
            let w = cfg.walker.as_ref().ok_or("no walker section")?;
            let params = WalkerParams::new(w.inclination_deg, w.n_planes, w.sats_per_plane, w.phasing, geom)
                .map_err(|e| e.to_string())?;
            let net = NetworkParams::new(params.n_sats() as f64, scenario.net.n_channels()).map_err(|e| e.to_string())?;
            Ok((
                scenario.with_net(net),
                ConstellationKind::Walker {
                    params,
                    user_latitude_deg: latitude,
                },
            ))
        }
    }
}

/// Evaluates every column at one swept value.
pub fn run_row(cfg: &LoadedConfig, spec: &SweepSpec, v: f64, seed: u64, mc_workers: usize) -> ResultRow {
    let setup = setup_row(cfg, spec, v);
    let columns = spec.columns();
    let mut cells = vec![None; columns.len()];
    let mut errors = Vec::new();
    let mut sims = Vec::new();

    for (i, col) in columns.iter().enumerate() {
        let name = spec.column_name(col);
        let scenario = match &setup.scenario {
            Ok(s) => s,
            Err(e) => {
                errors.push(format!("{name}: {e}"));
                continue;
            }
        };
        let result: std::result::Result<Cell, String> = match (col.output, col.kind) {
            (Output::AnalyticCoverage, _) => setup
                .threshold
                .clone()
                .and_then(|t| coverage(scenario, t).map_err(|e| e.to_string()))
                .map(|value| Cell { value, std_error: None }),
            (Output::AnalyticRate, _) => rate(scenario)
                .map(|value| Cell { value, std_error: None })
                .map_err(|e| e.to_string()),
            (output, Some(kind)) => {
                // one simulation per kind serves both Monte Carlo outputs
                let sim = match sims.iter().find(|(k, _)| *k == kind) {
                    Some((_, s)) => s,
                    None => {
                        let s = simulate_kind(cfg, kind, scenario, &setup, seed, mc_workers);
                        sims.push((kind, s));
                        &sims[sims.len() - 1].1
                    }
                };
                sim.clone().map(|(cov, r)| {
                    let e = if output == Output::McCoverage { cov } else { r };
                    Cell {
                        value: e.mean,
                        std_error: Some(e.std_error),
                    }
                })
            }
            (_, None) => Err("Monte Carlo column without a kind".into()),
        };
        match result {
            Ok(c) => cells[i] = Some(c),
            Err(e) => errors.push(format!("{name}: {e}")),
        }
    }
    ResultRow {
        swept_value: v,
        cells,
        errors,
        fingerprint: String::new(),
    }
}

type SimCell = std::result::Result<(leo_coverage::simkit::MCEstimate, leo_coverage::simkit::MCEstimate), String>;

fn simulate_kind(
    cfg: &LoadedConfig,
    kind: Kind,
    scenario: &ScenarioConfig,
    setup: &RowSetup,
    seed: u64,
    workers: usize,
) -> SimCell {
    let geom = setup.geom.ok_or("invalid geometry")?;
    let t = setup.threshold.clone()?;
    let (scn, ck) = constellation(cfg, kind, scenario, geom, setup.user_latitude_deg)?;
    let mc = MCConfig::new(cfg.raw.mc.n_trials, seed)
        .with_workers(workers)
        .with_partition(cfg.partition(scn.net.n_sats(), scn.net.n_channels()));
    let sim = simulate(&scn, &ck, &[t], &mc).map_err(|e| e.to_string())?;
    Ok((sim.coverage[0], sim.rate))
}

/// Runs all rows, up to `workers` at a time, in swept-value order.
/// Progress goes to standard error.
pub fn run_sweep(
    cfg: &LoadedConfig,
    spec: &SweepSpec,
    seed: u64,
    workers: usize,
    fingerprint: &str,
) -> std::result::Result<Vec<ResultRow>, String> {
    let workers = workers.max(1);
    let total = spec.values.len();
    let done = AtomicUsize::new(0);
    // a single row gets all workers for its simulation instead
    let mc_workers = if total == 1 { workers } else { 1 };
    let row = |&v: &f64| {
        let mut r = run_row(cfg, spec, v, seed, mc_workers);
        r.fingerprint = fingerprint.to_string();
        let n = done.fetch_add(1, Ordering::Relaxed) + 1;
        eprintln!("[{n}/{total}] {} = {v}{}", spec.variable, if r.failed() { " (failed)" } else { "" });
        r
    };
    if workers == 1 || total == 1 {
        return Ok(spec.values.iter().map(row).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| format!("cannot start worker pool: {e}"))?;
    Ok(pool.install(|| spec.values.par_iter().map(row).collect()))
}

/// Writes rows as RFC 4180 CSV with a header.
pub fn write_csv<W: Write>(spec: &SweepSpec, rows: &[ResultRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(spec.header())?;
    for r in rows {
        let mut rec = vec![r.swept_value.to_string()];
        rec.extend(r.cells.iter().map(|c| c.map(|c| c.value.to_string()).unwrap_or_default()));
        rec.extend(
            spec.columns()
                .iter()
                .zip(&r.cells)
                .filter(|(col, _)| col.kind.is_some())
                .map(|(_, c)| c.and_then(|c| c.std_error).map(|s| s.to_string()).unwrap_or_default()),
        );
        rec.push(r.errors.join("; "));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}
