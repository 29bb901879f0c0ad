//! Fitting the effective number of satellites to a simulated Walker curve.

use std::io::Write;

use leo_coverage::neff::{analytic_value, fit_neff, held_out_mae, FitMetric, FitResult, NeffFitSpec, TargetPoint};
use leo_coverage::simkit::{simulate, ConstellationKind, MCConfig};
use leo_coverage::{NetworkParams, SinrThreshold};

use crate::config::{LoadedConfig, SweepVariable};

/// Thresholds used when the configuration does not sweep one.
pub const DEFAULT_THRESHOLDS_DB: [f64; 17] = [
    -10.0, -7.5, -5.0, -2.5, 0.0, 2.5, 5.0, 7.5, 10.0, 12.5, 15.0, 17.5, 20.0, 22.5, 25.0, 27.5, 30.0,
];

/// Channel counts used when the configuration does not sweep them.
pub const DEFAULT_CHANNELS: [f64; 6] = [5.0, 10.0, 20.0, 40.0, 60.0, 80.0];

#[derive(Debug, Clone)]
pub struct FitReport {
    pub fit: FitResult,
    pub held_out_mae: Option<f64>,
    pub target: Vec<TargetPoint>,
    pub fitted: Vec<f64>,
    pub n_walker: usize,
}

/// Simulated Walker curve at the configured user latitude.
pub fn walker_target(cfg: &LoadedConfig, metric: FitMetric, seed: u64, workers: usize) -> Result<Vec<TargetPoint>, String> {
    let params = cfg.walker.ok_or("fit-neff needs a [walker] section")?;
    let n = params.n_sats() as f64;
    let kind = ConstellationKind::Walker {
        params,
        user_latitude_deg: cfg.user_latitude_deg,
    };
    let sweep = cfg.raw.sweep.as_ref();
    let mc = |k: u32| {
        MCConfig::new(cfg.raw.mc.n_trials, seed)
            .with_workers(workers)
            .with_partition(cfg.partition(n, k))
    };
    match metric {
        FitMetric::Coverage => {
            let xs: Vec<f64> = match sweep {
                Some(s) if s.variable == SweepVariable::ThresholdDb => s.values.clone(),
                _ => DEFAULT_THRESHOLDS_DB.to_vec(),
            };
            let ts = xs
                .iter()
                .map(|&x| SinrThreshold::from_db(x))
                .collect::<leo_coverage::Result<Vec<_>>>()
                .map_err(|e| e.to_string())?;
            let k = cfg.scenario.net.n_channels();
            let scn = cfg
                .scenario
                .with_net(NetworkParams::new(n, k).map_err(|e| e.to_string())?);
            let sim = simulate(&scn, &kind, &ts, &mc(k)).map_err(|e| e.to_string())?;
            Ok(xs
                .iter()
                .zip(&sim.coverage)
                .map(|(&x, e)| TargetPoint {
                    x,
                    value: e.mean,
                    std_error: e.std_error,
                })
                .collect())
        }
        FitMetric::Rate => {
            let xs: Vec<f64> = match sweep {
                Some(s) if s.variable == SweepVariable::NChannels => s.values.clone(),
                _ => DEFAULT_CHANNELS.iter().copied().filter(|&k| k <= n).collect(),
            };
            xs.iter()
                .map(|&x| {
                    let k = x as u32;
                    let scn = cfg
                        .scenario
                        .with_net(NetworkParams::new(n, k).map_err(|e| e.to_string())?);
                    let r = simulate(&scn, &kind, &[], &mc(k)).map_err(|e| e.to_string())?.rate;
                    Ok(TargetPoint {
                        x,
                        value: r.mean,
                        std_error: r.std_error,
                    })
                })
                .collect()
        }
    }
}

pub fn run_fit(
    cfg: &LoadedConfig,
    spec: &NeffFitSpec,
    seed: u64,
    workers: usize,
) -> Result<FitReport, String> {
    let target = walker_target(cfg, spec.metric, seed, workers)?;
    let n_walker = cfg.walker.map(|w| w.n_sats()).unwrap_or(0);
    let fit = fit_neff(&target, &cfg.scenario, spec).map_err(|e| e.to_string())?;
    let held = if target.len() > fit.fit_points.len() {
        Some(held_out_mae(&fit, &target, &cfg.scenario, spec.metric).map_err(|e| e.to_string())?)
    } else {
        None
    };
    let fitted = target
        .iter()
        .map(|p| analytic_value(&cfg.scenario, spec.metric, fit.n_eff, p.x))
        .collect::<leo_coverage::Result<Vec<f64>>>()
        .map_err(|e| e.to_string())?;
    Ok(FitReport {
        fit,
        held_out_mae: held,
        target,
        fitted,
        n_walker,
    })
}

pub fn write_report<W: Write>(r: &FitReport, mut out: W) -> std::io::Result<()> {
    writeln!(out, "n_walker = {}", r.n_walker)?;
    writeln!(out, "n_eff = {}", r.fit.n_eff)?;
    writeln!(out, "mae = {}", r.fit.mae)?;
    match r.held_out_mae {
        Some(h) => writeln!(out, "held_out_mae = {h}")?,
        None => writeln!(out, "held_out_mae =")?,
    }
    let pts: Vec<String> = r.fit.fit_points.iter().map(f64::to_string).collect();
    writeln!(out, "fit_points = [{}]", pts.join(", "))
}

/// Fitted-versus-target curve as CSV.
pub fn write_curve<W: Write>(r: &FitReport, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "target", "target_stderr", "fitted", "used_in_fit"])?;
    for (p, f) in r.target.iter().zip(&r.fitted) {
        let used = r.fit.fit_points.contains(&p.x);
        w.write_record([
            p.x.to_string(),
            p.value.to_string(),
            p.std_error.to_string(),
            f.to_string(),
            used.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
