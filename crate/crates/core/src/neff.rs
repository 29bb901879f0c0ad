//! Effective number of satellites.
//!
//! A deterministic constellation is mapped onto the binomial model by the
//! real `N` whose analytic curve is closest, in mean absolute error, to the
//! constellation's simulated curve at a handful of fit points.

use crate::error::{Error, Result};
use crate::metrics::{coverage, rate, ScenarioConfig, SinrThreshold};

/// Which performance curve is matched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMetric {
    /// Points are SINR thresholds in dB.
    Coverage,
    /// Points are channel counts `K`.
    Rate,
}

/// One point of a target curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetPoint {
    /// Threshold in dB (coverage) or number of channels (rate).
    pub x: f64,
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeffFitSpec {
    pub metric: FitMetric,
    /// Fit points as `x` values of the target curve; `None` picks
    /// [`DEFAULT_FIT_POINTS`] from the curve's transition region.
    pub fit_points: Option<Vec<f64>>,
    pub n_lo: f64,
    pub n_hi: f64,
    /// Largest acceptable mean absolute error at the optimum.
    pub tolerance: f64,
}

/// Number of automatically chosen fit points.
pub const DEFAULT_FIT_POINTS: usize = 5;

const GRID_POINTS: usize = 25;

impl NeffFitSpec {
    pub fn new(metric: FitMetric, n_lo: f64, n_hi: f64) -> Self {
        Self {
            metric,
            fit_points: None,
            n_lo,
            n_hi,
            tolerance: 0.05,
        }
    }

    pub fn with_fit_points(self, points: Vec<f64>) -> Self {
        Self {
            fit_points: Some(points),
            ..self
        }
    }

    pub fn with_tolerance(self, tolerance: f64) -> Self {
        Self { tolerance, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n_lo >= 1.0 && self.n_lo.is_finite()) {
            return Err(Error::InvalidParameter(format!("n_lo must be at least 1, got {}", self.n_lo)));
        }
        if !(self.n_hi > self.n_lo && self.n_hi.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "search bounds must satisfy n_lo < n_hi, got [{}, {}]",
                self.n_lo, self.n_hi
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter("fit tolerance must be positive".into()));
        }
        if let Some(p) = &self.fit_points {
            if p.is_empty() {
                return Err(Error::InvalidParameter("fit point list is empty".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub n_eff: f64,
    pub mae: f64,
    /// `x` values of the points used in the objective.
    pub fit_points: Vec<f64>,
}

/// Analytic value of `metric` at point `x` for `n_sats` satellites.
pub fn analytic_value(cfg: &ScenarioConfig, metric: FitMetric, n_sats: f64, x: f64) -> Result<f64> {
    match metric {
        FitMetric::Coverage => {
            let net = cfg.net.with_n_sats(n_sats)?;
            coverage(&cfg.with_net(net), SinrThreshold::from_db(x)?)
        }
        FitMetric::Rate => {
            if !(x >= 1.0 && x.fract() == 0.0 && x <= f64::from(u32::MAX)) {
                return Err(Error::InvalidParameter(format!("channel count must be a positive integer, got {x}")));
            }
            let net = cfg.net.with_n_sats(n_sats)?.with_n_channels(x as u32)?;
            rate(&cfg.with_net(net))
        }
    }
}

/// Mean absolute error between the analytic curve at `n_sats` and `points`.
pub fn mean_abs_error(cfg: &ScenarioConfig, metric: FitMetric, n_sats: f64, points: &[TargetPoint]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::InvalidParameter("no points to compare".into()));
    }
    let mut total = 0.0;
    for p in points {
        total += (analytic_value(cfg, metric, n_sats, p.x)? - p.value).abs();
    }
    Ok(total / points.len() as f64)
}

/// Up to `count` points spread evenly in `x` over the part of the curve
/// with values in `[0.1, 0.9]`, falling back to the whole curve.
pub fn default_fit_points(target: &[TargetPoint], count: usize) -> Vec<f64> {
    let mut region: Vec<f64> = target
        .iter()
        .filter(|p| (0.1..=0.9).contains(&p.value))
        .map(|p| p.x)
        .collect();
    if region.is_empty() {
        region = target.iter().map(|p| p.x).collect();
    }
    region.sort_by(f64::total_cmp);
    region.dedup();
    if region.len() <= count {
        return region;
    }
    let (lo, hi) = (region[0], region[region.len() - 1]);
    let mut chosen: Vec<f64> = Vec::with_capacity(count);
    for i in 0..count {
        let aim = lo + (hi - lo) * i as f64 / (count - 1) as f64;
        let best = region
            .iter()
            .copied()
            .filter(|x| !chosen.contains(x))
            .min_by(|a, b| (a - aim).abs().total_cmp(&(b - aim).abs()));
        if let Some(b) = best {
            chosen.push(b);
        }
    }
    chosen.sort_by(f64::total_cmp);
    chosen
}

fn validate_target(target: &[TargetPoint], metric: FitMetric) -> Result<()> {
    if target.is_empty() {
        return Err(Error::InvalidParameter("target curve is empty".into()));
    }
    for p in target {
        let ok = match metric {
            FitMetric::Coverage => (0.0..=1.0).contains(&p.value),
            FitMetric::Rate => p.value >= 0.0 && p.value.is_finite(),
        };
        if !ok || !p.x.is_finite() || !(p.std_error >= 0.0) {
            return Err(Error::InvalidParameter(format!("invalid target point {p:?}")));
        }
    }
    Ok(())
}

/// Fits the effective number of satellites to `target`.
///
/// The objective is sampled on a logarithmic grid over `[n_lo, n_hi]`; the
/// best grid cell is then narrowed by golden-section search. If the grid
/// shows more than one local minimum, the grid is refined around the best
/// point before the final search.
pub fn fit_neff(target: &[TargetPoint], cfg: &ScenarioConfig, spec: &NeffFitSpec) -> Result<FitResult> {
    spec.validate()?;
    validate_target(target, spec.metric)?;
    let xs = match &spec.fit_points {
        Some(p) => p.clone(),
        None => default_fit_points(target, DEFAULT_FIT_POINTS),
    };
    let mut points = Vec::with_capacity(xs.len());
    for &x in &xs {
        let p = target
            .iter()
            .find(|p| (p.x - x).abs() <= 1e-9 * x.abs().max(1.0))
            .ok_or_else(|| Error::InvalidParameter(format!("fit point {x} is not on the target curve")))?;
        points.push(*p);
    }
    let objective = |n: f64| mean_abs_error(cfg, spec.metric, n, &points);

    let (mut lo, mut hi) = (spec.n_lo.ln(), spec.n_hi.ln());
    let (mut best_u, mut best) = (lo, f64::INFINITY);
    for _round in 0..4 {
        let grid: Vec<f64> = (0..GRID_POINTS)
            .map(|i| lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64)
            .collect();
        let values = grid.iter().map(|&u| objective(u.exp())).collect::<Result<Vec<f64>>>()?;
        let i = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if values[i] < best {
            best = values[i];
            best_u = grid[i];
        }
        let (a, b) = (grid[i.saturating_sub(1)], grid[(i + 1).min(GRID_POINTS - 1)]);
        lo = a;
        hi = b;
        let minima = (1..GRID_POINTS - 1)
            .filter(|&j| values[j] < values[j - 1] && values[j] <= values[j + 1])
            .count();
        if minima <= 1 {
            break;
        }
    }

    // golden section on ln n within the final bracket
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (objective(c.exp())?, objective(d.exp())?);
    while (b - a) > 1e-7 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = objective(c.exp())?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = objective(d.exp())?;
        }
    }
    let (u, mae) = if fc <= fd { (c, fc) } else { (d, fd) };
    let (n_eff, mae) = if mae <= best { (u.exp(), mae) } else { (best_u.exp(), best) };
    let n_eff = n_eff.clamp(spec.n_lo, spec.n_hi);
    if mae > spec.tolerance {
        return Err(Error::FitFailure {
            n_eff,
            mae,
            tolerance: spec.tolerance,
        });
    }
    Ok(FitResult {
        n_eff,
        mae,
        fit_points: xs,
    })
}

/// Mean absolute error of the fitted curve over target points that were not
/// used in the fit.
pub fn held_out_mae(fit: &FitResult, target: &[TargetPoint], cfg: &ScenarioConfig, metric: FitMetric) -> Result<f64> {
    let held: Vec<TargetPoint> = target
        .iter()
        .filter(|p| !fit.fit_points.iter().any(|&x| (x - p.x).abs() <= 1e-9 * x.abs().max(1.0)))
        .copied()
        .collect();
    mean_abs_error(cfg, metric, fit.n_eff, &held)
}

/// Linear rescaling of a fitted `n_eff` from a constellation of `n_ref`
/// satellites to one of `n_new`.
pub fn scale_neff(fit: &FitResult, n_ref: f64, n_new: f64) -> Result<f64> {
    if !(n_ref > 0.0 && n_new > 0.0 && n_ref.is_finite() && n_new.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "constellation sizes must be positive, got {n_ref} and {n_new}"
        )));
    }
    Ok(fit.n_eff * n_new / n_ref)
}
