//! Coverage probability and average achievable rate.
//!
//! All four evaluators integrate over the serving distance `r0` with the
//! density `f_R0` and split the per-`r0` quantity into an interference-free
//! term `A(r0)` and a term `B(r0)` conditioned on at least one visible
//! interferer. [`Decomposition`] selects how the zero-interference
//! probability `P0(r0)` weights the two terms.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::GeometryParams;
use crate::interference::{
    mix_with_context, per_interferer_transform, FadingModel, InterferenceContext, LaplaceNormalization, PathLoss,
};
use crate::quadrature::{integrate_pieces, interval_prob_from_laplace, QuadratureSpec};
use crate::visibility::{visible_fraction, zero_interference, NetworkParams};

/// Converts decibels to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Converts dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// SINR threshold `T` as a linear ratio.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SinrThreshold(f64);

impl SinrThreshold {
    pub fn new(linear: f64) -> Result<Self> {
        if linear.is_finite() && linear > 0.0 {
            Ok(Self(linear))
        } else {
            Err(Error::InvalidParameter(format!(
                "SINR threshold must be positive, got {linear}"
            )))
        }
    }

    pub fn from_db(db: f64) -> Result<Self> {
        Self::new(db_to_linear(db))
    }

    #[inline]
    pub fn linear(&self) -> f64 {
        self.0
    }

    pub fn db(&self) -> f64 {
        linear_to_db(self.0)
    }
}

/// Transmit powers, noise, path loss and fading.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioParams {
    /// Serving transmit power `p_s` in watts.
    pub p_serve: f64,
    /// Interfering transmit power `p_i` in watts.
    pub p_interf: f64,
    /// Noise power `sigma^2` in watts.
    pub noise_power: f64,
    pub path_loss: PathLoss,
    pub serving_fading: FadingModel,
    pub interfering_fading: FadingModel,
}

impl RadioParams {
    pub fn new(
        p_serve: f64,
        p_interf: f64,
        noise_power: f64,
        path_loss: PathLoss,
        serving_fading: FadingModel,
        interfering_fading: FadingModel,
    ) -> Result<Self> {
        let radio = Self {
            p_serve,
            p_interf,
            noise_power,
            path_loss,
            serving_fading,
            interfering_fading,
        };
        radio.validate()?;
        Ok(radio)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_serve.is_finite() && self.p_serve > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "p_serve must be positive, got {}",
                self.p_serve
            )));
        }
        if !(self.p_interf.is_finite() && self.p_interf >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "p_interf must be non-negative, got {}",
                self.p_interf
            )));
        }
        if self.p_interf > self.p_serve {
            return Err(Error::InvalidParameter(format!(
                "p_interf ({}) must not exceed p_serve ({})",
                self.p_interf, self.p_serve
            )));
        }
        if !(self.noise_power.is_finite() && self.noise_power > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise_power must be positive, got {}",
                self.noise_power
            )));
        }
        if self.path_loss.alpha() < 2.0 {
            return Err(Error::InvalidParameter(format!(
                "path loss exponent must be at least 2, got {}",
                self.path_loss.alpha()
            )));
        }
        Ok(())
    }

    /// Signal-to-noise ratio of an unfaded link at distance `r`.
    #[inline]
    pub fn snr_at(&self, r: f64) -> f64 {
        self.p_serve * self.path_loss.gain(r) / self.noise_power
    }
}

/// Where the zero-interference probability enters the `r0` integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Decomposition {
    /// `P0` averaged over the serving distance and applied as an outer
    /// weight: `Pbar0 * int f A + (1 - Pbar0) * int f B`.
    FactoredOutsideIntegral,
    /// `int f [P0(r0) A + (1 - P0(r0)) B]`.
    #[default]
    InsideIntegral,
}

/// A complete scenario.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub geom: GeometryParams,
    pub net: NetworkParams,
    pub radio: RadioParams,
    pub quad: QuadratureSpec,
    pub laplace_normalization: LaplaceNormalization,
    pub decomposition: Decomposition,
}

impl ScenarioConfig {
    /// Scenario with default numerics, normalization and decomposition.
    pub fn new(geom: GeometryParams, net: NetworkParams, radio: RadioParams) -> Result<Self> {
        let cfg = Self {
            geom,
            net,
            radio,
            quad: Self::default_quadrature(),
            laplace_normalization: LaplaceNormalization::default(),
            decomposition: Decomposition::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Tolerances used unless overridden. The inversion threshold is looser
    /// than the quadrature tolerances because inversions sit inside one or
    /// two outer integrals.
    pub fn default_quadrature() -> QuadratureSpec {
        QuadratureSpec {
            abs_tol: 1e-10,
            rel_tol: 1e-9,
            max_subdivisions: 2000,
            omega_truncation: f64::INFINITY,
            omega_growth_check: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.radio.validate()?;
        self.quad.validate()
    }

    pub fn interference_context(&self) -> InterferenceContext {
        InterferenceContext {
            geom: self.geom,
            net: self.net,
            p_interf: self.radio.p_interf,
            path_loss: self.radio.path_loss,
            fading: self.radio.interfering_fading.clone(),
            normalization: self.laplace_normalization,
        }
    }

    pub fn with_net(&self, net: NetworkParams) -> Self {
        Self { net, ..self.clone() }
    }

    pub fn with_geom(&self, geom: GeometryParams) -> Self {
        Self { geom, ..self.clone() }
    }

    pub fn with_variant(&self, normalization: LaplaceNormalization, decomposition: Decomposition) -> Self {
        Self {
            laplace_normalization: normalization,
            decomposition,
            ..self.clone()
        }
    }
}

/// Upper end of the exponential-tail truncation: the noise factor
/// `exp(-a (e^t - 1))` falls below `1e-12` at `a (e^t - 1) = TAIL_EXPONENT`.
const TAIL_EXPONENT: f64 = 27.631_021_115_928_547;

/// Serving densities below this fraction of `f_R0(r_min)` are skipped.
const NEGLIGIBLE_DENSITY: f64 = 1e-16;

struct Kernel<'a> {
    cfg: &'a ScenarioConfig,
    ctx: InterferenceContext,
    n: f64,
    rmin: f64,
    rmax: f64,
    /// Where `f_R0` has decayed to nothing.
    r_cut: f64,
    pdf_floor: f64,
    has_interferers: bool,
}

impl<'a> Kernel<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let g = &cfg.geom;
        let n = cfg.net.n_sats();
        let rmin = g.altitude();
        let rmax = g.max_range();
        // (1 - F)^(N-1) < 1e-18 beyond r_cut
        let r_cut = if n > 1.0 {
            let f = -(-41.446_531_673_892_82 / (n - 1.0)).exp_m1();
            (f * g.cdf_scale() + rmin * rmin).sqrt().min(rmax)
        } else {
            rmax
        };
        let pdf_floor = NEGLIGIBLE_DENSITY * g.pdf_serving_distance(n, rmin);
        Ok(Self {
            cfg,
            ctx: cfg.interference_context(),
            n,
            rmin,
            rmax,
            r_cut,
            pdf_floor,
            has_interferers: cfg.net.co_channel_others() > 0.0,
        })
    }

    fn pdf(&self, r0: f64) -> f64 {
        self.cfg.geom.pdf_serving_distance(self.n, r0)
    }

    fn p0(&self, r0: f64) -> f64 {
        zero_interference(&self.cfg.geom, &self.cfg.net, r0)
    }

    /// Serving-signal scale `p_s g(r0)`.
    fn signal(&self, r0: f64) -> f64 {
        self.cfg.radio.p_serve * self.cfg.radio.path_loss.gain(r0)
    }

    /// Looser tolerances for integrals whose integrand carries the error of
    /// a nested inversion.
    fn nested_spec(&self) -> QuadratureSpec {
        let q = &self.cfg.quad;
        QuadratureSpec {
            abs_tol: q.abs_tol.max(10.0 * q.omega_growth_check),
            rel_tol: q.rel_tol.max(10.0 * q.omega_growth_check),
            ..*q
        }
    }

    fn inversion_spec(&self) -> QuadratureSpec {
        let q = &self.cfg.quad;
        QuadratureSpec {
            abs_tol: q.omega_growth_check,
            rel_tol: q.rel_tol.max(q.omega_growth_check),
            ..*q
        }
    }

    /// Combines the two per-`r0` terms over `[r_min, upper]`.
    ///
    /// `snr_total` optionally replaces `int f A` in the factored form with
    /// an equivalent closed expression.
    fn combine<A, B>(
        &self,
        upper: f64,
        breaks: &[f64],
        spec: &QuadratureSpec,
        snr_total: Option<f64>,
        a: A,
        b: B,
    ) -> Result<f64>
    where
        A: Fn(f64) -> Result<f64>,
        B: Fn(f64) -> Result<f64>,
    {
        let upper = upper.min(self.r_cut);
        let b_term = |r0: f64| b(r0).map_err(|e| e.in_term("sinr_term"));
        let a_term = |r0: f64| a(r0).map_err(|e| e.in_term("snr_term"));
        match self.cfg.decomposition {
            Decomposition::InsideIntegral => integrate_pieces(
                |r0| {
                    let f = self.pdf(r0);
                    if f < self.pdf_floor {
                        return Ok(0.0);
                    }
                    let p0 = self.p0(r0);
                    let mut v = p0 * a_term(r0)?;
                    if p0 < 1.0 {
                        v += (1.0 - p0) * b_term(r0)?;
                    }
                    Ok(f * v)
                },
                self.rmin,
                upper,
                breaks,
                spec,
            ),
            Decomposition::FactoredOutsideIntegral => {
                let snr = match snr_total {
                    Some(v) => v,
                    None => integrate_pieces(
                        |r0| {
                            let f = self.pdf(r0);
                            if f < self.pdf_floor {
                                return Ok(0.0);
                            }
                            Ok(f * a_term(r0)?)
                        },
                        self.rmin,
                        upper,
                        breaks,
                        spec,
                    )?,
                };
                if !self.has_interferers {
                    return Ok(snr);
                }
                let p0_bar = self.mean_zero_interference()?;
                let sinr = integrate_pieces(
                    |r0| {
                        let f = self.pdf(r0);
                        if f < self.pdf_floor {
                            return Ok(0.0);
                        }
                        Ok(f * b_term(r0)?)
                    },
                    self.rmin,
                    upper,
                    breaks,
                    spec,
                )?;
                Ok(p0_bar * snr + (1.0 - p0_bar) * sinr)
            }
        }
    }

    /// `E[P0(R0)]`, counting serving distances beyond the horizon as
    /// interference-free.
    fn mean_zero_interference(&self) -> Result<f64> {
        let inside = integrate_pieces(
            |r0| Ok(self.pdf(r0) * self.p0(r0)),
            self.rmin,
            self.r_cut,
            &[],
            &self.cfg.quad,
        )?;
        let beyond = 1.0 - self.cfg.geom.cdf_serving_distance(self.n, self.rmax);
        Ok(inside + beyond)
    }

    fn laplace_real(&self, r0: f64, s: f64) -> Result<f64> {
        let phi = per_interferer_transform(&self.ctx, r0, Complex64::new(s, 0.0), &self.cfg.quad)?;
        Ok(mix_with_context(&self.ctx, r0, phi).re)
    }

    /// `P(0 < I < x | R0 = r0)` under the configured normalization.
    fn interference_below(&self, r0: f64, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        if let Some(lo) = self.ctx.min_interference() {
            if x <= lo {
                return Ok(0.0);
            }
        }
        if let Some(hi) = self.ctx.max_interference(r0) {
            if x >= hi {
                return Ok(mix_with_context(&self.ctx, r0, Complex64::new(1.0, 0.0)).re);
            }
        }
        let inversion = self.inversion_spec();
        if self.upper_tail_bound(r0, x)? < 0.1 * inversion.abs_tol {
            return Ok(mix_with_context(&self.ctx, r0, Complex64::new(1.0, 0.0)).re);
        }
        let failure = std::cell::RefCell::new(None);
        let quad = self.cfg.quad;
        let laplace = |w: f64| {
            match per_interferer_transform(&self.ctx, r0, Complex64::new(0.0, w), &quad) {
                Ok(phi) => mix_with_context(&self.ctx, r0, phi),
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    Complex64::new(0.0, 0.0)
                }
            }
        };
        let p = interval_prob_from_laplace(laplace, x, &inversion);
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        p
    }

    /// `E[ln(1 + S / (I + sigma^2)) | R0 = r0, N_I > 0]` for an unfaded
    /// serving link, as `int_0^inf P(I < S / (e^t - 1) - sigma^2) dt`.
    fn nonfading_sinr_rate(&self, r0: f64) -> Result<f64> {
        let sigma2 = self.cfg.radio.noise_power;
        let signal = self.signal(r0);
        // x(t) = signal / (e^t - 1) - sigma^2 decreases in t
        let t_of_x = |x: f64| (signal / (x + sigma2)).ln_1p();
        let t_hi = t_of_x(self.ctx.min_interference().unwrap_or(0.0));
        let (t_lo, head) = match self.ctx.max_interference(r0) {
            Some(hi) => {
                let t_lo = t_of_x(hi);
                let mass = mix_with_context(&self.ctx, r0, Complex64::new(1.0, 0.0)).re;
                (t_lo, t_lo * mass)
            }
            None => (0.0, 0.0),
        };
        let breaks: Vec<f64> = self.kink_levels(r0).into_iter().map(t_of_x).collect();
        let body = integrate_pieces(
            |t| self.interference_below(r0, signal / t.exp_m1() - sigma2),
            t_lo,
            t_hi,
            &breaks,
            &self.nested_spec(),
        )?;
        Ok(head + body)
    }

    /// Chernoff bound `P(I >= x | N_I > 0) <= min_s e^{-s x} E[e^{s I}]` for
    /// bounded interference, or 1 when no useful bound is available.
    fn upper_tail_bound(&self, r0: f64, x: f64) -> Result<f64> {
        if self.cfg.laplace_normalization != LaplaceNormalization::ConditionalNormalized
            || self.ctx.fading != FadingModel::NonFading
        {
            return Ok(1.0);
        }
        let p = visible_fraction(&self.cfg.geom, r0);
        let m = self.cfg.net.co_channel_others();
        if p <= 0.0 || m <= 0.0 {
            return Ok(1.0);
        }
        let ln_q = (-p).ln_1p();
        let ln_norm = (-(m * ln_q).exp_m1()).ln();
        let strongest = self.cfg.radio.p_interf * self.cfg.radio.path_loss.gain(r0);
        let mean = m * p * self.cfg.radio.p_interf * self.mean_visible_gain(r0) / (-(m * ln_q).exp_m1());
        if x < 4.0 * mean {
            return Ok(1.0);
        }
        let (lo, hi) = ((1.0 / x).ln(), (700.0 / strongest).ln());
        if lo >= hi {
            return Ok(1.0);
        }
        let psi = |u: f64| -> Result<f64> {
            let s = u.exp();
            let phi = per_interferer_transform(&self.ctx, r0, Complex64::new(-s, 0.0), &self.cfg.quad)?.re;
            let a = (1.0 - p) + p * phi;
            let ln_l = m * a.ln() + (-(m * ((1.0 - p) / a).ln()).exp_m1()).ln() - ln_norm;
            Ok(-s * x + ln_l)
        };
        // psi is convex in s, hence unimodal in ln s
        let target = (0.1 * self.inversion_spec().abs_tol).ln();
        let ratio = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (lo, hi);
        let mut c = b - ratio * (b - a);
        let mut d = a + ratio * (b - a);
        let (mut fc, mut fd) = (psi(c)?, psi(d)?);
        for _ in 0..30 {
            if fc.min(fd) < target {
                break;
            }
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - ratio * (b - a);
                fc = psi(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + ratio * (b - a);
                fd = psi(d)?;
            }
        }
        Ok(fc.min(fd).exp().min(1.0))
    }

    /// `E[g(R) | r0 < R <= r_max]` with `R^2` uniform on `[r0^2, r_max^2]`.
    fn mean_visible_gain(&self, r0: f64) -> f64 {
        let pl = &self.cfg.radio.path_loss;
        let (a, b) = (r0 * r0, self.rmax * self.rmax);
        let beta = 0.5 * pl.alpha();
        let scale = pl.ref_distance().powf(pl.alpha());
        let moment = if (beta - 1.0).abs() < 1e-12 {
            (b / a).ln() / (b - a)
        } else {
            (b.powf(1.0 - beta) - a.powf(1.0 - beta)) / ((1.0 - beta) * (b - a))
        };
        scale * moment
    }

    /// Interference levels at which `P(I < x)` has a kink: the support edges
    /// and the range ends of one and two interferers.
    fn kink_levels(&self, r0: f64) -> Vec<f64> {
        let (Some(lo), Some(hi)) = (self.ctx.min_interference(), self.ctx.max_interference(r0)) else {
            return Vec::new();
        };
        let single = self.cfg.radio.p_interf * self.cfg.radio.path_loss.gain(r0);
        [lo, 2.0 * lo, single, lo + single, 2.0 * single, hi]
            .into_iter()
            .filter(|&v| v >= lo && v <= hi)
            .collect()
    }

    /// Serving distances at which the inversion argument crosses the support
    /// edges of a bounded interference, given `x(r0) = p_s g(r0) / t - sigma^2`.
    fn support_breaks(&self, t: f64) -> Vec<f64> {
        let radio = &self.cfg.radio;
        let mut breaks = Vec::new();
        if let Some(lo) = self.ctx.min_interference() {
            breaks.push(radio.path_loss.distance_for_gain(t * (radio.noise_power + lo) / radio.p_serve));
        }
        let per_unit_gain = self.cfg.net.co_channel_others().ceil() * radio.p_interf;
        if self.ctx.max_interference(self.rmin).is_some() && radio.p_serve / t > per_unit_gain {
            let g = radio.noise_power / (radio.p_serve / t - per_unit_gain);
            breaks.push(radio.path_loss.distance_for_gain(g));
        }
        breaks
    }
}

fn require_serving(cfg: &ScenarioConfig, expected: &FadingModel) -> Result<()> {
    if &cfg.radio.serving_fading != expected {
        return Err(Error::InvalidParameter(format!(
            "serving fading is {:?}, expected {:?}",
            cfg.radio.serving_fading, expected
        )));
    }
    Ok(())
}

/// Coverage probability with a Rayleigh-faded serving link.
pub fn coverage_rayleigh(cfg: &ScenarioConfig, t: SinrThreshold) -> Result<f64> {
    require_serving(cfg, &FadingModel::Rayleigh)?;
    let k = Kernel::new(cfg)?;
    let t = t.linear();
    let sigma2 = cfg.radio.noise_power;
    let noise_term = |r0: f64| (-t * sigma2 / k.signal(r0)).exp();
    let v = k.combine(
        k.rmax,
        &[],
        &cfg.quad,
        None,
        |r0| Ok(noise_term(r0)),
        |r0| Ok(noise_term(r0) * k.laplace_real(r0, t / k.signal(r0))?),
    )?;
    Ok(v.clamp(0.0, 1.0))
}

/// Coverage probability with an unfaded serving link.
pub fn coverage_nonfading(cfg: &ScenarioConfig, t: SinrThreshold) -> Result<f64> {
    require_serving(cfg, &FadingModel::NonFading)?;
    let k = Kernel::new(cfg)?;
    let t = t.linear();
    let radio = &cfg.radio;
    // SNR > T iff r0 < r_star
    let r_star = radio.path_loss.distance_for_gain(t * radio.noise_power / radio.p_serve);
    if r_star <= k.rmin {
        return Ok(0.0);
    }
    let upper = r_star.min(k.rmax);
    let snr_total = cfg.geom.cdf_serving_distance(k.n, upper);
    let breaks = k.support_breaks(t);
    let v = k.combine(
        upper,
        &breaks,
        &k.nested_spec(),
        Some(snr_total),
        |r0| Ok(if r0 < r_star { 1.0 } else { 0.0 }),
        |r0| k.interference_below(r0, k.signal(r0) / t - radio.noise_power),
    )?;
    Ok(v.clamp(0.0, 1.0))
}

/// Coverage probability for the configured serving fading.
pub fn coverage(cfg: &ScenarioConfig, t: SinrThreshold) -> Result<f64> {
    match cfg.radio.serving_fading {
        FadingModel::Rayleigh => coverage_rayleigh(cfg, t),
        FadingModel::NonFading => coverage_nonfading(cfg, t),
        FadingModel::CustomLaplace(_) => Err(Error::Unsupported(
            "coverage needs a Rayleigh or non-fading serving link".into(),
        )),
    }
}

/// The interference-free coverage term `P(SNR > T)`.
pub fn coverage_snr_only(cfg: &ScenarioConfig, t: SinrThreshold) -> Result<f64> {
    let k = Kernel::new(cfg)?;
    let radio = &cfg.radio;
    let t = t.linear();
    match radio.serving_fading {
        FadingModel::Rayleigh => integrate_pieces(
            |r0| Ok(k.pdf(r0) * (-t * radio.noise_power / k.signal(r0)).exp()),
            k.rmin,
            k.rmax.min(k.r_cut),
            &[],
            &cfg.quad,
        ),
        FadingModel::NonFading => {
            let r_star = radio.path_loss.distance_for_gain(t * radio.noise_power / radio.p_serve);
            Ok(cfg.geom.cdf_serving_distance(k.n, r_star.min(k.rmax)))
        }
        FadingModel::CustomLaplace(_) => Err(Error::Unsupported(
            "coverage needs a Rayleigh or non-fading serving link".into(),
        )),
    }
}

/// Average rate with a Rayleigh-faded serving link, in bit/s/Hz.
pub fn rate_rayleigh(cfg: &ScenarioConfig) -> Result<f64> {
    rate_rayleigh_truncated(cfg, 1.0)
}

/// Rayleigh rate with the `t` truncation point scaled by `factor`.
pub(crate) fn rate_rayleigh_truncated(cfg: &ScenarioConfig, factor: f64) -> Result<f64> {
    require_serving(cfg, &FadingModel::Rayleigh)?;
    let k = Kernel::new(cfg)?;
    let sigma2 = cfg.radio.noise_power;
    let spec = cfg.quad;
    // E[ln(1 + SNR) | r0] = int_0^inf exp(-a (e^t - 1)) dt with a = 1 / SNR
    let t_max = |a: f64| factor * (TAIL_EXPONENT / a).ln_1p();
    let a_term = |r0: f64| {
        let a = sigma2 / k.signal(r0);
        integrate_pieces(|t| Ok((-a * t.exp_m1()).exp()), 0.0, t_max(a), &[], &spec)
    };
    let b_term = |r0: f64| {
        let signal = k.signal(r0);
        let a = sigma2 / signal;
        integrate_pieces(
            |t| {
                let em1 = t.exp_m1();
                Ok((-a * em1).exp() * k.laplace_real(r0, em1 / signal)?)
            },
            0.0,
            t_max(a),
            &[],
            &spec,
        )
    };
    let nats = k.combine(k.rmax, &[], &spec, None, a_term, b_term)?;
    Ok(nats / std::f64::consts::LN_2 / f64::from(cfg.net.n_channels()))
}

/// Average rate with an unfaded serving link, in bit/s/Hz.
pub fn rate_nonfading(cfg: &ScenarioConfig) -> Result<f64> {
    require_serving(cfg, &FadingModel::NonFading)?;
    let k = Kernel::new(cfg)?;
    let radio = &cfg.radio;
    let sigma2 = radio.noise_power;
    let nested = k.nested_spec();
    let snr_total = match cfg.decomposition {
        Decomposition::FactoredOutsideIntegral => Some(snr_rate_integral(cfg)? * std::f64::consts::LN_2),
        Decomposition::InsideIntegral => None,
    };
    let a_term = |r0: f64| Ok((k.signal(r0) / sigma2).ln_1p());
    let b_term = |r0: f64| k.nonfading_sinr_rate(r0);
    let nats = k.combine(k.rmax, &[], &nested, snr_total, a_term, b_term)?;
    Ok(nats / std::f64::consts::LN_2 / f64::from(cfg.net.n_channels()))
}

/// `E[log2(1 + SNR)]` for an unfaded serving link via the serving-distance
/// CDF: `(1 / ln 2) int_0^inf F_R0(r(t)) dt` where `SNR(r(t)) = e^t - 1`.
pub fn snr_rate_integral(cfg: &ScenarioConfig) -> Result<f64> {
    let radio = &cfg.radio;
    let g = &cfg.geom;
    let n = cfg.net.n_sats();
    let t_end = radio.snr_at(g.altitude()).ln_1p();
    let rmax = g.max_range();
    let nats = integrate_pieces(
        |t| {
            let r = radio.path_loss.distance_for_gain(t.exp_m1() * radio.noise_power / radio.p_serve);
            Ok(g.cdf_serving_distance(n, r.min(rmax)))
        },
        0.0,
        t_end,
        &[],
        &cfg.quad,
    )?;
    Ok(nats / std::f64::consts::LN_2)
}

/// Average rate for the configured serving fading.
pub fn rate(cfg: &ScenarioConfig) -> Result<f64> {
    match cfg.radio.serving_fading {
        FadingModel::Rayleigh => rate_rayleigh(cfg),
        FadingModel::NonFading => rate_nonfading(cfg),
        FadingModel::CustomLaplace(_) => Err(Error::Unsupported(
            "rate needs a Rayleigh or non-fading serving link".into(),
        )),
    }
}

/// The interference-free rate term `(1/K) E[log2(1 + SNR)]`.
pub fn rate_snr_only(cfg: &ScenarioConfig) -> Result<f64> {
    let k = Kernel::new(cfg)?;
    let sigma2 = cfg.radio.noise_power;
    let spec = cfg.quad;
    let nats = match cfg.radio.serving_fading {
        FadingModel::Rayleigh => integrate_pieces(
            |r0| {
                let a = sigma2 / k.signal(r0);
                let inner = integrate_pieces(
                    |t| Ok((-a * t.exp_m1()).exp()),
                    0.0,
                    (TAIL_EXPONENT / a).ln_1p(),
                    &[],
                    &spec,
                )?;
                Ok(k.pdf(r0) * inner)
            },
            k.rmin,
            k.rmax.min(k.r_cut),
            &[],
            &spec,
        )?,
        FadingModel::NonFading => integrate_pieces(
            |r0| Ok(k.pdf(r0) * (k.signal(r0) / sigma2).ln_1p()),
            k.rmin,
            k.rmax.min(k.r_cut),
            &[],
            &spec,
        )?,
        FadingModel::CustomLaplace(_) => {
            return Err(Error::Unsupported(
                "rate needs a Rayleigh or non-fading serving link".into(),
            ))
        }
    };
    Ok(nats / std::f64::consts::LN_2 / f64::from(cfg.net.n_channels()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_semi_infinite;
    use proptest::prelude::*;

    fn scenario(alpha: f64, fading: FadingModel, k: u32) -> ScenarioConfig {
        let geom = GeometryParams::from_km(6371.0, 1200.0).unwrap();
        let net = NetworkParams::new(720.0, k).unwrap();
        let radio = RadioParams::new(
            10.0,
            10.0,
            dbm_to_watts(-98.0),
            PathLoss::km_reference(alpha).unwrap(),
            fading.clone(),
            fading,
        )
        .unwrap();
        ScenarioConfig::new(geom, net, radio).unwrap()
    }

    fn th(db: f64) -> SinrThreshold {
        SinrThreshold::from_db(db).unwrap()
    }

    #[test]
    fn unit_conversions() {
        assert!((dbm_to_watts(-98.0) - 1.585e-13).abs() < 1e-16);
        assert!((db_to_linear(10.0) - 10.0).abs() < 1e-12);
        assert!((th(3.0).db() - 3.0).abs() < 1e-12);
        assert!(SinrThreshold::new(0.0).is_err());
    }

    #[test]
    fn radio_validation() {
        let pl = PathLoss::km_reference(2.0).unwrap();
        assert!(RadioParams::new(1.0, 2.0, 1e-13, pl, FadingModel::Rayleigh, FadingModel::Rayleigh).is_err());
        assert!(RadioParams::new(1.0, 1.0, 0.0, pl, FadingModel::Rayleigh, FadingModel::Rayleigh).is_err());
        let pl15 = PathLoss::km_reference(1.5).unwrap();
        assert!(RadioParams::new(1.0, 1.0, 1e-13, pl15, FadingModel::Rayleigh, FadingModel::Rayleigh).is_err());
    }

    #[test]
    fn zero_threshold_limit_is_visibility_probability() {
        let cfg = scenario(4.0, FadingModel::Rayleigh, 20);
        let p = coverage_rayleigh(&cfg, SinrThreshold::new(1e-12).unwrap()).unwrap();
        let visible = 1.0 - (1.0 - 1200.0 / 15142.0_f64).powi(720);
        assert!((p - visible).abs() < 1e-8, "{p}");
    }

    #[test]
    fn wrong_serving_fading_is_rejected() {
        let cfg = scenario(4.0, FadingModel::Rayleigh, 20);
        assert!(coverage_nonfading(&cfg, th(0.0)).is_err());
        assert!(rate_nonfading(&cfg).is_err());
    }

    #[test]
    fn noise_limited_identity_rayleigh() {
        for decomposition in [Decomposition::InsideIntegral, Decomposition::FactoredOutsideIntegral] {
            let mut cfg = scenario(2.0, FadingModel::Rayleigh, 720);
            cfg.decomposition = decomposition;
            for db in [-10.0, 0.0, 20.0, 50.0] {
                let full = coverage_rayleigh(&cfg, th(db)).unwrap();
                let snr = coverage_snr_only(&cfg, th(db)).unwrap();
                assert!((full - snr).abs() < 1e-10, "{decomposition:?} {db}: {full} vs {snr}");
            }
            let full = rate_rayleigh(&cfg).unwrap();
            let snr = rate_snr_only(&cfg).unwrap();
            assert!((full - snr).abs() < 1e-10);
        }
    }

    #[test]
    fn noise_limited_identity_nonfading() {
        for decomposition in [Decomposition::InsideIntegral, Decomposition::FactoredOutsideIntegral] {
            let mut cfg = scenario(4.0, FadingModel::NonFading, 720);
            cfg.decomposition = decomposition;
            for db in [-10.0, 10.0, 14.0, 30.0] {
                let full = coverage_nonfading(&cfg, th(db)).unwrap();
                let r_star = cfg
                    .radio
                    .path_loss
                    .distance_for_gain(th(db).linear() * cfg.radio.noise_power / cfg.radio.p_serve);
                let expected = cfg.geom.cdf_serving_distance(720.0, r_star.min(cfg.geom.max_range()));
                assert!((full - expected).abs() < 1e-10, "{decomposition:?} {db}: {full} vs {expected}");
            }
            let full = rate_nonfading(&cfg).unwrap();
            let snr = rate_snr_only(&cfg).unwrap();
            assert!((full - snr).abs() < 1e-9, "{full} vs {snr}");
        }
    }

    #[test]
    fn threshold_above_peak_snr_gives_zero_snr_term() {
        let cfg = scenario(4.0, FadingModel::NonFading, 20);
        let peak = cfg.radio.snr_at(cfg.geom.altitude());
        let t = SinrThreshold::new(peak * 1.01).unwrap();
        assert_eq!(coverage_snr_only(&cfg, t).unwrap(), 0.0);
        assert_eq!(coverage_nonfading(&cfg, t).unwrap(), 0.0);
    }

    #[test]
    fn snr_rate_forms_agree() {
        // the serving-CDF form against the direct r0 integral of log2(1 + SNR)
        for alpha in [2.0, 4.0] {
            let cfg = scenario(alpha, FadingModel::NonFading, 720);
            let via_cdf = snr_rate_integral(&cfg).unwrap() / 720.0;
            let direct = rate_snr_only(&cfg).unwrap();
            assert!(((via_cdf - direct) / direct).abs() < 1e-8, "alpha={alpha}: {via_cdf} vs {direct}");
        }
    }

    /// `E_1(a) = int_a^inf e^-t / t dt` by quadrature.
    fn exp_integral_e1(a: f64) -> f64 {
        integrate_semi_infinite(|v: f64| (-a * v.exp()).exp(), 0.0, &QuadratureSpec {
            abs_tol: 1e-14,
            rel_tol: 1e-13,
            ..QuadratureSpec::default()
        })
        .unwrap()
        .value
    }

    #[test]
    fn rayleigh_snr_rate_matches_exponential_integral() {
        // E[ln(1 + G snr)] = e^{1/snr} E_1(1/snr) for G ~ Exp(1)
        let cfg = scenario(4.0, FadingModel::Rayleigh, 720);
        let k = Kernel::new(&cfg).unwrap();
        let nats = integrate_pieces(
            |r0| {
                let a = 1.0 / cfg.radio.snr_at(r0);
                Ok(k.pdf(r0) * a.exp() * exp_integral_e1(a))
            },
            k.rmin,
            k.r_cut,
            &[],
            &QuadratureSpec::default(),
        )
        .unwrap();
        let expected = nats / std::f64::consts::LN_2 / 720.0;
        let got = rate_rayleigh(&cfg).unwrap();
        assert!(((got - expected) / expected).abs() < 1e-8, "{got} vs {expected}");
    }

    #[test]
    fn rate_truncation_is_adequate() {
        let cfg = scenario(2.0, FadingModel::Rayleigh, 20);
        let base = rate_rayleigh_truncated(&cfg, 1.0).unwrap();
        let doubled = rate_rayleigh_truncated(&cfg, 2.0).unwrap();
        assert!((base - doubled).abs() < 1e-8, "{base} vs {doubled}");
    }

    #[test]
    fn huge_noise_drives_rates_to_zero() {
        for fading in [FadingModel::Rayleigh, FadingModel::NonFading] {
            let mut cfg = scenario(4.0, fading, 20);
            cfg.radio.noise_power = 1e3;
            let r = rate(&cfg).unwrap();
            assert!((0.0..1e-9).contains(&r), "{r}");
        }
    }

    #[test]
    fn coverage_reference_values() {
        // alpha = 2, K = 20, Rayleigh
        let cfg = scenario(2.0, FadingModel::Rayleigh, 20);
        let expected = [(-10.0, 0.9344), (0.0, 0.5924), (10.0, 0.1552), (30.0, 0.0594)];
        for (db, want) in expected {
            let got = coverage_rayleigh(&cfg, th(db)).unwrap();
            assert!((got - want).abs() < 5e-4, "{db} dB: {got} vs {want}");
        }
    }

    #[test]
    fn saturation_at_high_thresholds() {
        let cfg = scenario(2.0, FadingModel::Rayleigh, 20);
        let values: Vec<f64> = (0..=6)
            .map(|i| coverage_rayleigh(&cfg, th(30.0 + 5.0 * i as f64)).unwrap())
            .collect();
        let spread = values.iter().cloned().fold(f64::MIN, f64::max) - values.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 0.01, "{values:?}");
    }

    #[test]
    fn rate_argmax_over_channels() {
        let base = scenario(2.0, FadingModel::Rayleigh, 20);
        let mut best = (0, f64::MIN);
        for k in (5..=100).step_by(5) {
            let cfg = base.with_net(NetworkParams::new(720.0, k).unwrap());
            let r = rate_rayleigh(&cfg).unwrap();
            if r > best.1 {
                best = (k, r);
            }
        }
        assert!((40..=50).contains(&best.0), "argmax at K={}", best.0);
    }

    #[test]
    fn nonfading_coverage_monotone_and_bounded() {
        let cfg = scenario(2.0, FadingModel::NonFading, 20);
        let mut prev = 1.0;
        for db in [-10.0, 0.0, 5.0, 10.0, 20.0, 40.0] {
            let c = coverage_nonfading(&cfg, th(db)).unwrap();
            assert!((0.0..=1.0).contains(&c));
            assert!(c <= prev + 1e-6, "{db}: {c} > {prev}");
            prev = c;
        }
    }

    #[test]
    fn nonfading_sinr_rate_matches_log_expectation() {
        // E[ln(1 + S / (I + s2))] = int_0^inf e^{-z s2} L_I(z) (1 - e^{-z S}) / z dz
        for alpha in [2.0, 4.0] {
            let cfg = scenario(alpha, FadingModel::NonFading, 20);
            let k = Kernel::new(&cfg).unwrap();
            let sigma2 = cfg.radio.noise_power;
            for r0_km in [1300.0, 2200.0] {
                let r0 = r0_km * 1e3;
                let signal = k.signal(r0);
                let i_min = k.ctx.min_interference().unwrap();
                let z_lo = 1e-9 / signal;
                let z_hi = 60.0 / (i_min + sigma2);
                let oracle = integrate_pieces(
                    |u| {
                        let z = u.exp();
                        Ok(-(-z * signal).exp_m1() * (-z * sigma2).exp() * k.laplace_real(r0, z)?)
                    },
                    z_lo.ln(),
                    z_hi.ln(),
                    &[],
                    &QuadratureSpec::default(),
                )
                .unwrap()
                    + signal * z_lo;
                let got = k.nonfading_sinr_rate(r0).unwrap();
                assert!((got - oracle).abs() < 2e-5 * oracle.max(1.0), "alpha={alpha} r0={r0_km}: {got} vs {oracle}");
            }
        }
    }

    #[test]
    fn chernoff_bound_dominates_upper_tail() {
        let cfg = scenario(2.0, FadingModel::NonFading, 20);
        let k = Kernel::new(&cfg).unwrap();
        let r0 = 1500e3;
        let hi = k.ctx.max_interference(r0).unwrap();
        let lo = k.ctx.min_interference().unwrap();
        for frac in [0.02, 0.05, 0.1] {
            let x = lo + frac * (hi - lo);
            let bound = k.upper_tail_bound(r0, x).unwrap();
            let tail = 1.0 - k.interference_below(r0, x).unwrap();
            assert!((0.0..=1.0).contains(&bound));
            assert!(bound + 1e-5 >= tail, "x={x}: bound {bound} < tail {tail}");
        }
        assert_eq!(k.upper_tail_bound(r0, 1.001 * lo).unwrap(), 1.0);
    }

    #[test]
    fn nonfading_rate_is_finite_and_below_snr_bound() {
        let cfg = scenario(2.0, FadingModel::NonFading, 45);
        let r = rate_nonfading(&cfg).unwrap();
        let bound = rate_snr_only(&cfg).unwrap();
        assert!(r > 0.0 && r <= bound, "{r} vs {bound}");
    }

    #[test]
    fn decompositions_nearly_coincide() {
        let cfg = scenario(2.0, FadingModel::Rayleigh, 20);
        let inside = coverage_rayleigh(&cfg, th(0.0)).unwrap();
        let factored = coverage_rayleigh(
            &cfg.with_variant(LaplaceNormalization::ConditionalNormalized, Decomposition::FactoredOutsideIntegral),
            th(0.0),
        )
        .unwrap();
        assert!((inside - factored).abs() < 1e-3);
        let literal = coverage_rayleigh(
            &cfg.with_variant(LaplaceNormalization::PaperLiteral, Decomposition::InsideIntegral),
            th(0.0),
        )
        .unwrap();
        assert!((inside - literal).abs() > 0.05);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn rayleigh_coverage_monotone_in_threshold(db in -20.0f64..60.0, step in 0.5f64..10.0, alpha in prop::sample::select(vec![2.0, 4.0])) {
            let cfg = scenario(alpha, FadingModel::Rayleigh, 20);
            let a = coverage_rayleigh(&cfg, th(db)).unwrap();
            let b = coverage_rayleigh(&cfg, th(db + step)).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(b <= a + 1e-9);
        }

        #[test]
        fn rayleigh_coverage_monotone_in_channels(db in -10.0f64..40.0, alpha in prop::sample::select(vec![2.0, 4.0])) {
            let mut prev = 0.0;
            for k in [10u32, 20, 40, 720] {
                let cfg = scenario(alpha, FadingModel::Rayleigh, k);
                let c = coverage_rayleigh(&cfg, th(db)).unwrap();
                prop_assert!(c >= prev - 1e-9);
                prev = c;
            }
        }
    }
}
