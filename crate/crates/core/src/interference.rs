//! Laplace transform of the aggregate co-channel interference
//! `I = sum_n p_i G_n g(R_n)` conditioned on the serving distance.
//!
//! Every visible interferer contributes an i.i.d. factor
//!
//! ```text
//! phi(s) = 2 / (r_max^2 - r0^2) * int_{r0}^{r_max} L_G(s p_i g(r)) r dr
//! ```
//!
//! which is the transform of one interferer's received power when its
//! distance follows the conditional density on `[r0, r_max]`. The number of
//! visible interferers is binomial with `N/K - 1` trials and success
//! probability `P_I`, so the transform of `I` is a binomial mixture of
//! powers of `phi`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::RngCore;

use crate::error::{Error, Result};
use crate::geometry::{Distance, GeometryParams};
use crate::quadrature::{integrate_adaptive, integrate_semi_infinite, CompensatedSum, QuadratureSpec};
use crate::visibility::{visible_fraction, NetworkParams};

/// Complex argument or value of a Laplace transform.
pub type ComplexValue = Complex64;

/// Power-law path loss `g(r) = (r / ref_distance)^-alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLoss {
    alpha: f64,
    ref_distance: f64,
}

impl PathLoss {
    pub fn new(alpha: f64, ref_distance: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "path loss exponent must be positive, got {alpha}"
            )));
        }
        if !(ref_distance.is_finite() && ref_distance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "reference distance must be positive, got {ref_distance}"
            )));
        }
        Ok(Self { alpha, ref_distance })
    }

    /// Path loss referenced to 1 km.
    pub fn km_reference(alpha: f64) -> Result<Self> {
        Self::new(alpha, 1e3)
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn ref_distance(&self) -> f64 {
        self.ref_distance
    }

    #[inline]
    pub fn gain(&self, r: f64) -> f64 {
        (r / self.ref_distance).powf(-self.alpha)
    }

    /// Distance at which the gain equals `g`.
    #[inline]
    pub fn distance_for_gain(&self, g: f64) -> f64 {
        self.ref_distance * g.powf(-1.0 / self.alpha)
    }
}

pub type LaplaceFn = dyn Fn(Complex64) -> Complex64 + Send + Sync;
pub type GainSampler = dyn Fn(&mut dyn RngCore) -> f64 + Send + Sync;

/// A user-supplied fading law, given by its Laplace transform and
/// optionally a sampler for simulation.
#[derive(Clone)]
pub struct CustomFading {
    name: String,
    laplace: Arc<LaplaceFn>,
    sampler: Option<Arc<GainSampler>>,
}

impl CustomFading {
    pub fn name(&self) -> &str {
        &self.name
    }
}

/// Statistics of a power gain `G`.
#[derive(Clone, Default)]
pub enum FadingModel {
    /// `G ~ Exp(1)`, `L_G(z) = 1 / (1 + z)`.
    #[default]
    Rayleigh,
    /// `G = 1`, `L_G(z) = exp(-z)`.
    NonFading,
    CustomLaplace(CustomFading),
}

impl fmt::Debug for FadingModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FadingModel::Rayleigh => write!(f, "Rayleigh"),
            FadingModel::NonFading => write!(f, "NonFading"),
            FadingModel::CustomLaplace(c) => write!(f, "CustomLaplace({})", c.name),
        }
    }
}

impl PartialEq for FadingModel {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (FadingModel::Rayleigh, FadingModel::Rayleigh) => true,
            (FadingModel::NonFading, FadingModel::NonFading) => true,
            (FadingModel::CustomLaplace(a), FadingModel::CustomLaplace(b)) => Arc::ptr_eq(&a.laplace, &b.laplace),
            _ => false,
        }
    }
}

impl FadingModel {
    /// Registers a custom Laplace transform. Rejects transforms with
    /// `|L_G(0) - 1| > 1e-12`.
    pub fn custom<F>(name: impl Into<String>, laplace: F) -> Result<Self>
    where
        F: Fn(Complex64) -> Complex64 + Send + Sync + 'static,
    {
        let at_zero = laplace(Complex64::new(0.0, 0.0));
        if !((at_zero - 1.0).norm() <= 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "custom Laplace transform must equal 1 at 0, got {at_zero}"
            )));
        }
        Ok(FadingModel::CustomLaplace(CustomFading {
            name: name.into(),
            laplace: Arc::new(laplace),
            sampler: None,
        }))
    }

    /// Like [`FadingModel::custom`], with a gain sampler for simulation.
    pub fn custom_with_sampler<F, S>(name: impl Into<String>, laplace: F, sampler: S) -> Result<Self>
    where
        F: Fn(Complex64) -> Complex64 + Send + Sync + 'static,
        S: Fn(&mut dyn RngCore) -> f64 + Send + Sync + 'static,
    {
        match Self::custom(name, laplace)? {
            FadingModel::CustomLaplace(mut c) => {
                c.sampler = Some(Arc::new(sampler));
                Ok(FadingModel::CustomLaplace(c))
            }
            _ => unreachable!(),
        }
    }

    pub fn label(&self) -> &str {
        match self {
            FadingModel::Rayleigh => "rayleigh",
            FadingModel::NonFading => "nonfading",
            FadingModel::CustomLaplace(c) => &c.name,
        }
    }

    /// `L_G(z)`.
    pub fn laplace(&self, z: Complex64) -> Result<Complex64> {
        let v = match self {
            FadingModel::Rayleigh => (1.0 + z).inv(),
            FadingModel::NonFading => (-z).exp(),
            FadingModel::CustomLaplace(c) => (c.laplace)(z),
        };
        if v.re.is_finite() && v.im.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain(format!(
                "{} Laplace transform is not finite at {z}",
                self.label()
            )))
        }
    }

    /// Draws one gain. `None` for custom models without a sampler.
    pub fn sample_gain<R: RngCore>(&self, rng: &mut R) -> Option<f64> {
        use rand_distr::{Distribution, Exp1};
        match self {
            FadingModel::Rayleigh => Some(Exp1.sample(rng)),
            FadingModel::NonFading => Some(1.0),
            FadingModel::CustomLaplace(c) => c.sampler.as_ref().map(|s| s(rng)),
        }
    }

    pub fn can_sample(&self) -> bool {
        match self {
            FadingModel::CustomLaplace(c) => c.sampler.is_some(),
            _ => true,
        }
    }
}

/// `L_G(z)` for the given fading model.
pub fn laplace_gain(model: &FadingModel, z: ComplexValue) -> Result<ComplexValue> {
    model.laplace(z)
}

/// How the binomial mixture over the interferer count is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LaplaceNormalization {
    /// The mixture with the full-support interferer density factor
    /// `2 / (r_max^4 / r_min^2 - r0^2)` and no conditioning on `N_I > 0`.
    PaperLiteral,
    /// `E[exp(-s I) | N_I > 0]` with the interferer density normalized on
    /// `[r0, r_max]`.
    #[default]
    ConditionalNormalized,
}

/// Everything needed to evaluate `L_I(s)` at a given serving distance.
#[derive(Debug, Clone)]
pub struct InterferenceContext {
    pub geom: GeometryParams,
    pub net: NetworkParams,
    /// Interfering transmit power `p_i` in watts.
    pub p_interf: f64,
    pub path_loss: PathLoss,
    pub fading: FadingModel,
    pub normalization: LaplaceNormalization,
}

impl InterferenceContext {
    pub fn new(
        geom: GeometryParams,
        net: NetworkParams,
        p_interf: f64,
        path_loss: PathLoss,
        fading: FadingModel,
        normalization: LaplaceNormalization,
    ) -> Result<Self> {
        if !(p_interf.is_finite() && p_interf >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "interfering power must be non-negative, got {p_interf}"
            )));
        }
        Ok(Self {
            geom,
            net,
            p_interf,
            path_loss,
            fading,
            normalization,
        })
    }

    fn check_r0(&self, r0: f64) -> Result<()> {
        if r0 < self.geom.altitude() * (1.0 - 1e-12) || r0 > self.geom.support_max() {
            return Err(Error::Domain(format!(
                "serving distance {r0} m outside [{}, {}]",
                self.geom.altitude(),
                self.geom.support_max()
            )));
        }
        Ok(())
    }

    /// `(r_max^2 - r0^2) / (r_max^4 / r_min^2 - r0^2)`: the literal density
    /// factor integrated over `[r0, r_max]`. Equals `P_I`.
    fn literal_factor(&self, r0: f64) -> f64 {
        let rmax = self.geom.max_range();
        let rmin = self.geom.altitude();
        let b = rmax * rmax;
        let a = r0 * r0;
        if a >= b {
            return 0.0;
        }
        (b - a) / (b * b / (rmin * rmin) - a)
    }

    /// Smallest possible aggregate interference given `N_I > 0`, when the
    /// interfering gains are deterministic.
    pub(crate) fn min_interference(&self) -> Option<f64> {
        match self.fading {
            FadingModel::NonFading => Some(self.p_interf * self.path_loss.gain(self.geom.max_range())),
            _ => None,
        }
    }

    /// Largest possible aggregate interference, when the interfering gains
    /// are deterministic.
    pub(crate) fn max_interference(&self, r0: f64) -> Option<f64> {
        match self.fading {
            FadingModel::NonFading => {
                Some(self.net.co_channel_others().ceil() * self.p_interf * self.path_loss.gain(r0))
            }
            _ => None,
        }
    }
}

/// `ln(1 + z)` accurate for small `|z|`.
fn ln_1p_complex(z: Complex64) -> Complex64 {
    let (x, y) = (z.re, z.im);
    let modulus = 0.5 * (x * (2.0 + x) + y * y).ln_1p();
    Complex64::new(modulus, y.atan2(1.0 + x))
}

/// `exp(w) - 1` accurate for small `|w|`.
fn exp_m1_complex(w: Complex64) -> Complex64 {
    let (a, b) = (w.re, w.im);
    let half_sin = (0.5 * b).sin();
    let em1 = a.exp_m1();
    Complex64::new(em1 * b.cos() - 2.0 * half_sin * half_sin, a.exp() * b.sin())
}

/// Mixture of `m` i.i.d. interferer factors over the binomial count, for
/// real `m`, through the generating function `E[z^N_I] = (1 - p + p z)^m`.
///
/// For integer `m` this equals the binomial sum term by term.
pub(crate) fn mix_generating(normalization: LaplaceNormalization, p: f64, m: f64, phi: Complex64) -> Complex64 {
    match normalization {
        LaplaceNormalization::ConditionalNormalized => {
            if p <= 0.0 || m <= 0.0 || m * p < 1e-8 {
                // conditioned on N_I > 0 with rare interferers: one interferer
                return phi;
            }
            // ((1 - p + p phi)^m - (1 - p)^m) / (1 - (1 - p)^m)
            let ln_q = (-p).ln_1p();
            let z = p * phi / (1.0 - p);
            let numer = (m * ln_q).exp() * exp_m1_complex(m * ln_1p_complex(z));
            let denom = -(m * ln_q).exp_m1();
            numer / denom
        }
        LaplaceNormalization::PaperLiteral => {
            if p <= 0.0 || m <= 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            // (1 - p + p^2 phi)^m - (1 - p)^m
            let ln_q = (-p).ln_1p();
            let z = p * p * phi / (1.0 - p);
            (m * ln_q).exp() * exp_m1_complex(m * ln_1p_complex(z))
        }
    }
}

/// The binomial sum over `n = 1..=m` with weights `C(m, n) p^n (1-p)^(m-n)`
/// applied to `inner^n`, accumulated in log-space with compensation.
fn binomial_sum(p: f64, m: usize, inner: Complex64) -> Complex64 {
    if m == 0 || p <= 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let ln_p = p.ln();
    let ln_q = (-p).ln_1p();
    let inner_norm = inner.norm();
    let ln_inner = inner_norm.ln();
    let arg = inner.arg();
    let mode = ((m + 1) as f64 * p).floor() as usize;
    let mut re = CompensatedSum::new();
    let mut im = CompensatedSum::new();
    let mut ln_c = 0.0;
    for n in 1..=m {
        ln_c += (((m - n + 1) as f64) / n as f64).ln();
        if inner_norm == 0.0 {
            break;
        }
        let ln_mag = ln_c + n as f64 * (ln_p + ln_inner) + (m - n) as f64 * ln_q;
        let mag = ln_mag.exp();
        let (s, c) = (n as f64 * arg).sin_cos();
        re.add(mag * c);
        im.add(mag * s);
        let running = Complex64::new(re.value(), im.value()).norm();
        if n > mode && mag < 1e-18 * running {
            break;
        }
    }
    Complex64::new(re.value(), im.value())
}

fn mix_binomial(normalization: LaplaceNormalization, p: f64, m: usize, phi: Complex64) -> Complex64 {
    match normalization {
        LaplaceNormalization::ConditionalNormalized => {
            if p <= 0.0 || m == 0 {
                return phi;
            }
            let some_interferer = -(m as f64 * (-p).ln_1p()).exp_m1();
            binomial_sum(p, m, phi) / some_interferer
        }
        LaplaceNormalization::PaperLiteral => binomial_sum(p, m, p * phi),
    }
}

/// `phi(s)` by adaptive quadrature in `t = (r^2 - r0^2) / (r_max^2 - r0^2)`,
/// under which the normalized interferer density is uniform on `[0, 1]`.
fn phi_quadrature(ctx: &InterferenceContext, r0: f64, s: Complex64, spec: &QuadratureSpec) -> Result<Complex64> {
    let a = r0 * r0;
    let b = ctx.geom.max_range().powi(2);
    if a >= b {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let delta = b - a;
    let sp = s * ctx.p_interf;
    let err = std::cell::Cell::new(None);
    let value = integrate_adaptive(
        |t: f64| {
            let r = (a + delta * t).sqrt();
            match ctx.fading.laplace(sp * ctx.path_loss.gain(r)) {
                Ok(v) => v,
                Err(e) => {
                    err.set(Some(e));
                    Complex64::new(0.0, 0.0)
                }
            }
        },
        0.0,
        1.0,
        spec,
    )?
    .value;
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    Ok(value)
}

/// Closed-form `phi(s)` for Rayleigh interferers, real `s >= 0`.
fn phi_rayleigh_closed(ctx: &InterferenceContext, r0: f64, s: f64) -> Result<f64> {
    let alpha = ctx.path_loss.alpha();
    let a = r0 * r0;
    let b = ctx.geom.max_range().powi(2);
    if a >= b || s == 0.0 {
        return Ok(1.0);
    }
    let delta = b - a;
    let c = s * ctx.p_interf * ctx.path_loss.ref_distance().powf(alpha);
    if alpha == 2.0 {
        // 1 + (c / delta) ln((c + a) / (c + b))
        let x = delta / (c + a);
        let tail = if x < 1e-4 {
            x / 2.0 - x * x / 3.0 + x * x * x / 4.0
        } else {
            1.0 - x.ln_1p() / x
        };
        Ok(a / (c + a) + c / (c + a) * tail)
    } else if alpha == 4.0 {
        // 1 - (sqrt(c) / delta) atan(sqrt(c) delta / (c + a b))
        let ab = a * b;
        let y = delta * c.sqrt() / (c + ab);
        let tail = if y < 1e-4 {
            let y2 = y * y;
            y2 / 3.0 - y2 * y2 / 5.0 + y2 * y2 * y2 / 7.0
        } else {
            1.0 - y.atan() / y
        };
        Ok(ab / (c + ab) + c / (c + ab) * tail)
    } else {
        Err(Error::Unsupported(format!(
            "closed-form Rayleigh transform needs alpha in {{2, 4}}, got {alpha}"
        )))
    }
}

const SERIES_RADIUS: f64 = 8.0;
const ASYMPTOTIC_RADIUS: f64 = 40.0;

/// `h(z)` with `Gamma(a, z) = exp(-z) z^a h(z)`, for `|z| >= SERIES_RADIUS`
/// and `Re z >= 0`.
fn upper_gamma_scaled(a: f64, z: Complex64) -> Complex64 {
    if z.norm() >= ASYMPTOTIC_RADIUS {
        // h(z) ~ (1/z) sum_k (a-1)(a-2)...(a-k) / z^k
        let inv = z.inv();
        let mut term = inv;
        let mut sum = term;
        for k in 1..80 {
            let next = term * (a - k as f64) * inv;
            if next.norm() >= term.norm() {
                break;
            }
            term = next;
            sum += term;
            if term.norm() < 1e-17 * sum.norm() {
                break;
            }
        }
        return sum;
    }
    // modified Lentz evaluation of the continued fraction
    const TINY: f64 = 1e-300;
    let mut b = z + 1.0 - a;
    let mut c = Complex64::new(1.0 / TINY, 0.0);
    let mut d = b.inv();
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.norm() < TINY {
            d = Complex64::new(TINY, 0.0);
        }
        c = b + an / c;
        if c.norm() < TINY {
            c = Complex64::new(TINY, 0.0);
        }
        d = d.inv();
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).norm() < 1e-16 {
            break;
        }
    }
    h
}

/// `int_{w1}^{w2} w^{-beta} exp(-z w) dw` by term-wise integration of the
/// exponential series. Intended for `|z| w2 <= SERIES_RADIUS`.
fn power_exp_series(a: f64, w1: f64, w2: f64, z: Complex64) -> Complex64 {
    // a = 1 - beta; the k-th term is (-z)^k / k! * int w^{k + a - 1} dw
    let span = (w2 / w1).ln();
    let mut coeff = Complex64::new(1.0, 0.0);
    let mut sum = Complex64::new(0.0, 0.0);
    for k in 0..200 {
        if k > 0 {
            coeff *= -z / k as f64;
        }
        let e = k as f64 + a;
        let integral = if e.abs() < 1e-300 {
            span
        } else {
            w1.powf(e) * (e * span).exp_m1() / e
        };
        let term = coeff * integral;
        sum += term;
        if k as f64 > z.norm() * w2 && term.norm() < 1e-17 * sum.norm() {
            break;
        }
    }
    sum
}

/// `int_w^inf u^{-beta} exp(-z u) du` for `|z| w >= SERIES_RADIUS`.
fn power_exp_tail(a: f64, w: f64, z: Complex64) -> Complex64 {
    (-z * w).exp() * w.powf(a) * upper_gamma_scaled(a, z * w)
}

/// `int_1^rho w^{-beta} exp(-z w) dw`, `beta > 1`, `Re z >= 0`.
fn power_exp_integral(beta: f64, rho: f64, z: Complex64) -> Complex64 {
    let a = 1.0 - beta;
    let radius = z.norm();
    if radius * rho <= SERIES_RADIUS {
        return power_exp_series(a, 1.0, rho, z);
    }
    let split = SERIES_RADIUS / radius;
    if split <= 1.0 {
        return power_exp_tail(a, 1.0, z) - power_exp_tail(a, rho, z);
    }
    power_exp_series(a, 1.0, split, z) + power_exp_tail(a, split, z) - power_exp_tail(a, rho, z)
}

/// `phi(s)` for non-fading interferers at complex `s`, through incomplete
/// gamma functions of complex argument.
fn phi_nonfading_fast(ctx: &InterferenceContext, r0: f64, s: Complex64) -> Complex64 {
    let alpha = ctx.path_loss.alpha();
    let rmax = ctx.geom.max_range();
    if r0 >= rmax {
        return Complex64::new(1.0, 0.0);
    }
    // u = p g(r) / p g(r_max) runs over [1, (r_max / r0)^alpha]
    let u_lo = ctx.p_interf * ctx.path_loss.gain(rmax);
    let rho = (rmax / r0).powf(alpha);
    let z = s * u_lo;
    let delta = (rmax - r0) * (rmax + r0);
    let scale = 2.0 * rmax * rmax / (alpha * delta);
    scale * power_exp_integral(1.0 + 2.0 / alpha, rho, z)
}

/// `phi(s)` by the fastest accurate method for the context.
pub(crate) fn per_interferer_transform(
    ctx: &InterferenceContext,
    r0: f64,
    s: Complex64,
    spec: &QuadratureSpec,
) -> Result<Complex64> {
    let alpha = ctx.path_loss.alpha();
    match ctx.fading {
        FadingModel::NonFading if s.re >= 0.0 => Ok(phi_nonfading_fast(ctx, r0, s)),
        FadingModel::Rayleigh if s.im == 0.0 && s.re >= 0.0 && (alpha == 2.0 || alpha == 4.0) => {
            Ok(Complex64::new(phi_rayleigh_closed(ctx, r0, s.re)?, 0.0))
        }
        _ => phi_quadrature(ctx, r0, s, spec),
    }
}

/// `L_I(s)` at real-valued `N/K` through the binomial generating function.
///
/// This is the evaluator used by the coverage and rate integrals.
pub fn conditional_laplace(
    ctx: &InterferenceContext,
    r0: Distance,
    s: ComplexValue,
    spec: &QuadratureSpec,
) -> Result<ComplexValue> {
    let r0 = r0.meters();
    ctx.check_r0(r0)?;
    let phi = per_interferer_transform(ctx, r0, s, spec)?;
    Ok(mix_with_context(ctx, r0, phi))
}

pub(crate) fn mix_with_context(ctx: &InterferenceContext, r0: f64, phi: Complex64) -> Complex64 {
    let p = visible_fraction(&ctx.geom, r0);
    mix_generating(ctx.normalization, p, ctx.net.co_channel_others(), phi)
}

fn integer_others(net: &NetworkParams) -> Result<usize> {
    net.integer_co_channel_others().ok_or_else(|| {
        Error::Domain(format!(
            "binomial sum needs integer N/K, got {}/{}",
            net.n_sats(),
            net.n_channels()
        ))
    })
}

fn mix(ctx: &InterferenceContext, r0: f64, phi: Complex64) -> Complex64 {
    let p = visible_fraction(&ctx.geom, r0);
    match ctx.net.integer_co_channel_others() {
        Some(m) => mix_binomial(ctx.normalization, p, m, phi),
        None => mix_generating(ctx.normalization, p, ctx.net.co_channel_others(), phi),
    }
}

/// `L_I(s)` as a binomial sum over the interferer count, with each
/// interferer factor obtained by adaptive quadrature.
///
/// Requires integer `N/K`.
pub fn laplace_interference(
    ctx: &InterferenceContext,
    r0: Distance,
    s: ComplexValue,
    spec: &QuadratureSpec,
) -> Result<ComplexValue> {
    let r0 = r0.meters();
    ctx.check_r0(r0)?;
    let m = integer_others(&ctx.net)?;
    let phi = phi_quadrature(ctx, r0, s, spec)?;
    let p = visible_fraction(&ctx.geom, r0);
    Ok(mix_binomial(ctx.normalization, p, m, phi))
}

/// `L_I(s)` for Rayleigh interferers and `alpha` in `{2, 4}` via elementary
/// functions.
pub fn laplace_rayleigh_closed(ctx: &InterferenceContext, r0: Distance, s: f64) -> Result<f64> {
    if ctx.fading != FadingModel::Rayleigh {
        return Err(Error::InvalidParameter(
            "closed form applies to Rayleigh interferers only".into(),
        ));
    }
    if !(s >= 0.0) {
        return Err(Error::Domain(format!("s must be non-negative, got {s}")));
    }
    let r0 = r0.meters();
    ctx.check_r0(r0)?;
    let phi = phi_rayleigh_closed(ctx, r0, s)?;
    Ok(mix(ctx, r0, Complex64::new(phi, 0.0)).re)
}

/// `L_I(s)` for non-fading interferers by direct complex quadrature of the
/// radial integral.
pub fn laplace_nonfading(
    ctx: &InterferenceContext,
    r0: Distance,
    s: ComplexValue,
    spec: &QuadratureSpec,
) -> Result<ComplexValue> {
    if ctx.fading != FadingModel::NonFading {
        return Err(Error::InvalidParameter(
            "laplace_nonfading needs non-fading interferers".into(),
        ));
    }
    let r0 = r0.meters();
    ctx.check_r0(r0)?;
    let phi = phi_quadrature(ctx, r0, s, spec)?;
    Ok(mix(ctx, r0, phi))
}

/// `Gamma(a, x) = int_x^inf y^{a-1} e^{-y} dy` for real `x > 0`, by
/// quadrature in `v = ln(y / x)`.
pub fn upper_incomplete_gamma(a: f64, x: f64, spec: &QuadratureSpec) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Domain(format!("x must be positive, got {x}")));
    }
    // y = x e^v, dy = y dv: integrand y^a e^{-y}, scaled by x^a e^{-x}
    let scale = (a * x.ln() - x).exp();
    let inner = integrate_semi_infinite(
        |v: f64| {
            let ratio = v.exp();
            (a * v - x * (ratio - 1.0)).exp()
        },
        0.0,
        &QuadratureSpec {
            abs_tol: spec.abs_tol.min(1e-13),
            rel_tol: spec.rel_tol.min(1e-12),
            ..*spec
        },
    )?
    .value;
    Ok(scale * inner)
}

/// `L_I(s)` for non-fading interferers at real `s > 0` through the
/// incomplete gamma representation of the radial integral.
pub fn laplace_nonfading_gamma(ctx: &InterferenceContext, r0: Distance, s: f64, spec: &QuadratureSpec) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!("s must be positive, got {s}")));
    }
    let r0 = r0.meters();
    ctx.check_r0(r0)?;
    let alpha = ctx.path_loss.alpha();
    let rmax = ctx.geom.max_range();
    if r0 >= rmax {
        return Ok(mix(ctx, r0, Complex64::new(1.0, 0.0)).re);
    }
    let c = s * ctx.p_interf * ctx.path_loss.ref_distance().powf(alpha);
    let order = -2.0 / alpha;
    let g_hi = upper_incomplete_gamma(order, c * rmax.powf(-alpha), spec)?;
    let g_lo = upper_incomplete_gamma(order, c * r0.powf(-alpha), spec)?;
    // normalized factor 2 c^{2/alpha} / (alpha (r_max^2 - r0^2)) [ ... ]
    let delta = (rmax - r0) * (rmax + r0);
    let phi = 2.0 * c.powf(2.0 / alpha) / (alpha * delta) * (g_hi - g_lo);
    Ok(mix(ctx, r0, Complex64::new(phi, 0.0)).re)
}

/// `(r_max^2 - r0^2) / (r_max^4 / r_min^2 - r0^2)`, the factor by which the
/// literal interferer density differs from the normalized one.
pub fn literal_density_factor(ctx: &InterferenceContext, r0: Distance) -> f64 {
    ctx.literal_factor(r0.meters())
}
