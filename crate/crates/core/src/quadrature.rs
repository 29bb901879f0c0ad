//! Adaptive Gauss-Kronrod quadrature and Fourier inversion of Laplace
//! transforms into interval probabilities.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Tolerances and limits shared by every integration routine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Maximum number of interval bisections per adaptive integral.
    pub max_subdivisions: usize,
    /// Hard cap on the angular frequency reached by Fourier inversion.
    pub omega_truncation: f64,
    /// Convergence threshold on successive accelerated estimates of the
    /// inversion integral.
    pub omega_growth_check: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-9,
            max_subdivisions: 2000,
            omega_truncation: f64::INFINITY,
            omega_growth_check: 1e-8,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && !v.is_nan();
        if !positive(self.abs_tol) || !positive(self.rel_tol) || !positive(self.omega_growth_check) {
            return Err(Error::InvalidParameter(
                "quadrature tolerances must be positive".into(),
            ));
        }
        if self.max_subdivisions < 1 {
            return Err(Error::InvalidParameter(
                "max_subdivisions must be at least 1".into(),
            ));
        }
        if !positive(self.omega_truncation) {
            return Err(Error::InvalidParameter(
                "omega_truncation must be positive".into(),
            ));
        }
        Ok(())
    }

    fn tolerance_for(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

/// Values that can be integrated: real or complex.
pub trait QuadValue:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + Send + Sync
{
    fn zero() -> Self;
    /// Size used for error control; for complex values this is the larger
    /// of the real and imaginary magnitudes.
    fn magnitude(&self) -> f64;
    fn is_finite_value(&self) -> bool;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.re.abs().max(self.im.abs())
    }
    fn is_finite_value(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult<T> {
    pub value: T,
    pub error: f64,
    pub evaluations: usize,
}

// 21-point Kronrod extension of the 10-point Gauss rule.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689,
    0.973_906_528_517_171_720_077_964_012_084,
    0.930_157_491_355_708_226_001_207_180_060,
    0.865_063_366_688_984_510_732_096_688_423,
    0.780_817_726_586_416_897_063_717_578_345,
    0.679_409_568_299_024_406_234_327_365_115,
    0.562_757_134_668_604_683_339_000_099_273,
    0.433_395_394_129_247_190_799_265_943_166,
    0.294_392_862_701_460_198_131_126_603_104,
    0.148_874_338_981_631_210_884_826_001_130,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062,
    0.032_558_162_307_964_727_478_818_972_459,
    0.054_755_896_574_351_996_031_381_300_245,
    0.075_039_674_810_919_952_767_043_140_916,
    0.093_125_454_583_697_605_535_065_465_083,
    0.109_387_158_802_297_641_899_210_590_326,
    0.123_491_976_262_065_851_077_708_564_928,
    0.134_709_217_311_473_325_928_054_001_772,
    0.142_775_938_577_060_080_797_094_273_139,
    0.147_739_104_901_338_491_374_841_515_972,
    0.149_445_554_002_916_905_664_936_468_390,
];

// Gauss weights for XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893,
    0.149_451_349_150_580_593_145_776_339_658,
    0.219_086_362_515_982_043_995_534_934_228,
    0.269_266_719_309_996_355_091_226_921_569,
    0.295_524_224_714_752_870_173_892_994_651,
];

fn gauss_kronrod_21<T: QuadValue, F: Fn(f64) -> T>(f: &F, a: f64, b: f64) -> (T, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[10];
    let mut gauss = T::zero();
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        let pair = f1 + f2;
        kronrod = kronrod + pair * WGK[j];
        if j % 2 == 1 {
            gauss = gauss + pair * WG[j / 2];
        }
    }
    let kronrod = kronrod * half;
    let gauss = gauss * half;
    let error = (kronrod - gauss).magnitude();
    (kronrod, error)
}

struct Segment<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

impl<T> PartialEq for Segment<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T> Eq for Segment<T> {}
impl<T> PartialOrd for Segment<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Segment<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive integration of `f` over `[a, b]`.
///
/// The interval with the largest error estimate is bisected until the
/// summed error drops below `max(abs_tol, rel_tol * |estimate|)`.
pub fn integrate_adaptive<T, F>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<QuadResult<T>>
where
    T: QuadValue,
    F: Fn(f64) -> T,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "integration bounds must be finite, got [{a}, {b}]"
        )));
    }
    if a == b {
        return Ok(QuadResult {
            value: T::zero(),
            error: 0.0,
            evaluations: 0,
        });
    }
    if a > b {
        let r = integrate_adaptive(f, b, a, spec)?;
        return Ok(QuadResult {
            value: r.value * -1.0,
            ..r
        });
    }

    let (value, error) = gauss_kronrod_21(&f, a, b);
    let mut evaluations = 21;
    if !value.is_finite_value() {
        return Err(Error::Domain(format!(
            "integrand is not finite on [{a:e}, {b:e}]"
        )));
    }
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    // Segments too narrow to split further are parked here.
    let mut frozen_value = T::zero();
    let mut frozen_error = 0.0;
    let mut total = value;
    let mut total_error = error;

    for _ in 0..spec.max_subdivisions {
        if total_error <= spec.tolerance_for(total.magnitude()) {
            break;
        }
        let Some(seg) = heap.pop() else { break };
        let mid = 0.5 * (seg.a + seg.b);
        if !(seg.a < mid && mid < seg.b) || (seg.b - seg.a) <= 1e-14 * seg.a.abs().max(seg.b.abs()) {
            frozen_value = frozen_value + seg.value;
            frozen_error += seg.error;
            continue;
        }
        let (v1, e1) = gauss_kronrod_21(&f, seg.a, mid);
        let (v2, e2) = gauss_kronrod_21(&f, mid, seg.b);
        evaluations += 42;
        if !(v1.is_finite_value() && v2.is_finite_value()) {
            return Err(Error::Domain(format!(
                "integrand is not finite on [{:e}, {:e}]",
                seg.a, seg.b
            )));
        }
        total = total - seg.value + v1 + v2;
        total_error += e1 + e2 - seg.error;
        heap.push(Segment { a: seg.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: seg.b, value: v2, error: e2 });
    }

    // Re-sum from scratch to shed drift from the incremental updates.
    let mut value = frozen_value;
    let mut err = frozen_error;
    let mut segs: Vec<_> = heap.into_vec();
    segs.sort_by(|x, y| x.a.total_cmp(&y.a));
    for s in &segs {
        value = value + s.value;
        err += s.error;
    }
    if err > spec.tolerance_for(value.magnitude()) {
        return Err(Error::QuadratureFailure {
            estimate: value.magnitude(),
            error: err,
        });
    }
    Ok(QuadResult {
        value,
        error: err,
        evaluations,
    })
}

/// Adaptive integration of a fallible integrand. The first error raised
/// by `f` aborts the result.
pub(crate) fn integrate_fallible<F>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let failure = std::cell::RefCell::new(None);
    let out = integrate_adaptive(
        |x: f64| {
            if failure.borrow().is_some() {
                return 0.0;
            }
            match f(x) {
                Ok(v) => v,
                Err(e) => {
                    *failure.borrow_mut() = Some(e);
                    0.0
                }
            }
        },
        a,
        b,
        spec,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(out?.value)
}

/// [`integrate_fallible`] over `[a, b]` split at the interior `breaks`.
pub(crate) fn integrate_pieces<F>(f: F, a: f64, b: f64, breaks: &[f64], spec: &QuadratureSpec) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if b <= a {
        return Ok(0.0);
    }
    let mut points: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    let mut lo = a;
    let mut total = CompensatedSum::new();
    for hi in points.into_iter().chain(std::iter::once(b)) {
        total.add(integrate_fallible(&f, lo, hi, spec)?);
        lo = hi;
    }
    Ok(total.value())
}

/// Integral of `f` over `[a, inf)` through the map `x = a + t / (1 - t)`.
pub fn integrate_semi_infinite<T, F>(f: F, a: f64, spec: &QuadratureSpec) -> Result<QuadResult<T>>
where
    T: QuadValue,
    F: Fn(f64) -> T,
{
    integrate_adaptive(
        |t: f64| {
            let u = 1.0 - t;
            let v = f(a + t / u);
            if v.magnitude() == 0.0 {
                T::zero()
            } else {
                v * (1.0 / (u * u))
            }
        },
        0.0,
        1.0,
        spec,
    )
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

const XK15: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WK15: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG7: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// 15-point Kronrod estimate and its difference from the embedded 7-point
/// Gauss rule.
fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WK15[7];
    let mut gauss = fc * WG7[3];
    for (j, (&x, &w)) in XK15[..7].iter().zip(&WK15[..7]).enumerate() {
        let pair = f(center - half * x) + f(center + half * x);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG7[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// One oscillation panel: a single 15-point rule when it is accurate
/// enough, otherwise full adaptive integration.
fn integrate_panel<G: Fn(f64) -> f64>(g: &G, lo: f64, hi: f64, spec: &QuadratureSpec) -> Result<f64> {
    let (value, error) = gauss_kronrod_15(g, lo, hi);
    if value.is_finite() && error <= spec.tolerance_for(value.abs()) {
        return Ok(value);
    }
    Ok(integrate_adaptive(g, lo, hi, spec)?.value)
}

/// Number of consecutive negligible panels that ends inversion early.
const QUIET_PANELS: usize = 50;
/// First checkpoint at which the accelerated estimate is formed.
const FIRST_CHECKPOINT: usize = 16;
/// Panel cap used when `omega_truncation` is unbounded.
const MAX_PANELS: usize = 1 << 18;

/// Integrates a slowly decaying oscillatory `g` over `[0, inf)` as a series
/// of panels of width `period`.
///
/// Partial sums are averaged over the window `[K/2, K]`, which suppresses
/// oscillating tails, and one Richardson step `2 E_K - E_{K/2}` removes the
/// leading `c / K` drift of monotone tails. Convergence is tested at
/// checkpoints growing by factors of 3/2 and 4/3.
fn oscillatory_tail_integral<G: Fn(f64) -> f64>(g: G, period: f64, spec: &QuadratureSpec) -> Result<f64> {
    let panel_spec = QuadratureSpec {
        abs_tol: spec.abs_tol * 0.1,
        ..*spec
    };
    let mut partial: Vec<f64> = Vec::with_capacity(1024);
    let mut running = CompensatedSum::new();
    let mut quiet = 0usize;
    let mut checkpoint = FIRST_CHECKPOINT;
    let mut prev_accel: Option<f64> = None;
    let mut last_change = f64::INFINITY;

    let mut k = 0usize;
    loop {
        let lo = k as f64 * period;
        let hi = lo + period;
        if hi > spec.omega_truncation || k >= MAX_PANELS {
            let estimate = prev_accel.unwrap_or_else(|| running.value());
            return Err(Error::TruncationNonconvergence {
                estimate,
                change: last_change,
            });
        }
        let panel = integrate_panel(&g, lo, hi, &panel_spec)?;
        running.add(panel);
        partial.push(running.value());
        k += 1;

        if panel.abs() < spec.abs_tol / 100.0 {
            quiet += 1;
            if quiet >= QUIET_PANELS {
                return Ok(running.value());
            }
        } else {
            quiet = 0;
        }

        if k == checkpoint {
            let accel = 2.0 * windowed_mean(&partial, k) - windowed_mean(&partial, k / 2);
            if let Some(prev_a) = prev_accel {
                last_change = (accel - prev_a).abs();
                if last_change < spec.omega_growth_check {
                    return Ok(accel);
                }
            }
            prev_accel = Some(accel);
            // 16, 24, 32, 48, 64, ...
            checkpoint = if checkpoint.is_power_of_two() { checkpoint / 2 * 3 } else { checkpoint / 3 * 4 };
        }
    }
}

/// Mean of the partial sums `S_{k/2} .. S_k`.
fn windowed_mean(partial: &[f64], k: usize) -> f64 {
    let window = &partial[k / 2 - 1..k];
    window.iter().sum::<f64>() / window.len() as f64
}

/// `(e^{j x w} - 1) / (j w)`, with a series near `w = 0`.
#[inline]
pub(crate) fn step_kernel(x: f64, omega: f64) -> Complex64 {
    let theta = x * omega;
    if omega.abs() < 1e-4 / x {
        x * Complex64::new(1.0 - theta * theta / 6.0, theta / 2.0)
    } else {
        let (s, c) = theta.sin_cos();
        Complex64::new(s / omega, (1.0 - c) / omega)
    }
}

/// `P(0 < I < x)` for a non-negative random variable `I` whose Laplace
/// transform on the imaginary axis is `laplace(w) = L(jw)`.
///
/// Evaluates `(1/pi) * int_0^inf Re[L(jw) (e^{jxw} - 1) / (jw)] dw` over
/// half-period panels of width `pi / x`. The result is clamped to `[0, 1]`.
/// An atom of `I` at zero contributes half its mass.
pub fn interval_prob_from_laplace<L>(laplace: L, x: f64, spec: &QuadratureSpec) -> Result<f64>
where
    L: Fn(f64) -> Complex64,
{
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!("x must be non-negative, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Err(Error::Domain("x must be finite".into()));
    }
    let g = |w: f64| (laplace(w) * step_kernel(x, w)).re / PI;
    let value = oscillatory_tail_integral(g, PI / x, spec)?;
    Ok(value.clamp(0.0, 1.0))
}

/// Gil-Pelaez form of the same CDF:
/// `F(x) = L(0)/2 + (1/pi) * int_0^inf Im[e^{jxt} L(jt)] / t dt`.
///
/// An independent second path, kept for cross-checking.
pub fn gil_pelaez_cdf<L>(laplace: L, x: f64, spec: &QuadratureSpec) -> Result<f64>
where
    L: Fn(f64) -> Complex64,
{
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::Domain(format!("x must be positive, got {x}")));
    }
    let l0 = laplace(0.0).re;
    let g = |t: f64| {
        if t.abs() < 1e-4 / x {
            // Im[e^{jxt} L(jt)] / t -> x L(0) + Im L'(0) at t = 0; L'(0) is
            // approximated by a one-sided difference.
            let h = 1e-4 / x;
            let dl = (laplace(h) - laplace(0.0)) / h;
            return (x * l0 + dl.im) / PI;
        }
        let (s, c) = (x * t).sin_cos();
        (Complex64::new(c, s) * laplace(t)).im / (t * PI)
    };
    let value = oscillatory_tail_integral(g, 2.0 * PI / x, spec)?;
    Ok((0.5 * l0 + value).clamp(0.0, 1.0))
}
