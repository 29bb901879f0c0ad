//! Number of co-channel satellites above the user's horizon.
//!
//! Given the serving distance `r0`, each of the `N/K - 1` other satellites on
//! the serving channel is independently visible with probability `P_I`.

use crate::error::{Error, Result};
use crate::geometry::{Distance, GeometryParams};

/// Constellation size `N` and number of orthogonal channels `K`.
///
/// `N` is real so that analytic results can be evaluated at a fitted,
/// non-integer effective size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkParams {
    n_sats: f64,
    n_channels: u32,
}

impl NetworkParams {
    pub fn new(n_sats: f64, n_channels: u32) -> Result<Self> {
        if !(n_sats.is_finite() && n_sats > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "n_sats must be positive, got {n_sats}"
            )));
        }
        if n_channels < 1 {
            return Err(Error::InvalidParameter("n_channels must be at least 1".into()));
        }
        if f64::from(n_channels) > n_sats {
            return Err(Error::InvalidParameter(format!(
                "n_channels ({n_channels}) exceeds n_sats ({n_sats})"
            )));
        }
        Ok(Self { n_sats, n_channels })
    }

    #[inline]
    pub fn n_sats(&self) -> f64 {
        self.n_sats
    }

    #[inline]
    pub fn n_channels(&self) -> u32 {
        self.n_channels
    }

    /// `N / K - 1`, the number of potential co-channel interferers.
    #[inline]
    pub fn co_channel_others(&self) -> f64 {
        (self.n_sats / f64::from(self.n_channels) - 1.0).max(0.0)
    }

    pub fn with_n_sats(&self, n_sats: f64) -> Result<Self> {
        Self::new(n_sats, self.n_channels)
    }

    pub fn with_n_channels(&self, n_channels: u32) -> Result<Self> {
        Self::new(self.n_sats, n_channels)
    }

    /// Integer constellation size, if `N` is integral.
    pub fn integer_n_sats(&self) -> Option<usize> {
        (self.n_sats.fract() == 0.0 && self.n_sats <= usize::MAX as f64).then_some(self.n_sats as usize)
    }

    /// Integer `N / K - 1`, if `K` divides an integral `N`.
    pub fn integer_co_channel_others(&self) -> Option<usize> {
        let n = self.integer_n_sats()?;
        let k = self.n_channels as usize;
        (n % k == 0).then(|| n / k - 1)
    }
}

/// Probability that a given co-channel satellite is visible, conditioned on
/// it being farther than the serving satellite.
pub fn prob_visible_interferer(geom: &GeometryParams, r0: Distance) -> f64 {
    visible_fraction(geom, r0.meters())
}

pub(crate) fn visible_fraction(geom: &GeometryParams, r0: f64) -> f64 {
    if r0 >= geom.max_range() {
        return 0.0;
    }
    let re = geom.earth_radius();
    let h = geom.altitude();
    let shift = (r0 * r0 - h * h) / (2.0 * re);
    let numer = h - shift;
    let denom = 2.0 * (re + h) - shift;
    (numer / denom).clamp(0.0, 1.0)
}

/// `P(N_I = 0 | R0 = r0) = (1 - P_I)^(N/K - 1)`, and 1 beyond the horizon.
pub fn prob_zero_interference(geom: &GeometryParams, net: &NetworkParams, r0: Distance) -> f64 {
    zero_interference(geom, net, r0.meters())
}

pub(crate) fn zero_interference(geom: &GeometryParams, net: &NetworkParams, r0: f64) -> f64 {
    if r0 > geom.max_range() {
        return 1.0;
    }
    let m = net.co_channel_others();
    if m == 0.0 {
        return 1.0;
    }
    let p = visible_fraction(geom, r0);
    (m * (-p).ln_1p()).exp()
}

/// `ln C(m, n)` for integers `0 <= n <= m`.
pub(crate) fn ln_binomial(m: usize, n: usize) -> f64 {
    let n = n.min(m - n);
    (0..n).map(|i| (((m - i) as f64) / ((i + 1) as f64)).ln()).sum()
}

/// Binomial probability of exactly `n` visible co-channel interferers.
pub fn pmf_num_interferers(geom: &GeometryParams, net: &NetworkParams, r0: Distance, n: usize) -> Result<f64> {
    let m = net.integer_co_channel_others().ok_or_else(|| {
        Error::Domain(format!(
            "N/K = {}/{} is not an integer",
            net.n_sats(),
            net.n_channels()
        ))
    })?;
    if n > m {
        return Ok(0.0);
    }
    let p = visible_fraction(geom, r0.meters());
    if p == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    let ln_pmf = ln_binomial(m, n) + n as f64 * p.ln() + (m - n) as f64 * (-p).ln_1p();
    Ok(ln_pmf.exp())
}
