//! Distance distributions between a user on the Earth's surface and
//! satellites uniformly distributed on a concentric sphere.
//!
//! Satellites live on a sphere of radius `earth_radius + altitude`. The
//! user-to-satellite distance ranges over `[altitude, 2 * earth_radius +
//! altitude]`, and a satellite is above the user's horizon iff its distance
//! does not exceed [`GeometryParams::max_range`].

use crate::error::{Error, Result};

/// Earth radius and constellation altitude, both in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryParams {
    earth_radius: f64,
    altitude: f64,
}

/// A non-negative length in metres.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Distance(f64);

impl Distance {
    pub fn new(meters: f64) -> Result<Self> {
        if meters.is_finite() && meters >= 0.0 {
            Ok(Distance(meters))
        } else {
            Err(Error::InvalidParameter(format!(
                "distance must be finite and non-negative, got {meters}"
            )))
        }
    }

    pub fn from_km(km: f64) -> Result<Self> {
        Self::new(km * 1e3)
    }

    #[inline]
    pub fn meters(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn km(self) -> f64 {
        self.0 * 1e-3
    }
}

impl GeometryParams {
    pub fn new(earth_radius: f64, altitude: f64) -> Result<Self> {
        if !(earth_radius.is_finite() && earth_radius > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "earth_radius must be positive, got {earth_radius}"
            )));
        }
        if !(altitude.is_finite() && altitude > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "altitude must be positive, got {altitude}"
            )));
        }
        Ok(Self {
            earth_radius,
            altitude,
        })
    }

    pub fn from_km(earth_radius_km: f64, altitude_km: f64) -> Result<Self> {
        Self::new(earth_radius_km * 1e3, altitude_km * 1e3)
    }

    #[inline]
    pub fn earth_radius(&self) -> f64 {
        self.earth_radius
    }

    /// Altitude of the satellite shell, which is also the minimum
    /// user-to-satellite distance.
    #[inline]
    pub fn altitude(&self) -> f64 {
        self.altitude
    }

    #[inline]
    pub fn orbit_radius(&self) -> f64 {
        self.earth_radius + self.altitude
    }

    /// Distance to a satellite on the user's horizon.
    #[inline]
    pub fn max_range(&self) -> f64 {
        let h = self.altitude;
        (2.0 * self.earth_radius * h + h * h).sqrt()
    }

    /// Largest possible distance (satellite at the antipode).
    #[inline]
    pub fn support_max(&self) -> f64 {
        2.0 * self.earth_radius + self.altitude
    }

    /// `4 r_E (r_E + h)`, the normalizer of the distance CDF.
    #[inline]
    pub(crate) fn cdf_scale(&self) -> f64 {
        4.0 * self.earth_radius * self.orbit_radius()
    }

    /// CDF of the distance to any one satellite, clamped to `[0, 1]`.
    pub fn cdf_any_distance(&self, r: f64) -> f64 {
        let h = self.altitude;
        if r < h {
            return 0.0;
        }
        if r > self.support_max() {
            return 1.0;
        }
        ((r * r - h * h) / self.cdf_scale()).clamp(0.0, 1.0)
    }

    /// `1 - F_R(r)` computed without cancellation near the upper support edge.
    pub(crate) fn survival_any_distance(&self, r: f64) -> f64 {
        let h = self.altitude;
        if r < h {
            return 1.0;
        }
        let top = self.support_max();
        if r > top {
            return 0.0;
        }
        ((top - r) * (top + r) / self.cdf_scale()).clamp(0.0, 1.0)
    }

    pub fn pdf_any_distance(&self, r: f64) -> f64 {
        if r < self.altitude || r > self.support_max() {
            return 0.0;
        }
        2.0 * r / self.cdf_scale()
    }

    /// Density of the serving (nearest) distance among `n_sats` i.i.d.
    /// satellites. `n_sats` may be any positive real.
    pub fn pdf_serving_distance(&self, n_sats: f64, r0: f64) -> f64 {
        if r0 < self.altitude || r0 > self.support_max() {
            return 0.0;
        }
        let survival = self.survival_any_distance(r0);
        n_sats * survival.powf(n_sats - 1.0) * self.pdf_any_distance(r0)
    }

    /// `1 - (1 - F_R(r0))^N`.
    pub fn cdf_serving_distance(&self, n_sats: f64, r0: f64) -> f64 {
        let survival = self.survival_any_distance(r0);
        if survival <= 0.0 {
            return 1.0;
        }
        -(n_sats * survival.ln()).exp_m1()
    }

    /// Density of a non-serving satellite's distance given the serving
    /// distance `r0`.
    pub fn pdf_conditional_distance(&self, r0: f64, rn: f64) -> f64 {
        if rn <= r0 || rn > self.support_max() {
            return 0.0;
        }
        let survival = self.survival_any_distance(r0);
        if survival <= 0.0 {
            return 0.0;
        }
        self.pdf_any_distance(rn) / survival
    }
}

pub fn max_range(geom: &GeometryParams) -> Distance {
    Distance(geom.max_range())
}

pub fn cdf_any_distance(geom: &GeometryParams, r: Distance) -> f64 {
    geom.cdf_any_distance(r.meters())
}

pub fn pdf_any_distance(geom: &GeometryParams, r: Distance) -> f64 {
    geom.pdf_any_distance(r.meters())
}

pub fn pdf_serving_distance(geom: &GeometryParams, n_sats: f64, r0: Distance) -> f64 {
    geom.pdf_serving_distance(n_sats, r0.meters())
}

pub fn pdf_conditional_distance(geom: &GeometryParams, r0: Distance, rn: Distance) -> f64 {
    geom.pdf_conditional_distance(r0.meters(), rn.meters())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate_adaptive, QuadratureSpec};

    fn geom(h_km: f64) -> GeometryParams {
        GeometryParams::from_km(6371.0, h_km).unwrap()
    }

    #[test]
    fn max_range_values() {
        let g = geom(1200.0);
        assert!((g.max_range() / 1e3 - 4090.28).abs() < 5e-3);
        // sqrt(2 * 6371 * 550 + 550^2) km
        let expected = (2.0_f64 * 6371.0 * 550.0 + 550.0 * 550.0).sqrt();
        assert!((geom(550.0).max_range() / 1e3 - expected).abs() < 1e-9);
        assert!((geom(550.0).max_range() / 1e3 - 2703.81).abs() < 5e-3);
        let tiny = GeometryParams::new(6.371e6, 1e-6).unwrap();
        assert!(tiny.max_range() < 4.0);
    }

    #[test]
    fn max_range_bounds() {
        for h_km in [1.0, 300.0, 550.0, 1200.0, 20_000.0] {
            let g = geom(h_km);
            assert!(g.altitude() < g.max_range());
            assert!(g.max_range() < g.support_max());
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(GeometryParams::new(0.0, 1.0).is_err());
        assert!(GeometryParams::new(1.0, -1.0).is_err());
        assert!(GeometryParams::new(f64::NAN, 1.0).is_err());
        assert!(Distance::new(-1.0).is_err());
    }

    #[test]
    fn cdf_edges_and_values() {
        let g = geom(1200.0);
        assert_eq!(g.cdf_any_distance(g.altitude()), 0.0);
        assert_eq!(g.cdf_any_distance(g.support_max()), 1.0);
        assert!((g.cdf_any_distance(2.0e6) - 0.013269).abs() < 1e-6);
        let at_horizon = g.cdf_any_distance(g.max_range());
        assert!((at_horizon - 1200.0 / (2.0 * 7571.0)).abs() < 1e-12);
        assert!((at_horizon - 0.079250).abs() < 1e-6);
    }

    #[test]
    fn cdf_grid_is_monotone_and_bounded() {
        let g = geom(1200.0);
        let lo = 0.0;
        let hi = g.support_max() * 1.1;
        let mut prev = 0.0;
        for i in 0..=1000 {
            let r = lo + (hi - lo) * i as f64 / 1000.0;
            let c = g.cdf_any_distance(r);
            assert!((0.0..=1.0).contains(&c));
            assert!(c >= prev);
            if r < g.altitude() {
                assert_eq!(c, 0.0);
            }
            if r > g.support_max() {
                assert_eq!(c, 1.0);
            }
            prev = c;
        }
    }

    #[test]
    fn pdf_matches_cdf_derivative() {
        let g = geom(1200.0);
        let r = 2.0e6;
        let h = 1.0;
        let fd = (g.cdf_any_distance(r + h) - g.cdf_any_distance(r - h)) / (2.0 * h);
        let pdf = g.pdf_any_distance(r);
        assert!(((fd - pdf) / pdf).abs() < 1e-6);
        assert_eq!(g.pdf_any_distance(g.altitude() * 0.99), 0.0);
    }

    #[test]
    fn pdf_normalization() {
        let g = geom(1200.0);
        let spec = QuadratureSpec::default();
        let total = integrate_adaptive(|r| g.pdf_any_distance(r), g.altitude(), g.support_max(), &spec)
            .unwrap()
            .value;
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn serving_pdf_single_satellite_is_any_distance_pdf() {
        let g = geom(1200.0);
        for r in [1.2e6, 2.0e6, 5.0e6, 13.0e6] {
            assert!((g.pdf_serving_distance(1.0, r) - g.pdf_any_distance(r)).abs() < 1e-20);
        }
    }

    #[test]
    fn serving_pdf_normalizes() {
        let g = geom(1200.0);
        let spec = QuadratureSpec::default();
        for n in [1.0, 2.0, 10.0, 720.0] {
            let total = integrate_adaptive(
                |r| g.pdf_serving_distance(n, r),
                g.altitude(),
                g.support_max(),
                &spec,
            )
            .unwrap()
            .value;
            assert!((total - 1.0).abs() < 1e-9, "n={n}: {total}");
        }
    }

    #[test]
    fn serving_pdf_mass_inside_horizon() {
        let g = geom(1200.0);
        let spec = QuadratureSpec::default();
        let inside = integrate_adaptive(|r| g.pdf_serving_distance(720.0, r), g.altitude(), g.max_range(), &spec)
            .unwrap()
            .value;
        // 1 - (1 - 0.079250)^720 differs from 1 by ~2.4e-26
        assert!((inside - 1.0).abs() < 1e-9);
        let tail = (1.0_f64 - 1200.0 / (2.0 * 7571.0)).powf(720.0);
        assert!(tail < 1e-25 && tail > 1e-27);
        assert!((g.cdf_serving_distance(720.0, g.max_range()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn conditional_pdf() {
        let g = geom(1200.0);
        let r0 = 1.5e6;
        assert_eq!(g.pdf_conditional_distance(r0, r0), 0.0);
        assert_eq!(g.pdf_conditional_distance(r0, 1.3e6), 0.0);
        let spec = QuadratureSpec::default();
        let total = integrate_adaptive(|r| g.pdf_conditional_distance(r0, r), r0, g.support_max(), &spec)
            .unwrap()
            .value;
        assert!((total - 1.0).abs() < 1e-9);
        // mass below the horizon equals the visibility probability
        let visible = integrate_adaptive(|r| g.pdf_conditional_distance(r0, r), r0, g.max_range(), &spec)
            .unwrap()
            .value;
        let expected = (g.cdf_any_distance(g.max_range()) - g.cdf_any_distance(r0))
            / (1.0 - g.cdf_any_distance(r0));
        assert!((visible - expected).abs() < 1e-10);
    }
}
