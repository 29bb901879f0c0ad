//! Sampled satellite distances against the analytic distributions.

use leo_coverage::simkit::{sample_bpp, SatellitePosition};
use leo_coverage::GeometryParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn geom() -> GeometryParams {
    GeometryParams::from_km(6371.0, 1200.0).unwrap()
}

fn distance_to_pole(p: &SatellitePosition, re: f64) -> f64 {
    let [x, y, z] = p.xyz();
    (x * x + y * y + (z - re) * (z - re)).sqrt()
}

/// Kolmogorov-Smirnov statistic of `samples` against `cdf`.
fn ks_statistic(mut samples: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn any_distance_cdf_matches_samples() {
    let g = geom();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pts = sample_bpp(1_000_000, &g, &mut rng);
    let d: Vec<f64> = pts.iter().map(|p| distance_to_pole(p, g.earth_radius())).collect();
    let ks = ks_statistic(d, |r| g.cdf_any_distance(r));
    assert!(ks < 0.002, "KS = {ks}");
}

#[test]
fn nearest_distance_cdf_matches_samples() {
    let g = geom();
    let n = 100;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let d: Vec<f64> = (0..100_000)
        .map(|_| {
            sample_bpp(n, &g, &mut rng)
                .iter()
                .map(|p| distance_to_pole(p, g.earth_radius()))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let ks = ks_statistic(d, |r| g.cdf_serving_distance(n as f64, r));
    assert!(ks < 0.01, "KS = {ks}");
}

#[test]
fn pdf_integrates_to_cdf() {
    let g = geom();
    let (a, b) = (g.altitude(), g.max_range());
    let steps = 20_000;
    let h = (b - a) / steps as f64;
    let mut acc = 0.0;
    for i in 0..steps {
        let x = a + (i as f64 + 0.5) * h;
        acc += g.pdf_any_distance(x) * h;
    }
    assert!((acc - g.cdf_any_distance(b)).abs() < 1e-6);
}
