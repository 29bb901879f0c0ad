//! Monte Carlo simulation of downlink SINR snapshots.
//!
//! Constellations are either a binomial point process (satellites i.i.d.
//! uniform on the orbital sphere) or a Walker-delta layout whose phase is
//! randomized per trial. Trials run in fixed blocks with one ChaCha stream
//! per block, so results depend only on the seed and never on the number of
//! worker threads.

use std::f64::consts::{PI, TAU};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Distance, GeometryParams};
use crate::metrics::{RadioParams, ScenarioConfig, SinrThreshold};
use crate::quadrature::CompensatedSum;
use crate::visibility::NetworkParams;

/// Trials per RNG stream.
const BLOCK_TRIALS: u64 = 1024;

/// A satellite position in Earth-centred Cartesian coordinates, metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatellitePosition([f64; 3]);

impl SatellitePosition {
    /// `direction` scaled to `radius`; `direction` need not be normalized.
    pub fn on_sphere(direction: [f64; 3], radius: f64) -> Result<Self> {
        let norm = (direction[0].powi(2) + direction[1].powi(2) + direction[2].powi(2)).sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidParameter("direction must be a nonzero vector".into()));
        }
        let k = radius / norm;
        Ok(Self([direction[0] * k, direction[1] * k, direction[2] * k]))
    }

    #[inline]
    pub fn xyz(&self) -> [f64; 3] {
        self.0
    }

    pub fn radius(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    /// Geocentric latitude in degrees.
    pub fn latitude_deg(&self) -> f64 {
        (self.0[2] / self.radius()).asin().to_degrees()
    }
}

#[inline]
fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Walker-delta constellation `i: T/P/F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkerParams {
    pub inclination_deg: f64,
    pub n_planes: u32,
    pub sats_per_plane: u32,
    pub phasing: u32,
    pub geom: GeometryParams,
}

impl WalkerParams {
    pub fn new(
        inclination_deg: f64,
        n_planes: u32,
        sats_per_plane: u32,
        phasing: u32,
        geom: GeometryParams,
    ) -> Result<Self> {
        if !(inclination_deg > 0.0 && inclination_deg <= 90.0) {
            return Err(Error::InvalidParameter(format!(
                "inclination must lie in (0, 90] degrees, got {inclination_deg}"
            )));
        }
        if n_planes == 0 || sats_per_plane == 0 {
            return Err(Error::InvalidParameter(
                "n_planes and sats_per_plane must be positive".into(),
            ));
        }
        if phasing >= n_planes {
            return Err(Error::InvalidParameter(format!(
                "phasing must be below n_planes ({n_planes}), got {phasing}"
            )));
        }
        Ok(Self {
            inclination_deg,
            n_planes,
            sats_per_plane,
            phasing,
            geom,
        })
    }

    /// 20 planes of 36 satellites with unit phasing.
    pub fn default_720(inclination_deg: f64, geom: GeometryParams) -> Result<Self> {
        Self::new(inclination_deg, 20, 36, 1, geom)
    }

    pub fn n_sats(&self) -> usize {
        self.n_planes as usize * self.sats_per_plane as usize
    }
}

/// A user on the Earth's surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserLocation {
    latitude_deg: f64,
    longitude_deg: f64,
}

impl UserLocation {
    pub fn new(latitude_deg: f64, longitude_deg: f64) -> Result<Self> {
        if !(latitude_deg.abs() <= 90.0 && longitude_deg.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "latitude must lie in [-90, 90] degrees, got {latitude_deg}"
            )));
        }
        Ok(Self {
            latitude_deg,
            longitude_deg,
        })
    }

    pub fn latitude_deg(&self) -> f64 {
        self.latitude_deg
    }

    pub fn longitude_deg(&self) -> f64 {
        self.longitude_deg
    }

    /// Outward unit normal.
    pub fn normal(&self) -> [f64; 3] {
        let (slat, clat) = self.latitude_deg.to_radians().sin_cos();
        let (slon, clon) = self.longitude_deg.to_radians().sin_cos();
        [clat * clon, clat * slon, slat]
    }
}

/// Monte Carlo run settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MCConfig {
    pub n_trials: u64,
    pub seed: u64,
    pub n_workers: usize,
    pub partition: ChannelPartition,
}

impl MCConfig {
    pub fn new(n_trials: u64, seed: u64) -> Self {
        Self {
            n_trials,
            seed,
            n_workers: 1,
            partition: ChannelPartition::Equal,
        }
    }

    pub fn with_workers(self, n_workers: usize) -> Self {
        Self { n_workers, ..self }
    }

    pub fn with_partition(self, partition: ChannelPartition) -> Self {
        Self { partition, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::InvalidParameter("n_trials must be at least 1".into()));
        }
        if self.n_workers == 0 {
            return Err(Error::InvalidParameter("n_workers must be at least 1".into()));
        }
        Ok(())
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_trials: u64,
}

impl MCEstimate {
    /// Whether `value` lies within `k` standard errors of the mean.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error
    }
}

/// How satellites are split into channel groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChannelPartition {
    /// Exactly `N / K` satellites per channel; requires `K | N`.
    #[default]
    Equal,
    /// Group sizes `floor(N / K)` or `ceil(N / K)`.
    Balanced,
}

/// Constellation sampled in each trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstellationKind {
    Bpp { user_latitude_deg: f64 },
    Walker { params: WalkerParams, user_latitude_deg: f64 },
}

impl ConstellationKind {
    pub fn bpp() -> Self {
        ConstellationKind::Bpp { user_latitude_deg: 0.0 }
    }

    fn user_latitude(&self) -> f64 {
        match self {
            ConstellationKind::Bpp { user_latitude_deg } | ConstellationKind::Walker { user_latitude_deg, .. } => {
                *user_latitude_deg
            }
        }
    }
}

/// `n` i.i.d. uniform points on the orbital sphere.
pub fn sample_bpp<R: RngCore>(n: usize, geom: &GeometryParams, rng: &mut R) -> Vec<SatellitePosition> {
    let mut out = Vec::with_capacity(n);
    sample_bpp_into(&mut out, n, geom, rng);
    out
}

fn sample_bpp_into<R: RngCore>(out: &mut Vec<SatellitePosition>, n: usize, geom: &GeometryParams, rng: &mut R) {
    out.clear();
    let radius = geom.orbit_radius();
    while out.len() < n {
        let d: [f64; 3] = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        // a zero triple has probability zero but is rejected all the same
        if let Ok(p) = SatellitePosition::on_sphere(d, radius) {
            out.push(p);
        }
    }
}

/// Walker-delta positions for the given right-ascension and in-plane
/// phase offsets (radians).
pub fn generate_walker(wp: &WalkerParams, raan_offset: f64, anomaly_offset: f64) -> Vec<SatellitePosition> {
    let mut out = Vec::with_capacity(wp.n_sats());
    generate_walker_into(&mut out, wp, raan_offset, anomaly_offset);
    out
}

fn generate_walker_into(out: &mut Vec<SatellitePosition>, wp: &WalkerParams, raan_offset: f64, anomaly_offset: f64) {
    out.clear();
    let radius = wp.geom.orbit_radius();
    let (si, ci) = wp.inclination_deg.to_radians().sin_cos();
    let planes = f64::from(wp.n_planes);
    let per_plane = f64::from(wp.sats_per_plane);
    for p in 0..wp.n_planes {
        let pf = f64::from(p);
        let (so, co) = (raan_offset + TAU * pf / planes).sin_cos();
        let plane_phase = anomaly_offset + TAU * f64::from(wp.phasing) * pf / (planes * per_plane);
        for q in 0..wp.sats_per_plane {
            let (su, cu) = (plane_phase + TAU * f64::from(q) / per_plane).sin_cos();
            out.push(SatellitePosition([
                radius * (co * cu - so * su * ci),
                radius * (so * cu + co * su * ci),
                radius * (su * si),
            ]));
        }
    }
}

/// Random split of `n` satellites into `k` channels of `n / k` each.
/// Returns the channel of every satellite and the channel of
/// `serving_index`, which is the one the user listens on.
pub fn assign_channels<R: RngCore>(n: usize, k: usize, serving_index: usize, rng: &mut R) -> Result<(Vec<u32>, u32)> {
    assign_channels_with(n, k, serving_index, ChannelPartition::Equal, rng)
}

pub fn assign_channels_with<R: RngCore>(
    n: usize,
    k: usize,
    serving_index: usize,
    partition: ChannelPartition,
    rng: &mut R,
) -> Result<(Vec<u32>, u32)> {
    let mut channels = Vec::with_capacity(n);
    fill_channels(&mut channels, n, k, partition)?;
    if serving_index >= n {
        return Err(Error::InvalidParameter(format!(
            "serving index {serving_index} out of range for {n} satellites"
        )));
    }
    channels.shuffle(rng);
    let serving = channels[serving_index];
    Ok((channels, serving))
}

/// Unshuffled channel labels with the partition's group sizes.
fn fill_channels(channels: &mut Vec<u32>, n: usize, k: usize, partition: ChannelPartition) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= k <= n, got k = {k}, n = {n}"
        )));
    }
    channels.clear();
    match partition {
        ChannelPartition::Equal => {
            if !n.is_multiple_of(k) {
                return Err(Error::InvalidParameter(format!(
                    "{k} channels do not divide {n} satellites"
                )));
            }
            let group = n / k;
            channels.extend((0..n).map(|i| (i / group) as u32));
        }
        ChannelPartition::Balanced => channels.extend((0..n).map(|i| (i % k) as u32)),
    }
    Ok(())
}

/// One SINR draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snapshot {
    /// Linear SINR; zero when no satellite is above the horizon.
    pub sinr: f64,
    /// Visible co-channel satellites other than the serving one.
    pub n_interferers: usize,
    /// Distance to the nearest satellite, visible or not.
    pub serving_distance: Distance,
}

/// Reusable buffers for snapshot evaluation.
#[derive(Default)]
struct Scratch {
    positions: Vec<SatellitePosition>,
    channels: Vec<u32>,
}

/// SINR seen by `user` for one constellation snapshot: the nearest
/// satellite serves, and visible satellites on its channel interfere.
pub fn snapshot_sinr<R: RngCore>(
    positions: &[SatellitePosition],
    user: &UserLocation,
    geom: &GeometryParams,
    radio: &RadioParams,
    net: &NetworkParams,
    partition: ChannelPartition,
    rng: &mut R,
) -> Result<Snapshot> {
    let mut channels = Vec::with_capacity(positions.len());
    snapshot_with(positions, &mut channels, user, geom, radio, net, partition, rng)
}

#[allow(clippy::too_many_arguments)]
fn snapshot_with<R: RngCore>(
    positions: &[SatellitePosition],
    channels: &mut Vec<u32>,
    user: &UserLocation,
    geom: &GeometryParams,
    radio: &RadioParams,
    net: &NetworkParams,
    partition: ChannelPartition,
    rng: &mut R,
) -> Result<Snapshot> {
    if positions.is_empty() {
        return Err(Error::InvalidParameter("no satellite positions".into()));
    }
    let n = positions.len();
    let k = net.n_channels() as usize;
    let normal = user.normal();
    let re = geom.earth_radius();
    let ro = geom.orbit_radius();
    // |s - u|^2 = (ro - re)^2 + 2 re (ro - n.s), free of cancellation overhead
    let dist = |p: &SatellitePosition| ((ro - re).powi(2) + 2.0 * re * (ro - dot(&normal, &p.0)).max(0.0)).sqrt();
    // visible iff n.s >= re, i.e. distance <= r_max
    let visible = |p: &SatellitePosition| dot(&normal, &p.0) >= re;

    let (serving, _) = positions
        .iter()
        .enumerate()
        .map(|(i, p)| (i, dot(&normal, &p.0)))
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
    let r0 = dist(&positions[serving]);
    let serving_distance = Distance::new(r0)?;

    fill_channels(channels, n, k, partition)?;
    channels.shuffle(rng);
    if !visible(&positions[serving]) {
        return Ok(Snapshot {
            sinr: 0.0,
            n_interferers: 0,
            serving_distance,
        });
    }
    let unsampleable = || Error::Unsupported("custom fading without a gain sampler".into());
    let g0 = radio.serving_fading.sample_gain(rng).ok_or_else(unsampleable)?;
    let signal = radio.p_serve * g0 * radio.path_loss.gain(r0);
    let user_channel = channels[serving];
    let mut interference = 0.0;
    let mut n_interferers = 0;
    for (i, p) in positions.iter().enumerate() {
        if i == serving || channels[i] != user_channel || !visible(p) {
            continue;
        }
        let g = radio.interfering_fading.sample_gain(rng).ok_or_else(unsampleable)?;
        interference += radio.p_interf * g * radio.path_loss.gain(dist(p));
        n_interferers += 1;
    }
    Ok(Snapshot {
        sinr: signal / (interference + radio.noise_power),
        n_interferers,
        serving_distance,
    })
}

/// Coverage estimates per threshold and the rate estimate from one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub coverage: Vec<MCEstimate>,
    pub rate: MCEstimate,
}

#[derive(Clone)]
struct BlockTally {
    covered: Vec<u64>,
    rate_sum: CompensatedSum,
    rate_sq_sum: CompensatedSum,
}

fn check_simulation(cfg: &ScenarioConfig, kind: &ConstellationKind, mc: &MCConfig) -> Result<usize> {
    mc.validate()?;
    cfg.validate()?;
    let n = cfg.net.integer_n_sats().ok_or_else(|| {
        Error::InvalidParameter(format!(
            "simulation needs an integer number of satellites, got {}",
            cfg.net.n_sats()
        ))
    })?;
    if mc.partition == ChannelPartition::Equal && n % cfg.net.n_channels() as usize != 0 {
        return Err(Error::InvalidParameter(format!(
            "{} channels do not divide {n} satellites",
            cfg.net.n_channels()
        )));
    }
    for fading in [&cfg.radio.serving_fading, &cfg.radio.interfering_fading] {
        if !fading.can_sample() {
            return Err(Error::Unsupported(format!(
                "fading model {} has no gain sampler",
                fading.label()
            )));
        }
    }
    UserLocation::new(kind.user_latitude(), 0.0)?;
    if let ConstellationKind::Walker { params, .. } = kind {
        if params.n_sats() != n {
            return Err(Error::InvalidParameter(format!(
                "Walker layout has {} satellites but the scenario has {n}",
                params.n_sats()
            )));
        }
        let g = &params.geom;
        let same = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs());
        if !same(g.earth_radius(), cfg.geom.earth_radius()) || !same(g.altitude(), cfg.geom.altitude()) {
            return Err(Error::InvalidParameter(
                "Walker geometry differs from the scenario geometry".into(),
            ));
        }
    }
    Ok(n)
}

fn run_block(
    cfg: &ScenarioConfig,
    kind: &ConstellationKind,
    thresholds: &[f64],
    mc: &MCConfig,
    n: usize,
    block: u64,
) -> Result<BlockTally> {
    let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
    rng.set_stream(block);
    let first = block * BLOCK_TRIALS;
    let trials = BLOCK_TRIALS.min(mc.n_trials - first);
    let mut tally = BlockTally {
        covered: vec![0; thresholds.len()],
        rate_sum: CompensatedSum::new(),
        rate_sq_sum: CompensatedSum::new(),
    };
    let mut scratch = Scratch::default();
    let inv_k = 1.0 / f64::from(cfg.net.n_channels());
    for _ in 0..trials {
        let user = match kind {
            ConstellationKind::Bpp { user_latitude_deg } => {
                sample_bpp_into(&mut scratch.positions, n, &cfg.geom, &mut rng);
                UserLocation::new(*user_latitude_deg, 0.0)?
            }
            ConstellationKind::Walker {
                params,
                user_latitude_deg,
            } => {
                let raan = rng.random::<f64>() * TAU;
                let anomaly = rng.random::<f64>() * TAU;
                let longitude = rng.random::<f64>() * 360.0;
                generate_walker_into(&mut scratch.positions, params, raan, anomaly);
                UserLocation::new(*user_latitude_deg, longitude)?
            }
        };
        let snap = snapshot_with(
            &scratch.positions,
            &mut scratch.channels,
            &user,
            &cfg.geom,
            &cfg.radio,
            &cfg.net,
            mc.partition,
            &mut rng,
        )?;
        for (count, &t) in tally.covered.iter_mut().zip(thresholds) {
            if snap.sinr > t {
                *count += 1;
            }
        }
        let r = inv_k * snap.sinr.ln_1p() / std::f64::consts::LN_2;
        tally.rate_sum.add(r);
        tally.rate_sq_sum.add(r * r);
    }
    Ok(tally)
}

/// Runs `mc.n_trials` snapshots and estimates coverage at each threshold
/// together with the average rate `(1/K) E[log2(1 + SINR)]`.
pub fn simulate(
    cfg: &ScenarioConfig,
    kind: &ConstellationKind,
    thresholds: &[SinrThreshold],
    mc: &MCConfig,
) -> Result<SimulationResult> {
    let n = check_simulation(cfg, kind, mc)?;
    let levels: Vec<f64> = thresholds.iter().map(SinrThreshold::linear).collect();
    let n_blocks = mc.n_trials.div_ceil(BLOCK_TRIALS);
    let work = || -> Result<Vec<BlockTally>> {
        (0..n_blocks)
            .into_par_iter()
            .map(|b| run_block(cfg, kind, &levels, mc, n, b))
            .collect()
    };
    let tallies = if mc.n_workers == 1 {
        (0..n_blocks)
            .map(|b| run_block(cfg, kind, &levels, mc, n, b))
            .collect::<Result<Vec<_>>>()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(mc.n_workers)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?
            .install(work)?
    };

    // fixed reduction order over blocks
    let mut covered = vec![0u64; levels.len()];
    let mut sum = CompensatedSum::new();
    let mut sq = CompensatedSum::new();
    for t in &tallies {
        for (c, x) in covered.iter_mut().zip(&t.covered) {
            *c += x;
        }
        sum.add(t.rate_sum.value());
        sq.add(t.rate_sq_sum.value());
    }
    let trials = mc.n_trials;
    let nf = trials as f64;
    let coverage = covered
        .iter()
        .map(|&c| {
            let p = c as f64 / nf;
            MCEstimate {
                mean: p,
                std_error: (p * (1.0 - p) / nf).sqrt(),
                n_trials: trials,
            }
        })
        .collect();
    let mean = sum.value() / nf;
    let var = if trials > 1 {
        ((sq.value() - nf * mean * mean) / (nf - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(SimulationResult {
        coverage,
        rate: MCEstimate {
            mean,
            std_error: (var / nf).sqrt(),
            n_trials: trials,
        },
    })
}

/// Fraction of trials with SINR above each threshold.
pub fn estimate_coverage(
    cfg: &ScenarioConfig,
    kind: &ConstellationKind,
    thresholds: &[SinrThreshold],
    mc: &MCConfig,
) -> Result<Vec<MCEstimate>> {
    Ok(simulate(cfg, kind, thresholds, mc)?.coverage)
}

/// Sample mean of `(1/K) log2(1 + SINR)`.
pub fn estimate_rate(cfg: &ScenarioConfig, kind: &ConstellationKind, mc: &MCConfig) -> Result<MCEstimate> {
    Ok(simulate(cfg, kind, &[], mc)?.rate)
}

/// Latitude density of a circular orbit with inclination `i`:
/// `cos(phi) / (pi sqrt(sin^2 i - sin^2 phi))` for `|phi| < i`.
pub fn inclined_orbit_latitude_density(inclination_deg: f64, latitude_deg: f64) -> f64 {
    let si = inclination_deg.to_radians().sin();
    let (sp, cp) = latitude_deg.to_radians().sin_cos();
    let d = si * si - sp * sp;
    if d <= 0.0 {
        return 0.0;
    }
    cp / (PI * d.sqrt())
}
