//! Deterministic synthetic worlds: beacon deployments, target trajectories,
//! noisy RSSI traces, localization sweeps and proximity experiments.
//!
//! Seeding scheme: every random stream is a `ChaCha8Rng` seeded with
//! [`derive_seed`] of a master seed, a domain tag and one or more counters
//! (repetition, cell, distance index). Per-beacon noise streams additionally
//! select ChaCha stream number `beacon_index`, so appending beacons to a
//! deployment never perturbs the noise of the existing ones.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Bounds, Dim, Position};
use crate::kalman::KalmanParams;
use crate::metrics::{error_2d, error_3d, ConfusionMatrix3};
use crate::particle::{LocalizationEngine, LocalizerMode, PfConfig};
use crate::pathloss::{classify_zone, PathLossModel, ProximityZone};
use crate::proximity::{ProximityMode, ProximityPipeline};
use crate::trace_io::RssiSample;

/// Distances below this are clamped before evaluating the path-loss model.
pub const MIN_DISTANCE_M: f64 = 0.01;

/// Default transmission period of the beacons.
pub const DEFAULT_PERIOD_MS: u64 = 100;

const TAG_TARGET: u64 = 0x7461_7267;
const TAG_NOISE: u64 = 0x6e6f_6973;
const TAG_FILTER: u64 = 0x6669_6c74;
const TAG_PROXIMITY: u64 = 0x7072_6f78;

/// SplitMix64-style mixing of a master seed with a tag and counters.
pub fn derive_seed(master: u64, tag: u64, counters: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    counters
        .iter()
        .fold(mix(master ^ mix(tag)), |acc, &c| mix(acc ^ mix(c)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Beacon {
    pub id: String,
    pub position: Position,
    pub model: PathLossModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub beacons: Vec<Beacon>,
    pub bounds: Bounds,
    pub dim: Dim,
}

impl Deployment {
    pub fn validate(&self) -> Result<()> {
        self.bounds.validate(self.dim)?;
        let mut seen = HashSet::new();
        for (i, b) in self.beacons.iter().enumerate() {
            if !seen.insert(b.id.as_str()) {
                return Err(Error::Config {
                    path: format!("beacons[{i}].id"),
                    message: format!("duplicate beacon id `{}`", b.id),
                });
            }
            if !self.bounds.contains(&b.position, self.dim) {
                return Err(Error::Config {
                    path: format!("beacons[{i}]"),
                    message: format!("beacon `{}` lies outside the bounds", b.id),
                });
            }
            b.model.validate().map_err(|e| Error::Config {
                path: format!("beacons[{i}]"),
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// The first `count` beacons.
    pub fn subset(&self, count: usize) -> Result<Deployment> {
        if count == 0 || count > self.beacons.len() {
            return Err(Error::InvalidParams(format!(
                "beacon count {count} outside 1..={}",
                self.beacons.len()
            )));
        }
        Ok(Deployment {
            beacons: self.beacons[..count].to_vec(),
            ..self.clone()
        })
    }

    pub fn positions(&self) -> BTreeMap<String, Position> {
        self.beacons
            .iter()
            .map(|b| (b.id.clone(), b.position))
            .collect()
    }

    pub fn models(&self) -> BTreeMap<String, PathLossModel> {
        self.beacons
            .iter()
            .map(|b| (b.id.clone(), b.model))
            .collect()
    }

    /// Eight beacons around a 7 m x 6 m room, all with the same model.
    ///
    /// In 3D the beacons alternate between ceiling (2.5 m) and desk (0.8 m)
    /// height inside a 3 m tall volume.
    pub fn office(dim: Dim, model: PathLossModel) -> Deployment {
        let xy = [
            (0.0, 0.0),
            (7.0, 6.0),
            (7.0, 0.0),
            (0.0, 6.0),
            (3.5, 0.0),
            (3.5, 6.0),
            (0.0, 3.0),
            (7.0, 3.0),
        ];
        let (bounds, heights) = match dim {
            Dim::Two => (Bounds::rect(7.0, 6.0), [0.0, 0.0]),
            Dim::Three => (Bounds::new([0.0; 3], [7.0, 6.0, 3.0]), [2.5, 0.8]),
        };
        let beacons = xy
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Beacon {
                id: format!("b{}", i + 1),
                position: Position::new(x, y, heights[i % 2]),
                model,
            })
            .collect();
        Deployment {
            beacons,
            bounds,
            dim,
        }
    }
}

/// Emulates beacon self-interference: above `min_beacons` the noise standard
/// deviation is scaled by `multiplier`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityNoise {
    pub min_beacons: usize,
    pub multiplier: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Standard deviation of additive Gaussian RSSI noise, dB.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Probability that a transmission is lost.
    #[serde(default)]
    pub dropout_p: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityNoise>,
}

fn default_sigma() -> f64 {
    3.0
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            sigma: default_sigma(),
            dropout_p: 0.0,
            seed: 0,
            density: None,
        }
    }
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self {
            sigma: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "noise sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        if !(0.0..=1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidParams(format!(
                "dropout_p must be in [0, 1], got {}",
                self.dropout_p
            )));
        }
        if let Some(d) = self.density {
            if !(d.multiplier >= 0.0 && d.multiplier.is_finite()) {
                return Err(Error::InvalidParams(
                    "density multiplier must be >= 0".into(),
                ));
            }
        }
        Ok(())
    }

    fn effective_sigma(&self, beacon_count: usize) -> f64 {
        match self.density {
            Some(d) if beacon_count >= d.min_beacons => self.sigma * d.multiplier,
            _ => self.sigma,
        }
    }
}

/// Piecewise-linear path through timed waypoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    waypoints: Vec<(u64, Position)>,
}

impl Trajectory {
    pub fn new(waypoints: Vec<(u64, Position)>) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(Error::EmptyInput(
                "trajectory needs at least one waypoint".into(),
            ));
        }
        if waypoints.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidParams(
                "waypoint times must be strictly increasing".into(),
            ));
        }
        Ok(Self { waypoints })
    }

    /// A target that stays at `pos` from 0 to `duration_ms`.
    pub fn stationary(pos: Position, duration_ms: u64) -> Self {
        let waypoints = if duration_ms == 0 {
            vec![(0, pos)]
        } else {
            vec![(0, pos), (duration_ms, pos)]
        };
        Self { waypoints }
    }

    pub fn waypoints(&self) -> &[(u64, Position)] {
        &self.waypoints
    }

    pub fn start_ms(&self) -> u64 {
        self.waypoints[0].0
    }

    pub fn end_ms(&self) -> u64 {
        self.waypoints[self.waypoints.len() - 1].0
    }

    pub fn position_at(&self, t_ms: u64) -> Position {
        let wp = &self.waypoints;
        if t_ms <= wp[0].0 {
            return wp[0].1;
        }
        for w in wp.windows(2) {
            let ((t0, p0), (t1, p1)) = (w[0], w[1]);
            if t_ms <= t1 {
                let f = (t_ms - t0) as f64 / (t1 - t0) as f64;
                return p0 + (p1 - p0) * f;
            }
        }
        wp[wp.len() - 1].1
    }
}

fn quantize(rssi: f64) -> f64 {
    let q = (rssi * 1e6).round() / 1e6;
    // 0 is reserved for end-of-stream.
    if q == 0.0 {
        -1e-6
    } else {
        q
    }
}

fn beacon_rng(seed: u64, beacon_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_NOISE, &[]));
    rng.set_stream(beacon_index as u64);
    rng
}

/// Synthesizes a trace: at every tick from the trajectory's start to its end
/// each beacon emits its model RSSI at the true range plus Gaussian noise,
/// unless the sample is dropped. RSSI values are quantized to 1e-6 dBm so
/// they survive a round trip through the text formats.
pub fn generate_trace(
    deployment: &Deployment,
    trajectory: &Trajectory,
    noise: &NoiseSpec,
    period_ms: u64,
) -> Result<Vec<RssiSample>> {
    if period_ms == 0 {
        return Err(Error::InvalidParams("period_ms must be > 0".into()));
    }
    deployment.validate()?;
    noise.validate()?;
    let sigma = noise.effective_sigma(deployment.beacons.len());
    let mut rngs: Vec<ChaCha8Rng> = (0..deployment.beacons.len())
        .map(|i| beacon_rng(noise.seed, i))
        .collect();

    let mut out = Vec::new();
    let mut t = trajectory.start_ms();
    while t <= trajectory.end_ms() {
        let target = trajectory.position_at(t);
        if !deployment.bounds.contains(&target, deployment.dim) {
            return Err(Error::OutOfBounds(t));
        }
        for (beacon, rng) in deployment.beacons.iter().zip(&mut rngs) {
            let z: f64 = rng.sample(StandardNormal);
            let keep = rng.random::<f64>() >= noise.dropout_p;
            if !keep {
                continue;
            }
            let d = deployment
                .dim
                .distance(&target, &beacon.position)
                .max(MIN_DISTANCE_M);
            let rssi = beacon.model.predict_rssi(d)? + sigma * z;
            out.push(RssiSample {
                t_ms: t,
                beacon_id: beacon.id.clone(),
                rssi: quantize(rssi),
            });
        }
        t += period_ms;
    }
    Ok(out)
}

/// Groups a trace into per-tick snapshots ordered by time.
pub fn snapshots(trace: &[RssiSample]) -> Vec<(u64, BTreeMap<String, f64>)> {
    let mut by_time: BTreeMap<u64, BTreeMap<String, f64>> = BTreeMap::new();
    for s in trace {
        by_time
            .entry(s.t_ms)
            .or_default()
            .insert(s.beacon_id.clone(), s.rssi);
    }
    by_time.into_iter().collect()
}

/// Parameters of a particles x beacons sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub beacon_counts: Vec<usize>,
    pub particle_counts: Vec<usize>,
    /// Stationary target positions per cell.
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// Filter steps (ticks) per target.
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Trailing estimates averaged into the error metric.
    #[serde(default = "default_eval_samples")]
    pub eval_samples: usize,
    #[serde(default = "default_period")]
    pub period_ms: u64,
    #[serde(default = "default_motion_sigma")]
    pub motion_sigma: f64,
    #[serde(default = "default_likelihood_sigma")]
    pub likelihood_sigma: f64,
    #[serde(default = "default_ess")]
    pub ess_threshold: f64,
    /// Random targets keep this distance from the walls, meters.
    #[serde(default = "default_margin")]
    pub target_margin: f64,
    /// Seed for target placement and particle filters.
    #[serde(default)]
    pub seed: u64,
}

fn default_repetitions() -> usize {
    10
}
fn default_steps() -> usize {
    30
}
fn default_eval_samples() -> usize {
    10
}
fn default_period() -> u64 {
    DEFAULT_PERIOD_MS
}
fn default_motion_sigma() -> f64 {
    0.25
}
fn default_likelihood_sigma() -> f64 {
    1.0
}
fn default_ess() -> f64 {
    0.5
}
fn default_margin() -> f64 {
    0.5
}

impl SweepConfig {
    pub fn new(
        beacon_counts: Vec<usize>,
        particle_counts: Vec<usize>,
        repetitions: usize,
        seed: u64,
    ) -> Self {
        Self {
            beacon_counts,
            particle_counts,
            repetitions,
            steps: default_steps(),
            eval_samples: default_eval_samples(),
            period_ms: default_period(),
            motion_sigma: default_motion_sigma(),
            likelihood_sigma: default_likelihood_sigma(),
            ess_threshold: default_ess(),
            target_margin: default_margin(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.particle_counts.is_empty() {
            return Err(Error::EmptyInput("particle_counts is empty".into()));
        }
        if self.beacon_counts.is_empty() {
            return Err(Error::EmptyInput("beacon_counts is empty".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidParams("repetitions must be >= 1".into()));
        }
        if self.steps == 0 || self.eval_samples == 0 || self.eval_samples > self.steps {
            return Err(Error::InvalidParams(
                "need 1 <= eval_samples <= steps".into(),
            ));
        }
        if self.period_ms == 0 {
            return Err(Error::InvalidParams("period_ms must be > 0".into()));
        }
        Ok(())
    }
}

/// Errors of one (particles, beacons) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub particles: usize,
    pub beacons: usize,
    pub pf_mean: f64,
    pub pf_std: f64,
    pub kfpf_mean: f64,
    pub kfpf_std: f64,
    /// Per-repetition errors, paired by index.
    pub pf_errors: Vec<f64>,
    pub kfpf_errors: Vec<f64>,
}

impl SweepCell {
    /// Relative improvement of KFPF over PF, percent.
    pub fn improvement_pct(&self) -> f64 {
        100.0 * (self.pf_mean - self.kfpf_mean) / self.pf_mean
    }
}

/// Sweep results, ordered by particle count then beacon count.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub dim: Dim,
    pub cells: Vec<SweepCell>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Stationary target for one repetition, uniform inside the inset bounds.
pub fn sweep_target(deployment: &Deployment, sweep: &SweepConfig, repetition: usize) -> Position {
    let mut rng =
        ChaCha8Rng::seed_from_u64(derive_seed(sweep.seed, TAG_TARGET, &[repetition as u64]));
    let b = &deployment.bounds;
    let mut p = Position::zeros();
    for a in 0..deployment.dim.axes() {
        let margin = sweep.target_margin.min(b.extent(a) / 4.0);
        p[a] = b.min[a] + margin + rng.random::<f64>() * (b.extent(a) - 2.0 * margin);
    }
    p
}

/// Localization error of PF and KFPF for one repetition of one cell. Both
/// filters see the same trace and the same particle seed.
fn run_repetition(
    deployment: &Deployment,
    sweep: &SweepConfig,
    noise: &NoiseSpec,
    kalman: &KalmanParams,
    particles: usize,
    repetition: usize,
) -> Result<(f64, f64)> {
    let target = sweep_target(deployment, sweep, repetition);
    let duration = (sweep.steps as u64 - 1) * sweep.period_ms;
    let trace_noise = NoiseSpec {
        seed: derive_seed(noise.seed, TAG_NOISE, &[repetition as u64]),
        ..*noise
    };
    let trace = generate_trace(
        deployment,
        &Trajectory::stationary(target, duration),
        &trace_noise,
        sweep.period_ms,
    )?;
    let by_tick: BTreeMap<u64, BTreeMap<String, f64>> = snapshots(&trace).into_iter().collect();

    let pf_seed = derive_seed(
        sweep.seed,
        TAG_FILTER,
        &[
            repetition as u64,
            particles as u64,
            deployment.beacons.len() as u64,
        ],
    );
    let config = PfConfig {
        n_particles: particles,
        bounds: deployment.bounds,
        dim: deployment.dim,
        motion_sigma: sweep.motion_sigma,
        likelihood_sigma: sweep.likelihood_sigma,
        ess_threshold: sweep.ess_threshold,
        seed: pf_seed,
    };

    let empty = BTreeMap::new();
    let mut errors = [0.0; 2];
    for (slot, mode) in [LocalizerMode::Pf, LocalizerMode::Kfpf]
        .into_iter()
        .enumerate()
    {
        let mut engine = LocalizationEngine::new(
            config.clone(),
            deployment.positions(),
            deployment.models(),
            *kalman,
        )?;
        let mut estimates = Vec::with_capacity(sweep.steps);
        for step in 0..sweep.steps {
            let t = step as u64 * sweep.period_ms;
            let snap = by_tick.get(&t).unwrap_or(&empty);
            estimates.push(engine.step(mode, snap)?.estimate);
        }
        let tail = &estimates[sweep.steps - sweep.eval_samples..];
        errors[slot] = match deployment.dim {
            Dim::Two => {
                let actual = vec![target.xy(); tail.len()];
                let est: Vec<_> = tail.iter().map(|p| p.xy()).collect();
                error_2d(&actual, &est)?
            }
            Dim::Three => error_3d(&vec![target; tail.len()], tail)?,
        };
    }
    Ok((errors[0], errors[1]))
}

/// Runs PF and KFPF over every (particles, beacons) cell on paired traces.
///
/// Work is spread over `jobs` threads (0 = rayon default); results are
/// identical for any thread count.
pub fn run_sweep(
    deployment: &Deployment,
    sweep: &SweepConfig,
    noise: &NoiseSpec,
    kalman: &KalmanParams,
    jobs: usize,
) -> Result<ScenarioResult> {
    sweep.validate()?;
    deployment.validate()?;
    noise.validate()?;
    let mut units = Vec::new();
    for &particles in &sweep.particle_counts {
        for &beacons in &sweep.beacon_counts {
            let subset = deployment.subset(beacons)?;
            for rep in 0..sweep.repetitions {
                units.push((particles, subset.clone(), rep));
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))?;
    let results: Vec<Result<(f64, f64)>> = pool.install(|| {
        units
            .par_iter()
            .map(|(particles, subset, rep)| {
                run_repetition(subset, sweep, noise, kalman, *particles, *rep)
            })
            .collect()
    });

    let mut cells = Vec::new();
    let mut iter = results.into_iter();
    for &particles in &sweep.particle_counts {
        for &beacons in &sweep.beacon_counts {
            let mut pf_errors = Vec::with_capacity(sweep.repetitions);
            let mut kfpf_errors = Vec::with_capacity(sweep.repetitions);
            for _ in 0..sweep.repetitions {
                let (pf, kfpf) = iter.next().expect("one result per unit")?;
                pf_errors.push(pf);
                kfpf_errors.push(kfpf);
            }
            let (pf_mean, pf_std) = mean_std(&pf_errors);
            let (kfpf_mean, kfpf_std) = mean_std(&kfpf_errors);
            cells.push(SweepCell {
                particles,
                beacons,
                pf_mean,
                pf_std,
                kfpf_mean,
                kfpf_std,
                pf_errors,
                kfpf_errors,
            });
        }
    }
    Ok(ScenarioResult {
        dim: deployment.dim,
        cells,
    })
}

/// Evaluation distances of the proximity protocol; `0 m` is represented by 0.0001 m.
pub const PROXIMITY_DISTANCES_M: [f64; 6] = [0.0001, 0.6, 1.8, 2.4, 4.3, 5.5];

/// Raw transmissions averaged into one reported sample.
pub const SAMPLES_PER_REPORT: usize = 10;

/// Confusion matrices of the three proximity pipelines on the same data.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximityExperiment {
    pub baseline: ConfusionMatrix3,
    pub sra: ConfusionMatrix3,
    pub skf: ConfusionMatrix3,
}

impl ProximityExperiment {
    pub fn get(&self, mode: ProximityMode) -> &ConfusionMatrix3 {
        match mode {
            ProximityMode::Baseline => &self.baseline,
            ProximityMode::Sra => &self.sra,
            ProximityMode::Skf => &self.skf,
        }
    }
}

/// Stands a receiver at each distance from one beacon and records
/// `samples_per_distance` decisions per pipeline.
///
/// Each decision follows [`SAMPLES_PER_REPORT`] raw transmissions. Every
/// distance starts fresh pipelines and all three pipelines see the identical
/// raw stream. The ground truth is the zone of the true distance. A pipeline
/// that has not yet committed a debounced zone is scored on its
/// instantaneous zone. Dropout is not applied here.
pub fn proximity_experiment(
    model: &PathLossModel,
    distances: &[f64],
    samples_per_distance: usize,
    noise: &NoiseSpec,
) -> Result<ProximityExperiment> {
    model.validate()?;
    noise.validate()?;
    let mut actual = Vec::new();
    let mut predicted: [Vec<ProximityZone>; 3] = Default::default();
    for (di, &d) in distances.iter().enumerate() {
        if !(d > 0.0) {
            return Err(Error::Domain(format!(
                "experiment distance must be > 0 (use 0.0001 for contact), got {d}"
            )));
        }
        let truth = classify_zone(Some(d))?;
        let mean = model.predict_rssi(d)?;
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(noise.seed, TAG_PROXIMITY, &[di as u64]));
        let mut pipelines = ProximityMode::ALL
            .iter()
            .map(|&m| ProximityPipeline::new(m, *model))
            .collect::<Result<Vec<_>>>()?;
        for _ in 0..samples_per_distance {
            let mut last = [None; 3];
            for _ in 0..SAMPLES_PER_REPORT {
                let z: f64 = rng.sample(StandardNormal);
                let rssi = quantize(mean + noise.sigma * z);
                for (slot, p) in pipelines.iter_mut().enumerate() {
                    last[slot] = Some(p.step(rssi)?);
                }
            }
            actual.push(truth);
            for (slot, decision) in last.iter().enumerate() {
                let decision = decision.expect("at least one sample per report");
                let zone = match decision.decided_zone {
                    ProximityZone::Unknown => decision.instantaneous_zone,
                    z => z,
                };
                predicted[slot].push(zone);
            }
        }
    }
    Ok(ProximityExperiment {
        baseline: ConfusionMatrix3::build(&actual, &predicted[0])?,
        sra: ConfusionMatrix3::build(&actual, &predicted[1])?,
        skf: ConfusionMatrix3::build(&actual, &predicted[2])?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_beacon() -> Deployment {
        Deployment {
            beacons: vec![Beacon {
                id: "b1".into(),
                position: Position::new(0.0, 0.0, 0.0),
                model: PathLossModel::environment_one(),
            }],
            bounds: Bounds::rect(5.0, 5.0),
            dim: Dim::Two,
        }
    }

    #[test]
    fn noiseless_trace_at_reference_distance() {
        let traj = Trajectory::stationary(Position::new(1.0, 0.0, 0.0), 1000);
        let trace = generate_trace(&one_beacon(), &traj, &NoiseSpec::noiseless(), 100).unwrap();
        assert_eq!(trace.len(), 11);
        assert!(trace.iter().all(|s| s.rssi == -62.78));
        assert_eq!(trace[3].t_ms, 300);
    }

    #[test]
    fn full_dropout_gives_empty_trace() {
        let traj = Trajectory::stationary(Position::new(1.0, 0.0, 0.0), 1000);
        let noise = NoiseSpec {
            dropout_p: 1.0,
            ..Default::default()
        };
        assert!(generate_trace(&one_beacon(), &traj, &noise, 100)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn same_seed_same_trace() {
        let dep = Deployment::office(Dim::Two, PathLossModel::environment_one());
        let traj = Trajectory::new(vec![
            (0, Position::new(1.0, 1.0, 0.0)),
            (2000, Position::new(6.0, 5.0, 0.0)),
        ])
        .unwrap();
        let noise = NoiseSpec {
            sigma: 3.0,
            dropout_p: 0.1,
            seed: 42,
            density: None,
        };
        let a = generate_trace(&dep, &traj, &noise, 100).unwrap();
        let b = generate_trace(&dep, &traj, &noise, 100).unwrap();
        assert_eq!(a, b);
        let c = generate_trace(&dep, &traj, &NoiseSpec { seed: 43, ..noise }, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn adding_beacons_keeps_existing_noise() {
        let dep = Deployment::office(Dim::Two, PathLossModel::environment_one());
        let traj = Trajectory::stationary(Position::new(2.0, 2.0, 0.0), 500);
        let noise = NoiseSpec {
            seed: 5,
            ..Default::default()
        };
        let small = generate_trace(&dep.subset(3).unwrap(), &traj, &noise, 100).unwrap();
        let big = generate_trace(&dep, &traj, &noise, 100).unwrap();
        let filtered: Vec<_> = big
            .into_iter()
            .filter(|s| ["b1", "b2", "b3"].contains(&s.beacon_id.as_str()))
            .collect();
        assert_eq!(small, filtered);
    }

    #[test]
    fn trajectory_leaving_bounds_is_an_error() {
        let traj = Trajectory::new(vec![
            (0, Position::new(1.0, 1.0, 0.0)),
            (1000, Position::new(9.0, 1.0, 0.0)),
        ])
        .unwrap();
        assert!(matches!(
            generate_trace(&one_beacon(), &traj, &NoiseSpec::noiseless(), 100),
            Err(Error::OutOfBounds(_))
        ));
    }

    #[test]
    fn trajectory_interpolates() {
        let traj = Trajectory::new(vec![
            (0, Position::new(0.0, 0.0, 0.0)),
            (1000, Position::new(2.0, 4.0, 0.0)),
        ])
        .unwrap();
        assert_eq!(traj.position_at(250), Position::new(0.5, 1.0, 0.0));
        assert_eq!(traj.position_at(5000), Position::new(2.0, 4.0, 0.0));
        assert!(Trajectory::new(vec![(5, Position::zeros()), (5, Position::zeros())]).is_err());
    }

    #[test]
    fn empirical_noise_matches_sigma() {
        let traj = Trajectory::stationary(Position::new(2.0, 0.0, 0.0), 100 * 19_999);
        let noise = NoiseSpec {
            sigma: 3.0,
            seed: 9,
            ..Default::default()
        };
        let trace = generate_trace(&one_beacon(), &traj, &noise, 100).unwrap();
        assert_eq!(trace.len(), 20_000);
        let mean = PathLossModel::environment_one().predict_rssi(2.0).unwrap();
        let var = trace.iter().map(|s| (s.rssi - mean).powi(2)).sum::<f64>() / trace.len() as f64;
        assert!((var.sqrt() - 3.0).abs() < 0.05 * 3.0);
    }

    #[test]
    fn density_multiplier_scales_noise() {
        let noise = NoiseSpec {
            sigma: 2.0,
            density: Some(DensityNoise {
                min_beacons: 8,
                multiplier: 1.5,
            }),
            ..Default::default()
        };
        assert_eq!(noise.effective_sigma(7), 2.0);
        assert_eq!(noise.effective_sigma(8), 3.0);
    }

    #[test]
    fn sweep_shape_and_noiseless_accuracy() {
        let dep = Deployment::office(Dim::Two, PathLossModel::new(2.0, -60.0, 1.0).unwrap());
        let sweep = SweepConfig::new(vec![3], vec![1000], 1, 3);
        let r = run_sweep(
            &dep,
            &sweep,
            &NoiseSpec::noiseless(),
            &KalmanParams::default(),
            1,
        )
        .unwrap();
        assert_eq!(r.cells.len(), 1);
        assert!(
            r.cells[0].pf_mean < 0.3 && r.cells[0].kfpf_mean < 0.3,
            "{:?}",
            r.cells[0]
        );

        let sweep = SweepConfig {
            steps: 5,
            eval_samples: 2,
            ..SweepConfig::new(vec![3, 4], vec![50, 60, 70], 2, 3)
        };
        let r = run_sweep(
            &dep,
            &sweep,
            &NoiseSpec::default(),
            &KalmanParams::default(),
            2,
        )
        .unwrap();
        assert_eq!(r.cells.len(), 6);
        assert_eq!((r.cells[1].particles, r.cells[1].beacons), (50, 4));
        assert!(r
            .cells
            .iter()
            .all(|c| c.pf_std >= 0.0 && c.kfpf_mean >= 0.0));
    }

    #[test]
    fn sweep_rejects_empty_particle_list() {
        let dep = Deployment::office(Dim::Two, PathLossModel::environment_one());
        let sweep = SweepConfig::new(vec![3], vec![], 1, 3);
        assert!(matches!(
            run_sweep(
                &dep,
                &sweep,
                &NoiseSpec::default(),
                &KalmanParams::default(),
                1
            ),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn noiseless_proximity_experiment() {
        let model = PathLossModel::environment_one();
        let exp = proximity_experiment(&model, &PROXIMITY_DISTANCES_M, 20, &NoiseSpec::noiseless())
            .unwrap();
        for mode in ProximityMode::ALL {
            assert_eq!(exp.get(mode).total(), 120);
        }
        assert_eq!(exp.sra.accuracy().unwrap(), 1.0);
        assert_eq!(exp.skf.accuracy().unwrap(), 1.0);
        // Far points (4.3, 5.5 m) range to 1.94 and 2.17 m with n = 2.
        assert_eq!(exp.baseline.counts[2], [0, 40, 0]);
        assert!((exp.baseline.accuracy().unwrap() - 80.0 / 120.0).abs() < 1e-12);
        assert!(proximity_experiment(&model, &[0.0], 1, &NoiseSpec::noiseless()).is_err());
    }

    #[test]
    fn derive_seed_separates_counters() {
        assert_ne!(derive_seed(1, 2, &[3]), derive_seed(1, 2, &[4]));
        assert_ne!(derive_seed(1, 2, &[3]), derive_seed(1, 3, &[3]));
        assert_eq!(derive_seed(1, 2, &[3, 4]), derive_seed(1, 2, &[3, 4]));
    }
}
