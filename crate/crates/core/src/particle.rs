//! Sequential importance resampling (bootstrap) particle filter over position,
//! and the engine that drives it from per-beacon RSSI snapshots.
//!
//! The importance density is the motion prior, so each weight update multiplies
//! the previous weight by the measurement likelihood. Ranges are converted from
//! RSSI through each beacon's path-loss model, and the likelihood of a particle
//! is a product of independent Gaussians in the distance domain.
//!
//! In cascaded (KFPF) mode each beacon's RSSI first passes through its own
//! [`KalmanState`](crate::kalman::KalmanState) before range conversion.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Bounds, Dim, Position};
use crate::kalman::{KalmanParams, KalmanState};
use crate::pathloss::PathLossModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub pos: Position,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfConfig {
    pub n_particles: usize,
    pub bounds: Bounds,
    #[serde(default)]
    pub dim: Dim,
    /// Random-walk standard deviation per axis per step, meters.
    pub motion_sigma: f64,
    /// Standard deviation of the range likelihood, meters.
    pub likelihood_sigma: f64,
    /// Resample when ESS drops below this fraction of the particle count.
    pub ess_threshold: f64,
    pub seed: u64,
}

impl PfConfig {
    pub fn new(n_particles: usize, bounds: Bounds, dim: Dim, seed: u64) -> Self {
        Self {
            n_particles,
            bounds,
            dim,
            motion_sigma: 0.25,
            likelihood_sigma: 1.0,
            ess_threshold: 0.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::InvalidParams("n_particles must be >= 1".into()));
        }
        self.bounds.validate(self.dim)?;
        if !(self.motion_sigma > 0.0 && self.likelihood_sigma > 0.0) {
            return Err(Error::InvalidParams("sigmas must be > 0".into()));
        }
        if !(self.ess_threshold > 0.0 && self.ess_threshold <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "ess_threshold must be in (0, 1], got {}",
                self.ess_threshold
            )));
        }
        Ok(())
    }
}

/// A range estimate to one beacon.
#[derive(Debug, Clone, PartialEq)]
pub struct BeaconObservation {
    pub beacon_id: String,
    pub est_distance: f64,
}

impl BeaconObservation {
    pub fn new(beacon_id: impl Into<String>, est_distance: f64) -> Self {
        Self {
            beacon_id: beacon_id.into(),
            est_distance,
        }
    }
}

/// Outcome of a weight update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightUpdate {
    Applied,
    /// No observations; weights untouched.
    Empty,
    /// No particle kept a positive weight; weights were reset to uniform.
    Degenerate,
}

/// Weighted particle approximation of the position posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub particles: Vec<Particle>,
    pub dim: Dim,
}

impl ParticleSet {
    /// Uniform prior over the configured bounds with equal weights.
    pub fn init<R: Rng + ?Sized>(config: &PfConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let n = config.n_particles;
        let w = 1.0 / n as f64;
        let b = &config.bounds;
        let particles = (0..n)
            .map(|_| {
                let mut pos = Position::zeros();
                for a in 0..config.dim.axes() {
                    pos[a] = b.min[a] + rng.random::<f64>() * b.extent(a);
                }
                Particle { pos, w }
            })
            .collect();
        Ok(Self {
            particles,
            dim: config.dim,
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.particles.iter().map(|p| p.w)
    }

    /// Bounded Gaussian random walk; weights are unchanged.
    pub fn predict<R: Rng + ?Sized>(&mut self, config: &PfConfig, rng: &mut R) {
        let dim = self.dim;
        for p in &mut self.particles {
            for a in 0..dim.axes() {
                let step: f64 = rng.sample(StandardNormal);
                p.pos[a] += config.motion_sigma * step;
            }
            p.pos = config.bounds.clamp(&p.pos, dim);
        }
    }

    /// Multiplies each weight by the range likelihood of every observation and
    /// renormalizes.
    ///
    /// Computed in the log domain; if no particle retains a positive finite
    /// weight the set falls back to uniform weights.
    pub fn update_weights(
        &mut self,
        obs: &[BeaconObservation],
        beacons: &BTreeMap<String, Position>,
        likelihood_sigma: f64,
    ) -> Result<WeightUpdate> {
        if obs.is_empty() {
            return Ok(WeightUpdate::Empty);
        }
        let anchors = obs
            .iter()
            .map(|o| {
                beacons
                    .get(&o.beacon_id)
                    .map(|pos| (pos, o.est_distance))
                    .ok_or_else(|| Error::UnknownBeacon(o.beacon_id.clone()))
            })
            .collect::<Result<Vec<_>>>()?;

        let inv_two_var = 1.0 / (2.0 * likelihood_sigma * likelihood_sigma);
        let dim = self.dim;
        let log_w: Vec<f64> = self
            .particles
            .iter()
            .map(|p| {
                let ll: f64 = anchors
                    .iter()
                    .map(|(beacon, range)| {
                        let r = dim.distance(&p.pos, beacon) - range;
                        -r * r * inv_two_var
                    })
                    .sum();
                p.w.ln() + ll
            })
            .collect();

        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            self.reset_uniform();
            return Ok(WeightUpdate::Degenerate);
        }
        let mut total = 0.0;
        for (p, lw) in self.particles.iter_mut().zip(&log_w) {
            p.w = (lw - max).exp();
            total += p.w;
        }
        for p in &mut self.particles {
            p.w /= total;
        }
        Ok(WeightUpdate::Applied)
    }

    fn reset_uniform(&mut self) {
        let w = 1.0 / self.particles.len() as f64;
        for p in &mut self.particles {
            p.w = w;
        }
    }

    /// Effective sample size `1 / sum(w^2)`.
    pub fn ess(&self) -> f64 {
        1.0 / self.weights().map(|w| w * w).sum::<f64>()
    }

    /// Systematic resampling when ESS falls below the configured fraction.
    /// Returns whether resampling happened.
    pub fn resample<R: Rng + ?Sized>(&mut self, config: &PfConfig, rng: &mut R) -> bool {
        let n = self.particles.len();
        if self.ess() >= config.ess_threshold * n as f64 {
            return false;
        }
        let weights: Vec<f64> = self.weights().collect();
        let offset: f64 = rng.random();
        let w = 1.0 / n as f64;
        self.particles = systematic_indices(&weights, offset)
            .into_iter()
            .map(|i| Particle {
                pos: self.particles[i].pos,
                w,
            })
            .collect();
        true
    }

    /// Weighted mean position.
    pub fn estimate(&self) -> Position {
        self.particles
            .iter()
            .fold(Position::zeros(), |acc, p| acc + p.pos * p.w)
    }
}

/// Parent indices chosen by systematic resampling with the given offset in `[0, 1)`.
///
/// Each parent `i` is drawn either `floor(N w_i)` or `ceil(N w_i)` times.
pub fn systematic_indices(weights: &[f64], offset: f64) -> Vec<usize> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(n);
    let mut cumulative = 0.0;
    let mut i = 0;
    for j in 0..n {
        let u = (offset + j as f64) / n as f64 * total;
        while i + 1 < n && cumulative + weights[i] <= u {
            cumulative += weights[i];
            i += 1;
        }
        out.push(i);
    }
    out
}

/// Which localizer a step uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocalizerMode {
    /// Raw RSSI straight into the particle filter.
    Pf,
    /// Per-beacon Kalman smoothing ahead of the particle filter.
    Kfpf,
}

/// Result of one engine step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub estimate: Position,
    /// The snapshot was empty and the previous estimate was repeated.
    pub stale: bool,
    /// Weights collapsed and were reset to uniform.
    pub degenerate: bool,
    pub resampled: bool,
}

/// One tracked target: particle set, RNG, beacon map and per-beacon Kalman filters.
#[derive(Debug, Clone)]
pub struct LocalizationEngine {
    config: PfConfig,
    beacons: BTreeMap<String, Position>,
    models: BTreeMap<String, PathLossModel>,
    kalman: KalmanParams,
    filters: BTreeMap<String, KalmanState>,
    set: ParticleSet,
    rng: ChaCha8Rng,
    last: Position,
}

impl LocalizationEngine {
    pub fn new(
        config: PfConfig,
        beacons: BTreeMap<String, Position>,
        models: BTreeMap<String, PathLossModel>,
        kalman: KalmanParams,
    ) -> Result<Self> {
        config.validate()?;
        kalman.validate()?;
        for (id, m) in &models {
            m.validate()
                .map_err(|e| Error::InvalidModel(format!("beacon `{id}`: {e}")))?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let set = ParticleSet::init(&config, &mut rng)?;
        let last = set.estimate();
        Ok(Self {
            config,
            beacons,
            models,
            kalman,
            filters: BTreeMap::new(),
            set,
            rng,
            last,
        })
    }

    pub fn particles(&self) -> &ParticleSet {
        &self.set
    }

    pub fn config(&self) -> &PfConfig {
        &self.config
    }

    pub fn last_estimate(&self) -> Position {
        self.last
    }

    /// Smoothed RSSI currently held for a beacon in cascaded mode.
    pub fn filtered_rssi(&self, beacon_id: &str) -> Option<f64> {
        self.filters.get(beacon_id).map(KalmanState::rssi)
    }

    fn check_known(&self, snapshot: &BTreeMap<String, f64>) -> Result<()> {
        for id in snapshot.keys() {
            if !self.models.contains_key(id) || !self.beacons.contains_key(id) {
                return Err(Error::UnknownBeacon(id.clone()));
            }
        }
        Ok(())
    }

    pub fn step(
        &mut self,
        mode: LocalizerMode,
        snapshot: &BTreeMap<String, f64>,
    ) -> Result<StepOutcome> {
        match mode {
            LocalizerMode::Pf => self.step_pf(snapshot),
            LocalizerMode::Kfpf => self.step_kfpf(snapshot),
        }
    }

    /// Plain particle-filter step on raw RSSI.
    pub fn step_pf(&mut self, snapshot: &BTreeMap<String, f64>) -> Result<StepOutcome> {
        self.check_known(snapshot)?;
        self.advance(snapshot)
    }

    /// Cascaded step: each beacon's RSSI passes through its own Kalman filter
    /// (created on first sight) before the particle-filter step.
    pub fn step_kfpf(&mut self, snapshot: &BTreeMap<String, f64>) -> Result<StepOutcome> {
        self.check_known(snapshot)?;
        let mut filtered = BTreeMap::new();
        for (id, &rssi) in snapshot {
            let state = match self.filters.get(id) {
                Some(state) => state.step(&self.kalman, rssi)?,
                None => KalmanState::new(&self.kalman, rssi),
            };
            self.filters.insert(id.clone(), state);
            filtered.insert(id.clone(), state.rssi());
        }
        self.advance(&filtered)
    }

    fn advance(&mut self, snapshot: &BTreeMap<String, f64>) -> Result<StepOutcome> {
        if snapshot.is_empty() {
            return Ok(StepOutcome {
                estimate: self.last,
                stale: true,
                degenerate: false,
                resampled: false,
            });
        }
        let obs = snapshot
            .iter()
            .map(|(id, &rssi)| {
                Ok(BeaconObservation::new(
                    id.clone(),
                    self.models[id].invert_rssi(rssi)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;

        self.set.predict(&self.config, &mut self.rng);
        let update = self
            .set
            .update_weights(&obs, &self.beacons, self.config.likelihood_sigma)?;
        let resampled = self.set.resample(&self.config, &mut self.rng);
        self.last = self.config.bounds.clamp(&self.set.estimate(), self.set.dim);
        Ok(StepOutcome {
            estimate: self.last,
            stale: false,
            degenerate: update == WeightUpdate::Degenerate,
            resampled,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn cfg(n: usize) -> PfConfig {
        PfConfig::new(n, Bounds::rect(6.0, 6.0), Dim::Two, 11)
    }

    fn triangle() -> BTreeMap<String, Position> {
        [("a", 0.0, 0.0), ("b", 6.0, 0.0), ("c", 0.0, 6.0)]
            .into_iter()
            .map(|(id, x, y)| (id.to_string(), Position::new(x, y, 0.0)))
            .collect()
    }

    #[test]
    fn init_uniform_weights_inside_bounds() {
        let c = PfConfig::new(4, Bounds::rect(1.0, 1.0), Dim::Two, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let set = ParticleSet::init(&c, &mut rng).unwrap();
        assert_eq!(set.len(), 4);
        for p in &set.particles {
            assert_eq!(p.w, 0.25);
            assert!(c.bounds.contains(&p.pos, Dim::Two));
        }
        let again = ParticleSet::init(&c, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(set, again);
        let single = ParticleSet::init(
            &PfConfig {
                n_particles: 1,
                ..c
            },
            &mut rng,
        )
        .unwrap();
        assert_eq!(single.particles[0].w, 1.0);
    }

    #[test]
    fn init_rejects_bad_config() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(ParticleSet::init(&cfg(0), &mut rng).is_err());
        let flat = PfConfig::new(4, Bounds::rect(0.0, 1.0), Dim::Two, 1);
        assert!(ParticleSet::init(&flat, &mut rng).is_err());
    }

    #[test]
    fn predict_with_tiny_sigma_keeps_positions() {
        let mut c = cfg(100);
        c.motion_sigma = 1e-12;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut set = ParticleSet::init(&c, &mut rng).unwrap();
        let before = set.clone();
        set.predict(&c, &mut rng);
        for (a, b) in set.particles.iter().zip(&before.particles) {
            assert!((a.pos - b.pos).norm() < 1e-9);
            assert_eq!(a.w, b.w);
        }
    }

    #[test]
    fn predict_clamps_to_bounds() {
        let mut c = cfg(1);
        c.motion_sigma = 100.0;
        let mut set = ParticleSet {
            particles: vec![Particle {
                pos: Position::new(6.0, 6.0, 0.0),
                w: 1.0,
            }],
            dim: Dim::Two,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            set.predict(&c, &mut rng);
            assert!(c.bounds.contains(&set.particles[0].pos, Dim::Two));
        }
    }

    #[test]
    fn predict_displacement_is_zero_mean() {
        let n = 100_000;
        let mut c = PfConfig::new(n, Bounds::rect(1e6, 1e6), Dim::Two, 5);
        c.motion_sigma = 0.25;
        let mut set = ParticleSet {
            particles: vec![
                Particle {
                    pos: Position::new(5e5, 5e5, 0.0),
                    w: 1.0 / n as f64
                };
                n
            ],
            dim: Dim::Two,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        set.predict(&c, &mut rng);
        let limit = 3.0 * 0.25 / (n as f64).sqrt();
        for axis in 0..2 {
            let mean = set.particles.iter().map(|p| p.pos[axis] - 5e5).sum::<f64>() / n as f64;
            assert!(mean.abs() < limit, "axis {axis}: {mean}");
        }
    }

    #[test]
    fn equidistant_particles_get_equal_weights() {
        let beacons: BTreeMap<_, _> = [("a".to_string(), Position::new(3.0, 3.0, 0.0))].into();
        let mut set = ParticleSet {
            particles: vec![
                Particle {
                    pos: Position::new(1.0, 3.0, 0.0),
                    w: 0.5,
                },
                Particle {
                    pos: Position::new(3.0, 5.0, 0.0),
                    w: 0.5,
                },
            ],
            dim: Dim::Two,
        };
        set.update_weights(&[BeaconObservation::new("a", 1.2)], &beacons, 1.0)
            .unwrap();
        assert!((set.particles[0].w - set.particles[1].w).abs() < 1e-15);
    }

    #[test]
    fn particle_at_observed_range_gets_max_likelihood() {
        let beacons: BTreeMap<_, _> = [("a".to_string(), Position::zeros())].into();
        let xs = [0.5, 1.0, 2.0, 2.5, 4.0];
        let mut set = ParticleSet {
            particles: xs
                .iter()
                .map(|&x| Particle {
                    pos: Position::new(x, 0.0, 0.0),
                    w: 0.2,
                })
                .collect(),
            dim: Dim::Two,
        };
        set.update_weights(&[BeaconObservation::new("a", 2.0)], &beacons, 0.7)
            .unwrap();
        let best = set
            .particles
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.w.total_cmp(&b.1.w))
            .unwrap()
            .0;
        assert_eq!(best, 2);
    }

    #[test]
    fn unknown_beacon_and_empty_observations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut set = ParticleSet::init(&cfg(10), &mut rng).unwrap();
        let before = set.clone();
        assert_eq!(
            set.update_weights(&[], &triangle(), 1.0).unwrap(),
            WeightUpdate::Empty
        );
        assert_eq!(set, before);
        let err = set.update_weights(&[BeaconObservation::new("zz", 1.0)], &triangle(), 1.0);
        assert_eq!(err, Err(Error::UnknownBeacon("zz".into())));
    }

    #[test]
    fn all_zero_weights_reset_to_uniform() {
        let mut set = ParticleSet {
            particles: vec![
                Particle {
                    pos: Position::zeros(),
                    w: 0.0
                };
                4
            ],
            dim: Dim::Two,
        };
        let r = set
            .update_weights(&[BeaconObservation::new("a", 1.0)], &triangle(), 1.0)
            .unwrap();
        assert_eq!(r, WeightUpdate::Degenerate);
        assert!(set.weights().all(|w| w == 0.25));
    }

    /// Log-likelihood argmax over a 1 cm grid.
    fn grid_ml(beacons: &BTreeMap<String, Position>, obs: &[(&str, f64)]) -> Position {
        let mut best = (f64::NEG_INFINITY, Position::zeros());
        for i in 0..=600 {
            for j in 0..=600 {
                let p = Position::new(i as f64 * 0.01, j as f64 * 0.01, 0.0);
                let ll: f64 = obs
                    .iter()
                    .map(|(id, d)| -((p - beacons[*id]).norm() - d).powi(2))
                    .sum();
                if ll > best.0 {
                    best = (ll, p);
                }
            }
        }
        best.1
    }

    #[test]
    fn highest_weight_particle_near_ml_position() {
        let beacons = triangle();
        let truth = Position::new(2.0, 2.0, 0.0);
        let obs: Vec<(&str, f64)> = ["a", "b", "c"]
            .iter()
            .map(|id| (*id, (truth - beacons[*id]).norm()))
            .collect();
        let ml = grid_ml(&beacons, &obs);
        assert!((ml - truth).norm() < 0.015, "oracle {ml}");

        let mut rng = ChaCha8Rng::seed_from_u64(2000);
        let mut set = ParticleSet::init(&cfg(2000), &mut rng).unwrap();
        let o: Vec<_> = obs
            .iter()
            .map(|(id, d)| BeaconObservation::new(*id, *d))
            .collect();
        set.update_weights(&o, &beacons, 1.0).unwrap();
        let best = set
            .particles
            .iter()
            .max_by(|a, b| a.w.total_cmp(&b.w))
            .unwrap();
        assert!((best.pos - ml).norm() < 0.5);
        assert!((set.weights().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn uniform_weights_are_not_resampled() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = cfg(50);
        let mut set = ParticleSet::init(&c, &mut rng).unwrap();
        assert!((set.ess() - 50.0).abs() < 1e-9);
        let before = set.clone();
        assert!(!set.resample(&c, &mut rng));
        assert_eq!(set, before);
    }

    #[test]
    fn single_heavy_particle_is_cloned() {
        let c = cfg(5);
        let mut set = ParticleSet {
            particles: (0..5)
                .map(|i| Particle {
                    pos: Position::new(i as f64, 1.0, 0.0),
                    w: if i == 3 { 1.0 } else { 0.0 },
                })
                .collect(),
            dim: Dim::Two,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(set.resample(&c, &mut rng));
        for p in &set.particles {
            assert_eq!(p.pos, Position::new(3.0, 1.0, 0.0));
            assert_eq!(p.w, 0.2);
        }
    }

    #[test]
    fn systematic_counts_within_one_of_expected() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for n in [1usize, 2, 7, 50, 333] {
            let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(3)).collect();
            let total: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let offset: f64 = rng.random();
            let idx = systematic_indices(&w, offset);
            assert_eq!(idx.len(), n);
            for (parent, wi) in w.iter().enumerate() {
                let count = idx.iter().filter(|&&i| i == parent).count() as f64;
                let expected = (n as f64 * wi).floor();
                assert!(count >= expected - 1.0 && count <= expected + 1.0);
            }
        }
    }

    #[test]
    fn estimate_is_weighted_mean() {
        let set = ParticleSet {
            particles: vec![
                Particle {
                    pos: Position::new(0.0, 0.0, 0.0),
                    w: 0.25,
                },
                Particle {
                    pos: Position::new(2.0, 0.0, 0.0),
                    w: 0.75,
                },
            ],
            dim: Dim::Two,
        };
        assert!((set.estimate() - Position::new(1.5, 0.0, 0.0)).norm() < 1e-15);
        let one_hot = ParticleSet {
            particles: vec![
                Particle {
                    pos: Position::new(4.0, 1.0, 0.0),
                    w: 1.0,
                },
                Particle {
                    pos: Position::new(2.0, 0.0, 0.0),
                    w: 0.0,
                },
            ],
            dim: Dim::Two,
        };
        assert_eq!(one_hot.estimate(), Position::new(4.0, 1.0, 0.0));
    }

    fn engine(seed: u64) -> LocalizationEngine {
        let beacons = triangle();
        let models = beacons
            .keys()
            .map(|id| (id.clone(), PathLossModel::new(2.0, -60.0, 1.0).unwrap()))
            .collect();
        let mut c = cfg(1000);
        c.seed = seed;
        LocalizationEngine::new(c, beacons, models, KalmanParams::default()).unwrap()
    }

    fn noiseless_snapshot(truth: Position) -> BTreeMap<String, f64> {
        let m = PathLossModel::new(2.0, -60.0, 1.0).unwrap();
        triangle()
            .iter()
            .map(|(id, b)| (id.clone(), m.predict_rssi((truth - b).norm()).unwrap()))
            .collect()
    }

    #[test]
    fn pf_converges_on_stationary_noiseless_target() {
        let truth = Position::new(2.0, 2.0, 0.0);
        let snap = noiseless_snapshot(truth);
        for mode in [LocalizerMode::Pf, LocalizerMode::Kfpf] {
            let mut e = engine(8);
            let mut est = Position::zeros();
            for _ in 0..20 {
                est = e.step(mode, &snap).unwrap().estimate;
            }
            assert!((est - truth).norm() < 0.3, "{mode:?}: {est}");
        }
    }

    #[test]
    fn unknown_beacon_in_snapshot_is_an_error() {
        let mut e = engine(1);
        let mut snap = noiseless_snapshot(Position::new(1.0, 1.0, 0.0));
        snap.insert("ghost".into(), -70.0);
        assert_eq!(e.step_pf(&snap), Err(Error::UnknownBeacon("ghost".into())));
        assert_eq!(
            e.step_kfpf(&snap),
            Err(Error::UnknownBeacon("ghost".into()))
        );
        assert!(e.filtered_rssi("a").is_none());
    }

    #[test]
    fn empty_snapshot_is_stale() {
        let mut e = engine(1);
        let first = e
            .step_pf(&noiseless_snapshot(Position::new(1.0, 1.0, 0.0)))
            .unwrap();
        let stale = e.step_pf(&BTreeMap::new()).unwrap();
        assert!(stale.stale);
        assert_eq!(stale.estimate, first.estimate);
    }

    #[test]
    fn first_kfpf_step_equals_first_pf_step() {
        let snap = noiseless_snapshot(Position::new(4.0, 1.5, 0.0));
        let mut noisy = snap.clone();
        for (i, v) in noisy.values_mut().enumerate() {
            *v += [2.5, -1.0, 3.0][i];
        }
        let a = engine(21).step_pf(&noisy).unwrap();
        let b = engine(21).step_kfpf(&noisy).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn engine_is_deterministic() {
        let snap = noiseless_snapshot(Position::new(3.0, 2.0, 0.0));
        let run = || {
            let mut e = engine(77);
            (0..10)
                .map(|_| e.step_kfpf(&snap).unwrap().estimate)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn three_dimensional_mode_localizes() {
        let beacons: BTreeMap<String, Position> = [
            ("a", 0.0, 0.0, 2.5),
            ("b", 6.0, 0.0, 0.5),
            ("c", 0.0, 6.0, 0.5),
            ("d", 6.0, 6.0, 2.5),
        ]
        .into_iter()
        .map(|(id, x, y, z)| (id.to_string(), Position::new(x, y, z)))
        .collect();
        let m = PathLossModel::new(2.0, -60.0, 1.0).unwrap();
        let models = beacons.keys().map(|id| (id.clone(), m)).collect();
        let c = PfConfig::new(2000, Bounds::new([0.0; 3], [6.0, 6.0, 3.0]), Dim::Three, 3);
        let mut e =
            LocalizationEngine::new(c, beacons.clone(), models, KalmanParams::default()).unwrap();
        let truth = Position::new(2.0, 3.0, 1.2);
        let snap: BTreeMap<_, _> = beacons
            .iter()
            .map(|(id, b)| (id.clone(), m.predict_rssi((truth - b).norm()).unwrap()))
            .collect();
        let mut est = Position::zeros();
        for _ in 0..30 {
            est = e.step_pf(&snap).unwrap().estimate;
        }
        assert!((est - truth).norm() < 0.5, "{est}");
    }

    proptest! {
        #[test]
        fn resampling_preserves_count_and_support(seed in any::<u64>(), n in 1usize..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = cfg(n);
            let mut set = ParticleSet::init(&c, &mut rng).unwrap();
            let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(4)).collect();
            let total: f64 = raw.iter().sum();
            for (p, r) in set.particles.iter_mut().zip(&raw) {
                p.w = r / total;
            }
            let before = set.clone();
            prop_assert!(set.ess() <= n as f64 + 1e-9);
            set.resample(&c, &mut rng);
            prop_assert_eq!(set.len(), n);
            prop_assert!((set.weights().sum::<f64>() - 1.0).abs() < 1e-9);
            for p in &set.particles {
                prop_assert!(before.particles.iter().any(|q| q.pos == p.pos));
            }
        }
    }
}
