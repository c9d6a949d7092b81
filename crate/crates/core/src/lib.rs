//! BLE beacon ranging and indoor localization.
//!
//! * [`pathloss`]: log-distance model fitting, evaluation, inversion and zones.
//! * [`kalman`]: two-state Kalman smoothing of RSSI streams.
//! * [`particle`]: SIR particle filter and the cascaded Kalman/particle localizer.
//! * [`proximity`]: streaming zone classifiers (baseline, running average, Kalman).
//! * [`metrics`]: confusion-matrix statistics and localization error.
//! * [`simulator`]: seeded synthetic traces, sweeps and proximity experiments.
//! * [`trace_io`]: CSV/JSON formats and report writers.
//! * [`cli`]: the `beaconloc` command-line front end.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod geometry;
pub mod kalman;
pub mod metrics;
pub mod particle;
pub mod pathloss;
pub mod proximity;
pub mod simulator;
pub mod trace_io;

pub use error::{Error, Result};
pub use geometry::{Bounds, Dim, Position};
pub use kalman::{KalmanParams, KalmanState};
pub use metrics::{ConfusionMatrix3, ZoneMetrics};
pub use particle::{LocalizationEngine, LocalizerMode, ParticleSet, PfConfig};
pub use pathloss::{classify_zone, fit_path_loss, CalibrationPoint, PathLossModel, ProximityZone};
pub use proximity::{ProximityDecision, ProximityMode, ProximityPipeline};
pub use simulator::{Deployment, NoiseSpec, ScenarioResult, SweepConfig, Trajectory};
