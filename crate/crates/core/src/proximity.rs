//! Streaming proximity-zone classification for one (device, beacon) stream.
//!
//! Three pipelines share the same skeleton (smooth, range, classify):
//!
//! * `Baseline` averages the last 10 samples and ranges them with a
//!   free-space exponent (`n = 2`) and no debounce.
//! * `Sra` averages the last 10 samples and ranges them with the calibrated
//!   environment model.
//! * `Skf` runs a Kalman filter on every raw sample and ranges the filtered value
//!   with the calibrated model.
//!
//! `Sra` and `Skf` only move their decided zone after three consecutive
//! identical instantaneous zones.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kalman::{KalmanParams, KalmanState};
use crate::pathloss::{classify_zone, PathLossModel, ProximityZone};

pub const WINDOW_LEN: usize = 10;
pub const DEBOUNCE_LEN: usize = 3;

/// RSSI value that terminates a stream.
pub const END_OF_STREAM: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProximityMode {
    Baseline,
    Sra,
    Skf,
}

impl ProximityMode {
    pub const ALL: [ProximityMode; 3] = [
        ProximityMode::Baseline,
        ProximityMode::Sra,
        ProximityMode::Skf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProximityMode::Baseline => "baseline",
            ProximityMode::Sra => "sra",
            ProximityMode::Skf => "skf",
        }
    }
}

impl fmt::Display for ProximityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProximityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" | "current" => Ok(ProximityMode::Baseline),
            "sra" => Ok(ProximityMode::Sra),
            "skf" => Ok(ProximityMode::Skf),
            other => Err(Error::InvalidParams(format!(
                "unknown proximity mode `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProximityDecision {
    pub instantaneous_zone: ProximityZone,
    pub decided_zone: ProximityZone,
    pub est_distance: f64,
    /// RSSI after windowing or Kalman filtering.
    pub filtered_rssi: f64,
}

#[derive(Debug, Clone)]
pub struct ProximityPipeline {
    mode: ProximityMode,
    model: PathLossModel,
    kalman_params: KalmanParams,
    kalman: Option<KalmanState>,
    window: VecDeque<f64>,
    history: VecDeque<ProximityZone>,
    decided: ProximityZone,
    closed: bool,
}

impl ProximityPipeline {
    /// `model` is the calibrated environment model. The baseline keeps only its
    /// reference RSSI.
    pub fn new(mode: ProximityMode, model: PathLossModel) -> Result<Self> {
        Self::with_kalman(mode, model, KalmanParams::default())
    }

    pub fn with_kalman(
        mode: ProximityMode,
        model: PathLossModel,
        kalman_params: KalmanParams,
    ) -> Result<Self> {
        model.validate()?;
        kalman_params.validate()?;
        Ok(Self {
            mode,
            model,
            kalman_params,
            kalman: None,
            window: VecDeque::with_capacity(WINDOW_LEN),
            history: VecDeque::with_capacity(DEBOUNCE_LEN),
            decided: ProximityZone::Unknown,
            closed: false,
        })
    }

    pub fn mode(&self) -> ProximityMode {
        self.mode
    }

    pub fn decided(&self) -> ProximityZone {
        self.decided
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Feeds one raw RSSI sample. A `0` sample closes the stream; the pipeline
    /// then rejects all further input.
    pub fn step(&mut self, rssi: f64) -> Result<ProximityDecision> {
        if self.closed || rssi == END_OF_STREAM {
            self.closed = true;
            return Err(Error::StreamClosed);
        }
        if !rssi.is_finite() {
            return Err(Error::Domain(format!("rssi must be finite, got {rssi}")));
        }

        let (filtered, ranging_model) = match self.mode {
            ProximityMode::Baseline => (self.push_window(rssi), self.model.free_space_like()),
            ProximityMode::Sra => (self.push_window(rssi), self.model),
            ProximityMode::Skf => {
                let state = match &self.kalman {
                    Some(s) => s.step(&self.kalman_params, rssi)?,
                    None => KalmanState::new(&self.kalman_params, rssi),
                };
                self.kalman = Some(state);
                (state.rssi(), self.model)
            }
        };
        let est_distance = ranging_model.invert_rssi(filtered)?;
        let zone = classify_zone(Some(est_distance))?;

        if self.mode == ProximityMode::Baseline {
            self.decided = zone;
        } else {
            if self.history.len() == DEBOUNCE_LEN {
                self.history.pop_front();
            }
            self.history.push_back(zone);
            if self.history.len() == DEBOUNCE_LEN && self.history.iter().all(|z| *z == zone) {
                self.decided = zone;
            }
        }

        Ok(ProximityDecision {
            instantaneous_zone: zone,
            decided_zone: self.decided,
            est_distance,
            filtered_rssi: filtered,
        })
    }

    fn push_window(&mut self, rssi: f64) -> f64 {
        if self.window.len() == WINDOW_LEN {
            self.window.pop_front();
        }
        self.window.push_back(rssi);
        self.window.iter().sum::<f64>() / self.window.len() as f64
    }

    /// Folds [`step`](Self::step) over a series, stopping at the first error.
    pub fn run(&mut self, series: &[f64]) -> Result<Vec<ProximityDecision>> {
        series.iter().map(|&r| self.step(r)).collect()
    }
}
