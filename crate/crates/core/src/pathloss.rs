//! Log-distance path-loss model.
//!
//! `rssi(d) = -10 n log10(d / d0) + c`, where `n` is the environment's path-loss
//! exponent and `c` the mean RSSI at the reference distance `d0`. The model is
//! linear in `(n, c)` once distances are mapped to `log10(d / d0)`, so fitting
//! is an ordinary least-squares line fit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the log-distance model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossModel {
    /// Path-loss exponent (dimensionless).
    pub n: f64,
    /// Mean RSSI at `d0`, dBm.
    pub c: f64,
    /// Reference distance, meters.
    #[serde(default = "default_d0")]
    pub d0: f64,
}

fn default_d0() -> f64 {
    1.0
}

impl PathLossModel {
    pub fn new(n: f64, c: f64, d0: f64) -> Result<Self> {
        let model = Self { n, c, d0 };
        model.validate()?;
        Ok(model)
    }

    /// Calibrated model for the first (noisier) office environment.
    pub const fn environment_one() -> Self {
        Self {
            n: 0.9116,
            c: -62.78,
            d0: 1.0,
        }
    }

    /// Calibrated model for the second office environment.
    pub const fn environment_two() -> Self {
        Self {
            n: 1.246,
            c: -60.95,
            d0: 1.0,
        }
    }

    /// Same reference RSSI with the free-space exponent `n = 2`.
    pub fn free_space_like(&self) -> Self {
        Self { n: 2.0, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n.is_finite() && self.n > 0.0) {
            return Err(Error::InvalidModel(format!(
                "n must be > 0, got {}",
                self.n
            )));
        }
        if !(self.d0.is_finite() && self.d0 > 0.0) {
            return Err(Error::InvalidModel(format!(
                "d0 must be > 0, got {}",
                self.d0
            )));
        }
        if !self.c.is_finite() {
            return Err(Error::InvalidModel(format!(
                "c must be finite, got {}",
                self.c
            )));
        }
        Ok(())
    }

    /// Expected RSSI (dBm) at distance `d` meters.
    pub fn predict_rssi(&self, d: f64) -> Result<f64> {
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Domain(format!("distance must be > 0, got {d}")));
        }
        Ok(-10.0 * self.n * (d / self.d0).log10() + self.c)
    }

    /// Distance (meters) at which the model predicts `rssi`; exact inverse of
    /// [`predict_rssi`](Self::predict_rssi).
    pub fn invert_rssi(&self, rssi: f64) -> Result<f64> {
        self.validate()?;
        if !rssi.is_finite() {
            return Err(Error::Domain(format!("rssi must be finite, got {rssi}")));
        }
        Ok(self.d0 * 10f64.powf((self.c - rssi) / (10.0 * self.n)))
    }
}

/// One averaged calibration measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub distance: f64,
    pub mean_rssi: f64,
}

impl CalibrationPoint {
    pub fn new(distance: f64, mean_rssi: f64) -> Self {
        Self {
            distance,
            mean_rssi,
        }
    }
}

/// A least-squares fit together with its coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedModel {
    pub model: PathLossModel,
    /// `1 - SSE/SST` on the calibration points.
    pub r2: f64,
}

impl fmt::Display for FittedModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "n={}, c={}, d0={}, r2={}",
            fmt_num(self.model.n),
            fmt_num(self.model.c),
            fmt_num(self.model.d0),
            fmt_num(self.r2)
        )
    }
}

impl FromStr for FittedModel {
    type Err = Error;

    /// Parses the flat `n=…, c=…, d0=…, r2=…` record. `#` comment lines and a
    /// `format_version` key are accepted; `d0` defaults to 1 and `r2` to NaN.
    fn from_str(s: &str) -> Result<Self> {
        let (mut n, mut c, mut d0, mut r2) = (None, None, 1.0, f64::NAN);
        for (idx, line) in s.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            for field in line.split(',') {
                let field = field.trim();
                if field.is_empty() {
                    continue;
                }
                let (key, value) = field.split_once('=').ok_or_else(|| Error::Parse {
                    line: idx as u64 + 1,
                    column: field.to_string(),
                    message: "expected key=value".into(),
                })?;
                let key = key.trim();
                let parse = |v: &str| {
                    v.trim().parse::<f64>().map_err(|e| Error::Parse {
                        line: idx as u64 + 1,
                        column: key.to_string(),
                        message: e.to_string(),
                    })
                };
                match key {
                    "n" => n = Some(parse(value)?),
                    "c" | "C" => c = Some(parse(value)?),
                    "d0" => d0 = parse(value)?,
                    "r2" => r2 = parse(value)?,
                    "format_version" => {}
                    other => {
                        return Err(Error::Parse {
                            line: idx as u64 + 1,
                            column: other.to_string(),
                            message: "unknown key".into(),
                        })
                    }
                }
            }
        }
        let missing = |k: &str| Error::Parse {
            line: 0,
            column: k.to_string(),
            message: "missing key".into(),
        };
        let model = PathLossModel::new(
            n.ok_or_else(|| missing("n"))?,
            c.ok_or_else(|| missing("c"))?,
            d0,
        )?;
        Ok(FittedModel { model, r2 })
    }
}

/// Formats with at most 6 decimals and no trailing zeros.
pub(crate) fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    match s {
        "-0" => "0".to_string(),
        _ => s.to_string(),
    }
}

/// Ordinary least-squares fit of `mean_rssi` against `log10(distance / d0)`.
///
/// The slope of the fitted line is `-10 n` and its intercept is `c`.
pub fn fit_path_loss(points: &[CalibrationPoint], d0: f64) -> Result<FittedModel> {
    if !(d0 > 0.0) || !d0.is_finite() {
        return Err(Error::Domain(format!("d0 must be > 0, got {d0}")));
    }
    for p in points {
        if !(p.distance > 0.0) || !p.distance.is_finite() {
            return Err(Error::Domain(format!(
                "calibration distance must be > 0, got {}",
                p.distance
            )));
        }
        if !p.mean_rssi.is_finite() {
            return Err(Error::Domain(format!(
                "calibration rssi must be finite, got {}",
                p.mean_rssi
            )));
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.distance / d0).log10()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_rssi).collect();
    let count = xs.len() as f64;
    if xs.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "need at least 2 points, got {}",
            xs.len()
        )));
    }
    let mean_x = xs.iter().sum::<f64>() / count;
    let mean_y = ys.iter().sum::<f64>() / count;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    if sxx <= f64::EPSILON * count {
        return Err(Error::DegenerateFit(
            "need at least 2 distinct distances".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let n = -slope / 10.0;
    if !(n > 0.0) {
        return Err(Error::DegenerateFit(format!(
            "fitted exponent is not positive (n = {n}); RSSI does not fall with distance"
        )));
    }

    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (slope * x + intercept)).powi(2))
        .sum();
    let sst: f64 = ys.iter().map(|y| (y - mean_y).powi(2)).sum();
    let r2 = if sst > 0.0 { 1.0 - sse / sst } else { 1.0 };

    Ok(FittedModel {
        model: PathLossModel {
            n,
            c: intercept,
            d0,
        },
        r2,
    })
}

/// Proximity zone of a ranged distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProximityZone {
    Immediate,
    Near,
    Far,
    Unknown,
}

impl ProximityZone {
    /// The three rangeable zones, in confusion-matrix order.
    pub const RANGED: [ProximityZone; 3] = [
        ProximityZone::Immediate,
        ProximityZone::Near,
        ProximityZone::Far,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProximityZone::Immediate => "immediate",
            ProximityZone::Near => "near",
            ProximityZone::Far => "far",
            ProximityZone::Unknown => "unknown",
        }
    }

    /// Row/column index in a 3-zone confusion matrix; `None` for `Unknown`.
    pub fn index(self) -> Option<usize> {
        match self {
            ProximityZone::Immediate => Some(0),
            ProximityZone::Near => Some(1),
            ProximityZone::Far => Some(2),
            ProximityZone::Unknown => None,
        }
    }
}

impl fmt::Display for ProximityZone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProximityZone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "immediate" => Ok(ProximityZone::Immediate),
            "near" => Ok(ProximityZone::Near),
            "far" => Ok(ProximityZone::Far),
            "unknown" => Ok(ProximityZone::Unknown),
            other => Err(Error::Label(format!("unrecognized zone label `{other}`"))),
        }
    }
}

pub const IMMEDIATE_LIMIT_M: f64 = 1.0;
pub const NEAR_LIMIT_M: f64 = 3.0;

/// Maps a ranged distance to its zone. `None` means the beacon was not ranged.
///
/// `d < 1` is Immediate, `1 <= d <= 3` is Near, `d > 3` is Far.
pub fn classify_zone(distance: Option<f64>) -> Result<ProximityZone> {
    let Some(d) = distance else {
        return Ok(ProximityZone::Unknown);
    };
    if d.is_nan() || d < 0.0 {
        return Err(Error::Domain(format!("distance must be >= 0, got {d}")));
    }
    Ok(if d < IMMEDIATE_LIMIT_M {
        ProximityZone::Immediate
    } else if d <= NEAR_LIMIT_M {
        ProximityZone::Near
    } else {
        ProximityZone::Far
    })
}
