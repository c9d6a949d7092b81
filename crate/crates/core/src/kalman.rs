//! Two-state linear Kalman filter for RSSI smoothing.
//!
//! The state is `[rssi, rate]`. Prediction uses `F = [[1, dt], [0, 1]]`, the
//! measurement picks out the RSSI component with `H = [1, 0]`. `dt` is a tuning
//! constant: each arriving sample advances the filter exactly one step.

use nalgebra::{Matrix2, RowVector2, Vector2};

use crate::error::{Error, Result};

const H: RowVector2<f64> = RowVector2::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanParams {
    pub dt: f64,
    /// Process-noise covariance.
    pub q: Matrix2<f64>,
    /// Measurement-noise variance.
    pub r: f64,
    /// Initial error covariance.
    pub p0: Matrix2<f64>,
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self {
            dt: 0.2,
            q: Matrix2::from_diagonal(&Vector2::new(0.001, 0.001)),
            r: 0.10,
            p0: Matrix2::from_diagonal(&Vector2::new(100.0, 100.0)),
        }
    }
}

impl KalmanParams {
    pub fn transition(&self) -> Matrix2<f64> {
        Matrix2::new(1.0, self.dt, 0.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0) || !self.r.is_finite() {
            return Err(Error::InvalidParams(format!(
                "r must be > 0, got {}",
                self.r
            )));
        }
        if !self.dt.is_finite() {
            return Err(Error::InvalidParams("dt must be finite".into()));
        }
        for (name, m) in [("q", &self.q), ("p0", &self.p0)] {
            if !is_psd(m) {
                return Err(Error::InvalidParams(format!(
                    "{name} must be symmetric positive semidefinite"
                )));
            }
        }
        Ok(())
    }
}

fn is_psd(m: &Matrix2<f64>) -> bool {
    let tol = 1e-12 * (1.0 + m.abs().max());
    m.iter().all(|v| v.is_finite())
        && (m[(0, 1)] - m[(1, 0)]).abs() <= tol
        && m[(0, 0)] >= 0.0
        && m[(1, 1)] >= 0.0
        && m.determinant() >= -tol
}

/// Filter state: estimate `x = [rssi, rate]` and its error covariance `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState {
    pub x: Vector2<f64>,
    pub p: Matrix2<f64>,
}

impl KalmanState {
    /// Anchors the filter on the first observation with zero rate.
    pub fn new(params: &KalmanParams, first_rssi: f64) -> Self {
        Self {
            x: Vector2::new(first_rssi, 0.0),
            p: params.p0,
        }
    }

    /// Current smoothed RSSI.
    pub fn rssi(&self) -> f64 {
        self.x[0]
    }

    pub fn predict(&self, params: &KalmanParams) -> Self {
        let f = params.transition();
        Self {
            x: f * self.x,
            p: f * self.p * f.transpose() + params.q,
        }
    }

    /// Kalman gain for the current covariance.
    pub fn gain(&self, params: &KalmanParams) -> Result<Vector2<f64>> {
        let s = (H * self.p * H.transpose())[(0, 0)] + params.r;
        if s == 0.0 || !s.is_finite() {
            return Err(Error::SingularInnovation(s));
        }
        Ok(self.p * H.transpose() / s)
    }

    /// Measurement update with the `(I - K H) P` covariance form, followed by
    /// symmetrization.
    pub fn update(&self, params: &KalmanParams, z: f64) -> Result<Self> {
        let k = self.gain(params)?;
        let innovation = z - (H * self.x)[(0, 0)];
        let x = self.x + k * innovation;
        let p = (Matrix2::identity() - k * H) * self.p;
        Ok(Self {
            x,
            p: (p + p.transpose()) * 0.5,
        })
    }

    /// One predict/update cycle for one measurement.
    pub fn step(&self, params: &KalmanParams, z: f64) -> Result<Self> {
        self.predict(params).update(params, z)
    }
}

/// Smooths a series; `out[i]` is the filtered RSSI after `series[..=i]`.
///
/// The first sample only initializes the filter, so it is passed through.
pub fn smooth_series(params: &KalmanParams, series: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(series.len());
    let mut iter = series.iter();
    let Some(&first) = iter.next() else {
        return Ok(out);
    };
    let mut state = KalmanState::new(params, first);
    out.push(state.rssi());
    for &z in iter {
        state = state.step(params, z)?;
        out.push(state.rssi());
    }
    Ok(out)
}
