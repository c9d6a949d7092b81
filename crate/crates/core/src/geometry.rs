//! Positions and axis-aligned boxes shared by the particle engine and the simulator.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A position in meters. Planar scenarios keep `z = 0` and ignore it.
pub type Position = Vector3<f64>;

/// Whether positions and ranges are planar or volumetric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Dim {
    #[default]
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "3")]
    Three,
}

impl Dim {
    pub fn axes(self) -> usize {
        match self {
            Dim::Two => 2,
            Dim::Three => 3,
        }
    }

    pub fn from_axes(axes: usize) -> Option<Dim> {
        match axes {
            2 => Some(Dim::Two),
            3 => Some(Dim::Three),
            _ => None,
        }
    }

    /// Euclidean distance using only the active axes.
    pub fn distance(self, a: &Position, b: &Position) -> f64 {
        let dx = a.x - b.x;
        let dy = a.y - b.y;
        match self {
            Dim::Two => (dx * dx + dy * dy).sqrt(),
            Dim::Three => {
                let dz = a.z - b.z;
                (dx * dx + dy * dy + dz * dz).sqrt()
            }
        }
    }
}

/// Axis-aligned box in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Bounds {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    /// A planar box `[0, width] x [0, depth]`.
    pub fn rect(width: f64, depth: f64) -> Self {
        Self::new([0.0, 0.0, 0.0], [width, depth, 0.0])
    }

    /// Checks that every active axis spans a positive, finite interval.
    pub fn validate(&self, dim: Dim) -> Result<()> {
        for axis in 0..dim.axes() {
            let (lo, hi) = (self.min[axis], self.max[axis]);
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::InvalidParams(format!(
                    "bounds axis {axis} is degenerate: [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &Position, dim: Dim) -> bool {
        (0..dim.axes()).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    /// Clamps the active axes into the box; inactive axes are zeroed.
    pub fn clamp(&self, p: &Position, dim: Dim) -> Position {
        let mut out = Position::zeros();
        for a in 0..dim.axes() {
            out[a] = p[a].clamp(self.min[a], self.max[a]);
        }
        out
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.max[axis] - self.min[axis]
    }
}
