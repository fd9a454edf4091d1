//! Cell grids over the `(φ, θ)` chart of the unit sphere.
//!
//! Cells are indexed `(i, j)` with `i` running over `φ ∈ [−π, π)` and `j`
//! over `θ ∈ [0, π]`. Values are stored row-major by `θ`: the flat index of
//! cell `(i, j)` is `j * n_phi + i`. The `φ` spacing is always uniform.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How the polar axis is cut into rows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridGeometry {
    /// Uniform steps in `θ`; the cell area carries an explicit `sin θ_j`.
    #[default]
    EqualAngle,
    /// Uniform steps in `cos θ`; every cell has area `4π / N`.
    EqualArea,
}

impl GridGeometry {
    pub fn as_str(self) -> &'static str {
        match self {
            GridGeometry::EqualAngle => "equal-angle",
            GridGeometry::EqualArea => "equal-area",
        }
    }
}

impl std::str::FromStr for GridGeometry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal-angle" => Ok(GridGeometry::EqualAngle),
            "equal-area" => Ok(GridGeometry::EqualArea),
            other => Err(Error::InvalidParameter(format!(
                "unknown grid geometry {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseGrid {
    n_phi: usize,
    n_theta: usize,
    geometry: GridGeometry,
    thetas: Vec<f64>,
    weights: Vec<f64>,
}

impl PhaseGrid {
    pub fn new(n_phi: usize, n_theta: usize, geometry: GridGeometry) -> Result<Self> {
        if n_phi < 2 || n_theta < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid resolution must be at least 2x2, got {n_phi}x{n_theta}"
            )));
        }
        let dphi = 2.0 * PI / n_phi as f64;
        let (thetas, weights) = match geometry {
            GridGeometry::EqualAngle => {
                let dtheta = PI / n_theta as f64;
                (0..n_theta)
                    .map(|j| {
                        let theta = (j as f64 + 0.5) * dtheta;
                        (theta, theta.sin() * dtheta * dphi)
                    })
                    .unzip()
            }
            GridGeometry::EqualArea => {
                let du = 2.0 / n_theta as f64;
                (0..n_theta)
                    .map(|j| {
                        let u = 1.0 - (j as f64 + 0.5) * du;
                        (u.acos(), du * dphi)
                    })
                    .unzip()
            }
        };
        Ok(Self {
            n_phi,
            n_theta,
            geometry,
            thetas,
            weights,
        })
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn geometry(&self) -> GridGeometry {
        self.geometry
    }

    /// Total number of cells `N`.
    pub fn len(&self) -> usize {
        self.n_phi * self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dphi(&self) -> f64 {
        2.0 * PI / self.n_phi as f64
    }

    /// Cell-centre azimuth of column `i`.
    pub fn phi(&self, i: usize) -> f64 {
        -PI + (i as f64 + 0.5) * self.dphi()
    }

    /// Cell-centre polar angle of row `j`.
    pub fn theta(&self, j: usize) -> f64 {
        self.thetas[j]
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    /// Area of any cell in row `j`. Row weights sum to (approximately, for
    /// the equal-angle midpoint rule) `4π` over the whole grid.
    pub fn weight(&self, j: usize) -> f64 {
        self.weights[j]
    }

    pub fn row_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum::<f64>() * self.n_phi as f64
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n_phi + i
    }

    /// Inverse of [`PhaseGrid::index`].
    pub fn cell(&self, flat: usize) -> (usize, usize) {
        (flat % self.n_phi, flat / self.n_phi)
    }

    /// Checks that two grids sample the same cells.
    pub fn ensure_same(&self, other: &PhaseGrid) -> Result<()> {
        if self.n_phi != other.n_phi
            || self.n_theta != other.n_theta
            || self.geometry != other.geometry
        {
            return Err(Error::GridMismatch(format!(
                "{}x{} {} vs {}x{} {}",
                self.n_phi,
                self.n_theta,
                self.geometry.as_str(),
                other.n_phi,
                other.n_theta,
                other.geometry.as_str()
            )));
        }
        Ok(())
    }

    /// Weighted average of per-cell values, `Σ w f / Σ w`.
    pub fn average(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        let mut num = 0.0;
        for (row, w) in values.chunks_exact(self.n_phi).zip(&self.weights) {
            num += w * row.iter().sum::<f64>();
        }
        num / self.total_weight()
    }
}
