use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FieldVector, Grid, PointSet};

/// How point observations read a grid function.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationKind {
    /// Value at the nearest grid node.
    #[default]
    Nearest,
    /// Multilinear interpolation between neighbouring nodes.
    Linear,
}

/// Sparse linear map `A` from grid functions to `ℝ^J`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationOperator {
    rows: Vec<Vec<(usize, f64)>>,
    n_nodes: usize,
}

impl ObservationOperator {
    pub fn new(grid: &Grid, points: &PointSet, kind: ObservationKind) -> Result<Self> {
        if points.dim() != grid.dim() {
            return Err(Error::invalid("observation points and grid differ in dimension"));
        }
        if points.coords().iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid("observation points must lie in the unit domain"));
        }
        let rows = (0..points.len())
            .map(|j| match kind {
                ObservationKind::Nearest => vec![(grid.nearest_node(points.point(j)), 1.0)],
                ObservationKind::Linear => grid.interpolation_stencil(points.point(j)),
            })
            .collect();
        Ok(Self { rows, n_nodes: grid.len() })
    }

    pub fn n_obs(&self) -> usize {
        self.rows.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn apply(&self, u: &FieldVector) -> DVector<f64> {
        DVector::from_iterator(self.rows.len(), self.rows.iter().map(|r| r.iter().map(|&(i, w)| w * u[i]).sum()))
    }

    pub fn apply_transpose(&self, w: &DVector<f64>) -> FieldVector {
        let mut out = FieldVector::zeros(self.n_nodes);
        for (row, &wj) in self.rows.iter().zip(w.iter()) {
            for &(i, a) in row {
                out[i] += a * wj;
            }
        }
        out
    }

    /// `A M` for an `N × k` matrix `M`.
    pub fn apply_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.len(), m.ncols(), |j, c| self.rows[j].iter().map(|&(i, w)| w * m[(i, c)]).sum())
    }

    /// Dense `J × N` matrix.
    pub fn dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.rows.len(), self.n_nodes);
        for (j, row) in self.rows.iter().enumerate() {
            for &(i, w) in row {
                a[(j, i)] += w;
            }
        }
        a
    }
}

/// Observations `y = A u + η`, `η ~ N(0, γ² I)`, tied to one sampling grid.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub obs_points: PointSet,
    pub y: DVector<f64>,
    pub noise_std: f64,
    pub operator: ObservationOperator,
}

impl Dataset {
    pub fn new(
        obs_points: PointSet,
        y: DVector<f64>,
        noise_std: f64,
        grid: &Grid,
        kind: ObservationKind,
    ) -> Result<Self> {
        if obs_points.is_empty() {
            return Err(Error::invalid("dataset needs at least one observation"));
        }
        if y.len() != obs_points.len() {
            return Err(Error::invalid("observation values and points differ in length"));
        }
        if !(noise_std > 0.0 && noise_std.is_finite()) {
            return Err(Error::invalid("noise standard deviation must be positive"));
        }
        let operator = ObservationOperator::new(grid, &obs_points, kind)?;
        Ok(Self { obs_points, y, noise_std, operator })
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }
}

/// `Φ(u; y) = ½ |γ⁻¹ (y − A u)|²`.
pub fn potential_phi(u: &FieldVector, data: &Dataset) -> f64 {
    let r = &data.y - data.operator.apply(u);
    0.5 * r.norm_squared() / (data.noise_std * data.noise_std)
}
