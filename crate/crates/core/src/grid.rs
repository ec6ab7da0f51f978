//! Point sets and uniform grids on the unit cube.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real grid function: one scalar layer of a process, one value per node.
pub type FieldVector = DVector<f64>;

/// An ordered list of points in ℝ^d stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || !coords.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} coordinates do not form points of dimension {dim}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("point coordinates must be finite"));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_1d(xs: &[f64]) -> Result<Self> {
        Self::new(1, xs.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn sq_dist(&self, i: usize, j: usize) -> f64 {
        sq_dist(self.point(i), self.point(j))
    }
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Where the nodes of a uniform grid sit inside each cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Nodes at cell centres `(i + 1/2) h`, `h = 1/n`; used by the finite-difference operators.
    CellCentred,
    /// Nodes `i h` including both endpoints, `h = 1/(n-1)`.
    Nodal,
    /// Nodes `i h`, `h = 1/n`, with `1` identified with `0`.
    Periodic,
}

/// Uniform tensor grid on `[0,1]^d`, `d ∈ {1, 2}`, points in lexicographic order
/// with the first coordinate varying slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    d: usize,
    n_per_side: usize,
    layout: Layout,
    spacing: f64,
    points: PointSet,
}

impl Grid {
    pub fn new(d: usize, n_per_side: usize, layout: Layout) -> Result<Self> {
        if !(1..=2).contains(&d) {
            return Err(Error::invalid(format!("grid dimension must be 1 or 2, got {d}")));
        }
        let min_n = if layout == Layout::Nodal { 2 } else { 1 };
        if n_per_side < min_n {
            return Err(Error::invalid(format!("grid needs at least {min_n} points per side")));
        }
        let n = n_per_side as f64;
        let (spacing, offset) = match layout {
            Layout::CellCentred => (1.0 / n, 0.5),
            Layout::Nodal => (1.0 / (n - 1.0), 0.0),
            Layout::Periodic => (1.0 / n, 0.0),
        };
        let axis: Vec<f64> = (0..n_per_side).map(|i| (i as f64 + offset) * spacing).collect();
        let mut coords = Vec::with_capacity(n_per_side.pow(d as u32) * d);
        if d == 1 {
            coords.extend_from_slice(&axis);
        } else {
            for &x in &axis {
                for &y in &axis {
                    coords.push(x);
                    coords.push(y);
                }
            }
        }
        Ok(Self { d, n_per_side, layout, spacing, points: PointSet::new(d, coords)? })
    }

    pub fn cell_centred(d: usize, n_per_side: usize) -> Result<Self> {
        Self::new(d, n_per_side, Layout::CellCentred)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_per_side(&self) -> usize {
        self.n_per_side
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    /// Total number of nodes, `n_per_side^d`.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.d as i32)
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    /// Flat index of the multi-index `(i)` or `(i, j)`.
    pub fn index(&self, multi: &[usize]) -> usize {
        multi.iter().fold(0, |acc, &m| acc * self.n_per_side + m)
    }

    /// Node nearest to `x` (ties resolved towards the lower index).
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let multi: Vec<usize> = x.iter().map(|&c| self.nearest_axis_index(c)).collect();
        self.index(&multi)
    }

    fn nearest_axis_index(&self, c: f64) -> usize {
        let offset = if self.layout == Layout::CellCentred { 0.5 } else { 0.0 };
        let t = c / self.spacing - offset;
        let i = (t - 0.5).ceil().max(0.0) as usize;
        i.min(self.n_per_side - 1)
    }

    /// Nodes and weights of the multilinear interpolant at `x`.
    pub fn interpolation_stencil(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let offset = if self.layout == Layout::CellCentred { 0.5 } else { 0.0 };
        let axis: Vec<[(usize, f64); 2]> = x
            .iter()
            .map(|&c| {
                let t = (c / self.spacing - offset).clamp(0.0, (self.n_per_side - 1) as f64);
                let lo = (t.floor() as usize).min(self.n_per_side.saturating_sub(2));
                let hi = (lo + 1).min(self.n_per_side - 1);
                let frac = if hi == lo { 0.0 } else { t - lo as f64 };
                [(lo, 1.0 - frac), (hi, frac)]
            })
            .collect();
        let mut out: Vec<(usize, f64)> = Vec::new();
        let mut push = |idx: usize, w: f64| {
            if w != 0.0 {
                match out.iter_mut().find(|(i, _)| *i == idx) {
                    Some(entry) => entry.1 += w,
                    None => out.push((idx, w)),
                }
            }
        };
        if self.d == 1 {
            for &(i, w) in &axis[0] {
                push(i, w);
            }
        } else {
            for &(i, wi) in &axis[0] {
                for &(j, wj) in &axis[1] {
                    push(self.index(&[i, j]), wi * wj);
                }
            }
        }
        out
    }

    /// Discrete L² norm `(Σ u_i² · cell_volume)^{1/2}`.
    pub fn l2_norm(&self, u: &FieldVector) -> f64 {
        (u.norm_squared() * self.cell_volume()).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts_place_nodes() {
        let g = Grid::cell_centred(1, 4).unwrap();
        assert_eq!(g.points().coords(), &[0.125, 0.375, 0.625, 0.875]);
        let g = Grid::new(1, 257, Layout::Nodal).unwrap();
        assert_eq!(g.points().point(0), &[0.0]);
        assert_eq!(g.points().point(256), &[1.0]);
        assert_eq!(g.spacing(), 1.0 / 256.0);
        let g = Grid::new(1, 8, Layout::Periodic).unwrap();
        assert_eq!(g.points().point(7), &[0.875]);
    }

    #[test]
    fn two_d_grid_is_lexicographic() {
        let g = Grid::cell_centred(2, 3).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.points().point(1), &[1.0 / 6.0, 0.5]);
        assert_eq!(g.index(&[1, 2]), 5);
        assert!((g.cell_volume() - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn nearest_node_and_stencil() {
        let g = Grid::cell_centred(1, 10).unwrap();
        assert_eq!(g.nearest_node(&[0.0]), 0);
        assert_eq!(g.nearest_node(&[0.26]), 2);
        assert_eq!(g.nearest_node(&[0.999]), 9);
        let st = g.interpolation_stencil(&[0.3]);
        let val: f64 = st.iter().map(|&(i, w)| w * g.points().point(i)[0]).sum();
        assert!((val - 0.3).abs() < 1e-14);
        let g2 = Grid::cell_centred(2, 5).unwrap();
        let st = g2.interpolation_stencil(&[0.33, 0.71]);
        let wsum: f64 = st.iter().map(|p| p.1).sum();
        assert!((wsum - 1.0).abs() < 1e-14);
        let y: f64 = st.iter().map(|&(i, w)| w * g2.points().point(i)[1]).sum();
        assert!((y - 0.71).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(Grid::cell_centred(3, 4).is_err());
        assert!(Grid::new(1, 1, Layout::Nodal).is_err());
        assert!(PointSet::new(2, vec![0.0; 3]).is_err());
    }
}
