use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FieldVector, Grid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorNorm {
    L1,
    L2,
}

/// `‖mean − truth‖` on `grid` by the midpoint rule (each node weighted by its
/// cell volume).
pub fn compute_error(mean: &FieldVector, truth: &FieldVector, grid: &Grid, norm: ErrorNorm) -> Result<f64> {
    if mean.len() != grid.len() || truth.len() != grid.len() {
        return Err(Error::invalid(format!(
            "error needs both fields on the same {}-node mesh, got {} and {}",
            grid.len(),
            mean.len(),
            truth.len()
        )));
    }
    let h = grid.cell_volume();
    let diff = mean.iter().zip(truth.iter()).map(|(a, b)| a - b);
    Ok(match norm {
        ErrorNorm::L1 => diff.map(f64::abs).sum::<f64>() * h,
        ErrorNorm::L2 => (diff.map(|d| d * d).sum::<f64>() * h).sqrt(),
    })
}
