use nalgebra::DVector;

use crate::error::Result;
use crate::grid::FieldVector;
use crate::kernels::CorrelationMatrix;
use crate::linalg::CholeskyFactor;
use crate::random::NoiseSource;

/// Draws `L z ~ N(0, R)` with `L` the lower Cholesky factor of `R`.
pub fn sample_dense<N: NoiseSource + ?Sized>(r: &CorrelationMatrix, noise: &mut N) -> Result<FieldVector> {
    let factor = CholeskyFactor::new_with_jitter(r.entries())?;
    Ok(sample_dense_with_factor(&factor, noise))
}

/// Draws `L z` for an existing factor.
pub fn sample_dense_with_factor<N: NoiseSource + ?Sized>(factor: &CholeskyFactor, noise: &mut N) -> FieldVector {
    let mut z = DVector::zeros(factor.dim());
    noise.fill_normal(z.as_mut_slice());
    factor.mul_l(&z)
}
