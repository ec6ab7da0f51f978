//! Gaussian random-field samplers: dense Cholesky, SPDE precision solves and
//! truncated spectral expansions.

mod dense;
mod spde;
mod spectral;

pub use dense::{sample_dense, sample_dense_with_factor};
pub use spde::{
    assemble_precision, assemble_precision_from_gamma, calibrate_sigma, pilot_second_moment, sample_spde,
    NeumannLaplacian, PrecisionOperator, DEFAULT_BASE_GAMMA,
};
pub use spectral::{sample_spectral, SpectralBasis, SpectralCovariance, SpectralSample};
