//! Deep Gaussian process priors on grids over `[0,1]^d`.
//!
//! Four layered constructions (composition, covariance function, covariance
//! operator, convolution), diagnostics for their behaviour as depth grows,
//! and non-centred pCN inference for regression with a deep prior.

pub mod constructions;
pub mod ergodicity;
pub mod error;
pub mod experiments;
pub mod fields;
pub mod grid;
pub mod inference;
pub mod kernels;
pub mod linalg;
pub mod random;

pub use constructions::{
    initial_layer, run_chain, run_ensemble, ChainTrajectory, Construction, DeepChainConfig, InitialState, Layer,
};
pub use error::{Error, Result};
pub use grid::{FieldVector, Grid, Layout, PointSet};
pub use kernels::{IsotropicKernel, LengthScaleMap};
pub use random::{stream, NoiseSource, RandomStream};
