//! Non-centred MCMC for regression with a deep Gaussian process prior.

mod observation;
mod pcn;
mod prior;
mod sampler;

pub use observation::{potential_phi, Dataset, ObservationKind, ObservationOperator};
pub use pcn::{
    adapt_beta, initial_state, pcn_step, sample_coordinates, AcceptanceStats, ExplicitPotential, MarginalPotential,
    NonCentredState, Potential, UpdateScheme, ZeroPotential, BETA_MIN, MIN_ADAPT_WINDOW, TARGET_ACCEPTANCE,
};
pub use prior::{gp_regress_top_layer, potential_psi, DeepPrior, TopCovariance};
pub use sampler::{
    evaluate_potential, quantile_sorted, run_inference, ChainRecord, McmcConfig, PosteriorSummary, PotentialKind,
    Sampler,
};
