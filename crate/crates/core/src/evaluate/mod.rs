//! Type-I-error evaluation.
//!
//! * [`region`]: exact conditional and overall type-I error of each method
//!   for the intercept model, from the exact lattice pmf.
//! * [`simulate`]: Monte-Carlo conditional type-I error with nuisance
//!   covariates sampled given the phenotype.
//! * [`quadrature`]: Gauss-Hermite integrals for the simulation model
//!   (prevalence, conditional covariate laws).

pub mod config;
pub mod quadrature;
pub mod region;
pub mod simulate;

pub use region::{
    conditional_rejection_region, error_profile, mu_grid, ConditionalError, ErrorProfile, OverallError, RejectionRegion,
};
pub use simulate::{clopper_pearson, simulate_conditional_t1e, MethodTally, SimulationConfig, SimulationResult};
