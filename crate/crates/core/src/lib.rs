//! Score tests for a single genetic variant in logistic regression with an
//! imbalanced binary phenotype.
//!
//! The score `U = g'(y - mu)` for a genotype vector `g` in {0,1,2} is a
//! bounded lattice variable with step 1. Its conditional null distribution
//! given the nuisance scores can be computed exactly for the intercept model
//! and for a model with one binary covariate ([`exact`]); in general it is
//! approximated by
//!
//! * a double saddlepoint approximation with the second continuity
//!   correction (DSPA-CC),
//! * a single saddlepoint approximation of the efficient score, with or
//!   without continuity correction (ESPA-CC / ESPA),
//! * carrier-restricted speed-ups of both (fastDSPA-CC / fastSPA),
//! * the normal approximation, kept as a baseline.
//!
//! Two-sided p-values follow the lattice reflection rule in [`pvalue`].
//! [`evaluate`] holds the exact conditional and overall type-I-error
//! machinery for the intercept model and a Monte-Carlo harness for models
//! with nuisance covariates.

pub mod cgf;
mod error;
pub mod evaluate;
pub mod exact;
pub mod fast;
pub mod model;
pub mod numeric;
pub mod pvalue;
pub mod saddlepoint;
pub mod variant;

pub use error::{Error, Result};
pub use model::{fit_null, Dataset, DesignMatrix, NullFit, ScoreContext};
pub use pvalue::{Method, PvalueReport, Sidedness};
pub use saddlepoint::TailResult;
pub use variant::VariantTest;
