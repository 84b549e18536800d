//! Coordinate-ascent variational inference for the shrinkage factor model.
//!
//! The posterior over loadings `λ`, factor scores `η`, noise variances `σ²`,
//! spike/slab assignments `z` and stick fractions `v` is approximated by the
//! mean-field family `q(λ) q(η) q(σ²) q(z) q(v)`. One [`cycle`] applies the five
//! closed-form factor updates in order and evaluates the [`elbo`]; [`fit`]
//! drives many cycles from several random initializations.

mod elbo;
mod fit;
mod hyper;
mod state;
mod updates;

use thiserror::Error;

use crate::numerics::NumericsError;

pub use elbo::{elbo, elbo_kl_form, ElboTerms};
pub use fit::{expected_active, fit, run_chain, ChainOutcome, FitOptions, FitResult, RunRecord};
pub use hyper::Hyperparams;
pub use state::{init_state, VariationalState};
pub use updates::{
    cycle, update_assignments, update_factors, update_loadings, update_noise, update_sticks,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaviError {
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numerical failure in {step}: {source}")]
    Numerical {
        step: &'static str,
        #[source]
        source: NumericsError,
    },
    #[error("invalid variational state: {0}")]
    InvalidState(String),
    #[error("non-finite ELBO")]
    NonFiniteElbo,
    #[error("assignment matrix row {row} sums to {sum}, not 1")]
    RowSum { row: usize, sum: f64 },
    #[error("invalid fit options: {0}")]
    InvalidOptions(String),
    #[error("all {restarts} restarts failed; last error: {last}")]
    AllRestartsFailed { restarts: usize, last: String },
}
