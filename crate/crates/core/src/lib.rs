//! Variational Bayes for Gaussian factor models with a cumulative shrinkage
//! process prior on the loadings.
//!
//! The model is `y_i = Λ η_i + ε_i` with `η_i ~ N(0, I_H)`,
//! `ε_i ~ N(0, diag(σ²))`, `σ_j² ~ InvGa(a_σ, b_σ)` and each loading
//! `λ_jh ~ (1 − π_h) N(0, θ₀) + π_h N(0, θ∞)`, where the spike probabilities
//! `π_h` accumulate through a stick-breaking construction so that later columns
//! are shrunk harder.
//!
//! * [`prior`] samples the shrinkage process itself.
//! * [`cavi`] holds the mean-field approximation, its five coordinate updates,
//!   the closed-form ELBO and the multi-restart driver.
//! * [`posterior`] draws `Ω = ΛΛᵀ + Σ` from the fit and scores its correlation
//!   matrix against a reference.
//! * [`data_io`] loads CSV data, applies the questionnaire preprocessing and
//!   simulates data with known structure.
//! * [`cli`] backs the `cusp-vb` binary (`simulate`, `fit`, `eval`).
//!
//! Runnable walkthroughs live in `examples/`:
//!
//! ```bash
//! cargo run --release --example stick_breaking
//! cargo run --release --example fit_synthetic
//! cargo run --release --example elbo_trace
//! cargo run --release --example posterior_correlation
//! cargo run --release --example bfi_pipeline -- bfi_over50.csv
//! ```

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops keep the update formulas recognizable.
#![allow(clippy::needless_range_loop)]

pub mod cavi;
pub mod cli;
pub mod data_io;
pub mod numerics;
pub mod posterior;
pub mod prior;
pub mod rng;

pub use cavi::{fit, FitOptions, FitResult, Hyperparams, VariationalState};
pub use data_io::Dataset;
