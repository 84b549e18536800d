use serde::{Deserialize, Serialize};

use super::CaviError;

/// Fixed model constants.
///
/// `p` is the observed dimension and `truncation` the number of factor
/// columns `H`. Noise variances get an `InvGa(a_sigma, b_sigma)` prior and each
/// loading a spike `N(0, theta_inf)` / slab `N(0, theta0)` mixture whose spike
/// probability follows the stick-breaking process with parameter `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub p: usize,
    pub truncation: usize,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub alpha: f64,
    pub theta0: f64,
    pub theta_inf: f64,
}

impl Hyperparams {
    pub const DEFAULT_ALPHA: f64 = 5.0;
    pub const DEFAULT_THETA0: f64 = 1.0;
    pub const DEFAULT_THETA_INF: f64 = 1e-6;
    pub const DEFAULT_A_SIGMA: f64 = 1.0;
    pub const DEFAULT_B_SIGMA: f64 = 0.3;

    /// Defaults for `p` observed variables: `H = p + 1`, `alpha = 5`,
    /// `theta0 = 1`, `theta_inf = 1e-6`, `InvGa(1, 0.3)` noise prior.
    pub fn with_defaults(p: usize) -> Self {
        Hyperparams {
            p,
            truncation: p + 1,
            a_sigma: Self::DEFAULT_A_SIGMA,
            b_sigma: Self::DEFAULT_B_SIGMA,
            alpha: Self::DEFAULT_ALPHA,
            theta0: Self::DEFAULT_THETA0,
            theta_inf: Self::DEFAULT_THETA_INF,
        }
    }

    pub fn validate(&self) -> Result<(), CaviError> {
        let bad = |what: &str| Err(CaviError::InvalidHyperparams(what.to_string()));
        if self.p < 1 {
            return bad("p must be at least 1");
        }
        if self.truncation < 2 {
            return bad("truncation H must be at least 2");
        }
        for (name, v) in [
            ("a_sigma", self.a_sigma),
            ("b_sigma", self.b_sigma),
            ("alpha", self.alpha),
            ("theta_inf", self.theta_inf),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive and finite, got {v}"));
            }
        }
        // Equality is accepted: the spike and slab then coincide.
        if !(self.theta0 >= self.theta_inf && self.theta0.is_finite()) {
            return bad("theta0 must be at least theta_inf");
        }
        Ok(())
    }
}
