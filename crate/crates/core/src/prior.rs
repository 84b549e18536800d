//! The finite cumulative shrinkage process.
//!
//! Stick fractions `v_1, …, v_{H−1}` are i.i.d. `Beta(1, α)` with `v_H = 1`.
//! They define weights `ω_l = v_l ∏_{m<l} (1 − v_m)` and cumulative spike
//! probabilities `π_h = ω_1 + … + ω_h`, so `π` is non-decreasing and `π_H = 1`.
//! A loading in column `h` is drawn from `(1 − π_h) N(0, θ₀) + π_h N(0, θ∞)`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::cavi::Hyperparams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PriorError {
    #[error("shrinkage parameter alpha must be positive, got {0}")]
    InvalidAlpha(f64),
    #[error("truncation level must be at least 2, got {0}")]
    TruncationTooSmall(usize),
    #[error("index h = {h} outside 1..={truncation}")]
    IndexOutOfRange { h: usize, truncation: usize },
    #[error("invalid variances: need theta0 >= theta_inf > 0 (got {theta0}, {theta_inf})")]
    InvalidVariance { theta0: f64, theta_inf: f64 },
    #[error("stick fraction {0} outside (0, 1]")]
    InvalidFraction(f64),
}

/// One realization of the stick-breaking construction.
#[derive(Debug, Clone, PartialEq)]
pub struct StickDraw {
    pub v: Vec<f64>,
    pub omega: Vec<f64>,
    pub pi: Vec<f64>,
}

impl StickDraw {
    /// Builds weights and cumulative probabilities from stick fractions.
    /// The last fraction is forced to 1.
    pub fn from_fractions(mut v: Vec<f64>) -> Result<Self, PriorError> {
        if v.len() < 2 {
            return Err(PriorError::TruncationTooSmall(v.len()));
        }
        if let Some(&bad) = v.iter().find(|&&x| !(x > 0.0 && x <= 1.0)) {
            return Err(PriorError::InvalidFraction(bad));
        }
        *v.last_mut().unwrap() = 1.0;
        Ok(Self::assemble(v))
    }

    fn assemble(v: Vec<f64>) -> Self {
        let mut omega = Vec::with_capacity(v.len());
        let mut remaining = 1.0;
        for &vl in &v {
            omega.push(vl * remaining);
            remaining *= 1.0 - vl;
        }
        let pi = omega
            .iter()
            .scan(0.0, |acc, &w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        StickDraw { v, omega, pi }
    }

    pub fn truncation(&self) -> usize {
        self.v.len()
    }
}

/// Draws `Beta(1, α)` as `1 − U^{1/α}`.
fn beta_one_alpha<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    1.0 - u.powf(1.0 / alpha)
}

pub fn sample_sticks<R: Rng + ?Sized>(
    alpha: f64,
    truncation: usize,
    rng: &mut R,
) -> Result<StickDraw, PriorError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(PriorError::InvalidAlpha(alpha));
    }
    if truncation < 2 {
        return Err(PriorError::TruncationTooSmall(truncation));
    }
    let mut v: Vec<f64> = (0..truncation - 1)
        .map(|_| beta_one_alpha(alpha, rng))
        .collect();
    v.push(1.0);
    // Beta(1, α) rounds to exactly 0 for huge α, which from_fractions would reject.
    Ok(StickDraw::assemble(v))
}

/// Draws a `p × H` loadings matrix from the shrinkage prior.
///
/// One stick realization is shared by all rows; entry `(j, h)` comes from the
/// spike with probability `π_h`.
pub fn sample_cusp_loadings<R: Rng + ?Sized>(
    hyper: &Hyperparams,
    p: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>, PriorError> {
    if !(hyper.theta_inf > 0.0 && hyper.theta0 >= hyper.theta_inf) {
        return Err(PriorError::InvalidVariance {
            theta0: hyper.theta0,
            theta_inf: hyper.theta_inf,
        });
    }
    let sticks = sample_sticks(hyper.alpha, hyper.truncation, rng)?;
    let slab = Normal::new(0.0, hyper.theta0.sqrt()).expect("finite slab sd");
    let spike = Normal::new(0.0, hyper.theta_inf.sqrt()).expect("finite spike sd");
    let mut out = DMatrix::zeros(p, hyper.truncation);
    for h in 0..hyper.truncation {
        for j in 0..p {
            let u: f64 = rng.random();
            out[(j, h)] = if u < sticks.pi[h] {
                spike.sample(rng)
            } else {
                slab.sample(rng)
            };
        }
    }
    Ok(out)
}

/// Prior mean of `π_h` (1-indexed `h`): `1 − (α/(1+α))^h` for `h < H`, and 1 at `h = H`.
pub fn expected_pi(alpha: f64, h: usize, truncation: usize) -> Result<f64, PriorError> {
    if !(alpha > 0.0) {
        return Err(PriorError::InvalidAlpha(alpha));
    }
    if h < 1 || h > truncation {
        return Err(PriorError::IndexOutOfRange { h, truncation });
    }
    if h == truncation {
        return Ok(1.0);
    }
    Ok(1.0 - (alpha / (1.0 + alpha)).powi(h as i32))
}
