//! Draws of the covariance `Ω = ΛΛᵀ + Σ` from the fitted approximation, and
//! the correlation-matrix error metric.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::cavi::VariationalState;
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PosteriorError {
    #[error("loadings covariance of row {row} cannot be factorized")]
    Factorization { row: usize },
    #[error("diagonal entry {index} is {value}, must be positive")]
    NonPositiveDiagonal { index: usize, value: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("at least one draw is required")]
    NoDraws,
    #[error("invalid noise parameters for row {row}")]
    InvalidNoise { row: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceDraws {
    pub draws: Vec<DMatrix<f64>>,
    pub seed: u64,
    pub count: usize,
}

/// A lower-triangular `L` with `LLᵀ = V`.
///
/// Positive semi-definite input (such as an all-zero covariance) falls back to a
/// symmetric eigendecomposition with tiny negative eigenvalues clamped to zero.
fn covariance_root(v: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let sym = (v + v.transpose()) * 0.5;
    if let Some(chol) = sym.clone().cholesky() {
        return Some(chol.l());
    }
    let eig = sym.symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    if eig.eigenvalues.iter().any(|&e| e < -1e-10 * scale) || !eig.eigenvalues.iter().all(|e| e.is_finite()) {
        return None;
    }
    let roots = eig.eigenvalues.map(|e| e.max(0.0).sqrt());
    Some(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

/// Draws `count` covariance matrices.
///
/// Each draw takes `λ_j ~ N(μ_j, V_j)` independently over rows and
/// `σ_j² ~ InvGa(A, B_j)`, then forms `ΛΛᵀ + diag(σ²)`. Draw `k` uses its own
/// random stream, so the output depends only on `seed`.
pub fn sample_omega(
    state: &VariationalState,
    count: usize,
    seed: u64,
) -> Result<CovarianceDraws, PosteriorError> {
    if count == 0 {
        return Err(PosteriorError::NoDraws);
    }
    let (p, h) = (state.p(), state.truncation());
    let roots = state
        .v_lambda
        .iter()
        .enumerate()
        .map(|(row, v)| covariance_root(v).ok_or(PosteriorError::Factorization { row }))
        .collect::<Result<Vec<_>, _>>()?;
    let noise = state
        .b_sigma
        .iter()
        .enumerate()
        .map(|(row, &b)| Gamma::new(state.a_sigma, 1.0 / b).map_err(|_| PosteriorError::InvalidNoise { row }))
        .collect::<Result<Vec<_>, _>>()?;

    let draws = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, Stream::Posterior, k as u64);
            let mut lambda = DMatrix::zeros(p, h);
            let mut z = DVector::zeros(h);
            for j in 0..p {
                for zi in z.iter_mut() {
                    *zi = StandardNormal.sample(&mut rng);
                }
                let row = state.mu_lambda.row(j).transpose() + &roots[j] * &z;
                lambda.set_row(j, &row.transpose());
            }
            let mut omega = &lambda * lambda.transpose();
            for j in 0..p {
                omega[(j, j)] += 1.0 / noise[j].sample(&mut rng);
            }
            omega
        })
        .collect();
    Ok(CovarianceDraws { draws, seed, count })
}

/// `D^{-1/2} Ω D^{-1/2}` with `D = diag(Ω)`.
pub fn to_correlation(omega: &DMatrix<f64>) -> Result<DMatrix<f64>, PosteriorError> {
    if !omega.is_square() {
        return Err(PosteriorError::Shape(format!("{}x{} is not square", omega.nrows(), omega.ncols())));
    }
    let p = omega.nrows();
    let mut scale = Vec::with_capacity(p);
    for j in 0..p {
        let d = omega[(j, j)];
        if !(d > 0.0) {
            return Err(PosteriorError::NonPositiveDiagonal { index: j, value: d });
        }
        scale.push(1.0 / d.sqrt());
    }
    let mut out = DMatrix::from_fn(p, p, |i, j| {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        (omega[(a, b)] * scale[a] * scale[b]).clamp(-1.0, 1.0)
    });
    out.fill_diagonal(1.0);
    Ok(out)
}

/// Monte Carlo estimate of the mean squared deviation between the correlation
/// of `Ω` and a reference correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationError {
    /// Average over the `p(p+1)/2` upper-triangle entries of `E(Ω*_jq − S_jq)²`.
    pub mse: f64,
    /// Monte Carlo standard error of `mse`, from the spread of per-draw averages.
    pub standard_error: f64,
    /// Per-entry `E(Ω*_jq − S_jq)²`, upper triangle filled, lower mirrored.
    pub entry_mse: DMatrix<f64>,
    /// Per-entry mean deviation `E(Ω*_jq) − S_jq`.
    pub entry_bias: DMatrix<f64>,
}

pub fn correlation_error(
    draws: &CovarianceDraws,
    reference: &DMatrix<f64>,
) -> Result<CorrelationError, PosteriorError> {
    let first = draws.draws.first().ok_or(PosteriorError::NoDraws)?;
    let p = first.nrows();
    if reference.shape() != (p, p) {
        return Err(PosteriorError::Shape(format!(
            "draws are {p}x{p} but the reference is {}x{}",
            reference.nrows(),
            reference.ncols()
        )));
    }
    let entries = (p * (p + 1) / 2) as f64;
    let count = draws.draws.len() as f64;
    let mut sum_sq = DMatrix::zeros(p, p);
    let mut sum_dev = DMatrix::zeros(p, p);
    let mut per_draw = Vec::with_capacity(draws.draws.len());
    for omega in &draws.draws {
        if omega.shape() != (p, p) {
            return Err(PosteriorError::Shape("draws have inconsistent sizes".into()));
        }
        let corr = to_correlation(omega)?;
        let mut draw_total = 0.0;
        for j in 0..p {
            for q in j..p {
                let d = corr[(j, q)] - reference[(j, q)];
                sum_dev[(j, q)] += d;
                sum_sq[(j, q)] += d * d;
                draw_total += d * d;
            }
        }
        per_draw.push(draw_total / entries);
    }
    let mse = per_draw.iter().sum::<f64>() / count;
    let standard_error = if per_draw.len() > 1 {
        let var = per_draw.iter().map(|v| (v - mse).powi(2)).sum::<f64>() / (count - 1.0);
        (var / count).sqrt()
    } else {
        0.0
    };
    let mut entry_mse = sum_sq / count;
    let mut entry_bias = sum_dev / count;
    for j in 0..p {
        for q in 0..j {
            entry_mse[(j, q)] = entry_mse[(q, j)];
            entry_bias[(j, q)] = entry_bias[(q, j)];
        }
    }
    Ok(CorrelationError {
        mse,
        standard_error,
        entry_mse,
        entry_bias,
    })
}

/// `Σ_{j ≤ q} E(Ω*_jq − S_jq)² / (p(p+1)/2)`, the expectation taken over the draws.
pub fn mse_vs_sample_correlation(
    draws: &CovarianceDraws,
    reference: &DMatrix<f64>,
) -> Result<f64, PosteriorError> {
    Ok(correlation_error(draws, reference)?.mse)
}
