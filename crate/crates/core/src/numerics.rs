//! Special functions and small dense linear-algebra kernels.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("digamma is undefined for x = {0} (requires x > 0)")]
    DigammaDomain(f64),
    #[error("log_sum_exp of an empty slice")]
    EmptyInput,
    #[error("softmax needs at least one finite log-weight")]
    NoFiniteWeight,
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix of dimension {dim} is not positive definite (Cholesky failed)")]
    NotPositiveDefinite { dim: usize },
}

/// `B_{2k} / (2k)` for k = 1..7, the coefficients of the asymptotic digamma series.
const DIGAMMA_ASYMPTOTIC: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
];

/// Digamma function Ψ(x) for x > 0.
///
/// Shifts x upward with Ψ(x) = Ψ(x + 1) − 1/x until x ≥ 6, then evaluates the
/// asymptotic series ln x − 1/(2x) − Σ B₂ₖ/(2k x²ᵏ).
pub fn digamma(x: f64) -> Result<f64, NumericsError> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(NumericsError::DigammaDomain(x));
    }
    Ok(digamma_positive(x))
}

/// Unchecked digamma for callers that already guarantee `x > 0`.
pub(crate) fn digamma_positive(x: f64) -> f64 {
    debug_assert!(x > 0.0, "digamma_positive({x})");
    let mut shift = 0.0;
    let mut z = x;
    while z < 6.0 {
        shift -= 1.0 / z;
        z += 1.0;
    }
    let inv2 = 1.0 / (z * z);
    let mut series = 0.0;
    let mut power = inv2;
    for c in DIGAMMA_ASYMPTOTIC {
        series += c * power;
        power *= inv2;
    }
    shift + z.ln() - 0.5 / z - series
}

/// Natural log of the gamma function.
pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// `log Σ exp(xᵢ)`, computed by factoring out the maximum.
pub fn log_sum_exp(xs: &[f64]) -> Result<f64, NumericsError> {
    let max = xs
        .iter()
        .copied()
        .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |m| m.max(x))))
        .ok_or(NumericsError::EmptyInput)?;
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Normalizes log-weights into probabilities in place.
///
/// Weights are exponentiated relative to the maximum and divided by their sum,
/// which avoids the rounding of `x − log Σ exp(x)` when the inputs are large.
pub fn softmax_in_place(log_weights: &mut [f64]) -> Result<(), NumericsError> {
    let max = log_weights
        .iter()
        .copied()
        .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |m| m.max(x))))
        .ok_or(NumericsError::EmptyInput)?;
    if !max.is_finite() {
        return Err(NumericsError::NoFiniteWeight);
    }
    for w in log_weights.iter_mut() {
        *w = (*w - max).exp();
    }
    let total: f64 = log_weights.iter().sum();
    for w in log_weights.iter_mut() {
        *w /= total;
    }
    Ok(())
}

/// A symmetric positive definite matrix.
///
/// Construction symmetrizes the input and checks definiteness with a
/// Cholesky factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(DMatrix<f64>);

impl SpdMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self, NumericsError> {
        let sym = symmetrize(matrix)?;
        if sym.clone().cholesky().is_none() {
            return Err(NumericsError::NotPositiveDefinite { dim: sym.nrows() });
        }
        Ok(SpdMatrix(sym))
    }

    pub fn identity(dim: usize) -> Self {
        SpdMatrix(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self, NumericsError> {
        SpdMatrix::new(DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn inverse(&self) -> Result<SpdMatrix, NumericsError> {
        spd_inverse(&self.0)
    }
}

impl AsRef<DMatrix<f64>> for SpdMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

fn symmetrize(matrix: DMatrix<f64>) -> Result<DMatrix<f64>, NumericsError> {
    if !matrix.is_square() {
        return Err(NumericsError::NotSquare {
            rows: matrix.nrows(),
            cols: matrix.ncols(),
        });
    }
    let t = matrix.transpose();
    Ok((matrix + t) * 0.5)
}

/// Inverts a symmetric positive definite matrix through its Cholesky factor.
///
/// The input is symmetrized as `(A + Aᵀ)/2` first and so is the result. A
/// failed factorization is reported, never regularized away.
pub fn spd_inverse(matrix: &DMatrix<f64>) -> Result<SpdMatrix, NumericsError> {
    let sym = symmetrize(matrix.clone())?;
    let dim = sym.nrows();
    let chol = sym
        .cholesky()
        .ok_or(NumericsError::NotPositiveDefinite { dim })?;
    let inv = chol.inverse();
    let t = inv.transpose();
    Ok(SpdMatrix((inv + t) * 0.5))
}

/// Log-determinant of a symmetric positive definite matrix.
pub fn spd_log_det(matrix: &DMatrix<f64>) -> Result<f64, NumericsError> {
    let sym = symmetrize(matrix.clone())?;
    let dim = sym.nrows();
    let chol = sym
        .cholesky()
        .ok_or(NumericsError::NotPositiveDefinite { dim })?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}
