use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{CaviError, Hyperparams};
use crate::data_io::Dataset;
use crate::numerics::digamma_positive;
use crate::prior::sample_sticks;

/// Parameters of the mean-field approximation.
///
/// * `q(λ_j) = N(mu_lambda[j, ·], v_lambda[j])` for each of the `p` rows,
/// * `q(η_i) = N(mu_eta[i, ·], v_eta)` with a covariance shared by all `n` rows,
/// * `q(σ_j²) = InvGa(a_sigma, b_sigma[j])`,
/// * `q(z_h) = Categorical(kappa[h, ·])`,
/// * `q(v_h) = Beta(a_v[h], b_v[h])` for `h < H`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    pub mu_lambda: DMatrix<f64>,
    pub v_lambda: Vec<DMatrix<f64>>,
    pub mu_eta: DMatrix<f64>,
    pub v_eta: DMatrix<f64>,
    pub a_sigma: f64,
    pub b_sigma: DVector<f64>,
    pub kappa: DMatrix<f64>,
    pub a_v: DVector<f64>,
    pub b_v: DVector<f64>,
}

impl VariationalState {
    pub fn p(&self) -> usize {
        self.mu_lambda.nrows()
    }

    pub fn n(&self) -> usize {
        self.mu_eta.nrows()
    }

    pub fn truncation(&self) -> usize {
        self.mu_lambda.ncols()
    }

    /// `E[σ_j⁻²] = A / B_j` for every row.
    pub fn noise_precisions(&self) -> DVector<f64> {
        self.b_sigma.map(|b| self.a_sigma / b)
    }

    /// Probability that column `h` (0-indexed) is in the spike: `Σ_{l ≤ h} κ_hl`.
    pub fn spike_mass(&self, h: usize) -> f64 {
        self.kappa.row(h).iter().take(h + 1).sum()
    }

    /// Probability that column `h` is in the slab, summed directly over `l > h`
    /// rather than as `1 − spike_mass` so tiny slab masses keep full precision
    /// (folded from `+0.0`, since an empty `f64` sum is `-0.0`).
    pub fn slab_mass(&self, h: usize) -> f64 {
        self.kappa.row(h).iter().skip(h + 1).fold(0.0, |acc, k| acc + k)
    }

    /// Expected prior precision of each loadings column:
    /// `spike/θ∞ + slab/θ₀`.
    pub fn loadings_prior_precision(&self, hyper: &Hyperparams) -> DVector<f64> {
        DVector::from_fn(self.truncation(), |h, _| {
            self.spike_mass(h) / hyper.theta_inf + self.slab_mass(h) / hyper.theta0
        })
    }

    /// `E[λ_·hᵀ λ_·h] = Σ_j (μ_jh² + V_j;hh)` for each column.
    pub fn column_second_moments(&self) -> DVector<f64> {
        DVector::from_fn(self.truncation(), |h, _| {
            (0..self.p())
                .map(|j| self.mu_lambda[(j, h)].powi(2) + self.v_lambda[j][(h, h)])
                .sum()
        })
    }

    /// `(E[log v_h], E[log(1 − v_h)])` for `h < H`.
    pub fn stick_log_moments(&self) -> Vec<(f64, f64)> {
        self.a_v
            .iter()
            .zip(self.b_v.iter())
            .map(|(&a, &b)| {
                let total = digamma_positive(a + b);
                (digamma_positive(a) - total, digamma_positive(b) - total)
            })
            .collect()
    }

    /// `E[log ω_l] = E[log v_l] + Σ_{m<l} E[log(1 − v_m)]`, with `v_H = 1`.
    pub fn expected_log_weights(&self) -> Vec<f64> {
        let moments = self.stick_log_moments();
        let h_max = self.truncation();
        let mut out = Vec::with_capacity(h_max);
        let mut carried = 0.0;
        for l in 0..h_max {
            let own = if l + 1 < h_max { moments[l].0 } else { 0.0 };
            out.push(own + carried);
            if l + 1 < h_max {
                carried += moments[l].1;
            }
        }
        out
    }

    /// Checks dimensions and the invariants every update relies on.
    pub fn validate(&self, data: &Dataset, hyper: &Hyperparams) -> Result<(), CaviError> {
        let (n, p, h) = (data.n(), hyper.p, hyper.truncation);
        let shape = |what: String| Err(CaviError::Shape(what));
        if data.p() != p {
            return shape(format!("dataset has {} columns, hyperparameters say p = {p}", data.p()));
        }
        if self.mu_lambda.shape() != (p, h) {
            return shape(format!("mu_lambda is {:?}, expected ({p}, {h})", self.mu_lambda.shape()));
        }
        if self.mu_eta.shape() != (n, h) {
            return shape(format!("mu_eta is {:?}, expected ({n}, {h})", self.mu_eta.shape()));
        }
        if self.v_lambda.len() != p || self.v_lambda.iter().any(|v| v.shape() != (h, h)) {
            return shape(format!("v_lambda must hold {p} matrices of size {h}x{h}"));
        }
        if self.v_eta.shape() != (h, h) || self.kappa.shape() != (h, h) {
            return shape(format!("v_eta and kappa must be {h}x{h}"));
        }
        if self.b_sigma.len() != p || self.a_v.len() != h - 1 || self.b_v.len() != h - 1 {
            return shape("b_sigma must have length p and a_v, b_v length H - 1".into());
        }
        let invalid = |what: &str| Err(CaviError::InvalidState(what.to_string()));
        if !(self.a_sigma > 0.0) || self.b_sigma.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
            return invalid("noise parameters must be positive");
        }
        if self.a_v.iter().chain(self.b_v.iter()).any(|&x| !(x > 0.0 && x.is_finite())) {
            return invalid("stick parameters must be positive");
        }
        for (row, r) in self.kappa.row_iter().enumerate() {
            if r.iter().any(|&k| !(0.0..=1.0).contains(&k)) {
                return invalid("assignment probabilities must lie in [0, 1]");
            }
            let sum = r.sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(CaviError::RowSum { row, sum });
            }
        }
        Ok(())
    }
}

/// Random starting point.
///
/// Loadings and factor-score means are i.i.d. standard normal, covariances are
/// identities, `A = a_σ + n/2`, `B_j = b_σ + ‖y_·j‖²/2`, each assignment row is a
/// point mass at an index drawn from one realization of the stick-breaking
/// prior, and the stick parameters match the `Beta(1, α)` prior.
pub fn init_state<R: Rng + ?Sized>(
    data: &Dataset,
    hyper: &Hyperparams,
    rng: &mut R,
) -> Result<VariationalState, CaviError> {
    hyper.validate()?;
    if data.p() != hyper.p {
        return Err(CaviError::Shape(format!(
            "dataset has {} columns, hyperparameters say p = {}",
            data.p(),
            hyper.p
        )));
    }
    let (n, p, h) = (data.n(), hyper.p, hyper.truncation);
    let mut normal = || -> f64 { StandardNormal.sample(rng) };
    // Row-major fill keeps the draw order independent of storage layout.
    let mut mu_lambda = DMatrix::zeros(p, h);
    for j in 0..p {
        for k in 0..h {
            mu_lambda[(j, k)] = normal();
        }
    }
    let mut mu_eta = DMatrix::zeros(n, h);
    for i in 0..n {
        for k in 0..h {
            mu_eta[(i, k)] = normal();
        }
    }
    // Spike and slab are both absorbing under coordinate ascent, so each restart
    // starts from one prior draw of the assignments; restarts then differ in how
    // many columns begin active and the ELBO decides between them.
    let sticks = sample_sticks(hyper.alpha, h, rng)
        .map_err(|e| CaviError::InvalidHyperparams(e.to_string()))?;
    let mut kappa = DMatrix::zeros(h, h);
    for row in 0..h {
        let u: f64 = rng.random();
        let l = sticks.pi.iter().position(|&c| u < c).unwrap_or(h - 1);
        kappa[(row, l)] = 1.0;
    }
    // Noise rates start at the data scale rather than at the prior, so the first
    // loadings update does not overfit the random factors.
    let b_sigma = DVector::from_fn(p, |j, _| {
        hyper.b_sigma + 0.5 * data.y.column(j).norm_squared()
    });
    Ok(VariationalState {
        mu_lambda,
        v_lambda: vec![DMatrix::identity(h, h); p],
        mu_eta,
        v_eta: DMatrix::identity(h, h),
        a_sigma: hyper.a_sigma + n as f64 / 2.0,
        b_sigma,
        kappa,
        a_v: DVector::from_element(h - 1, 1.0),
        b_v: DVector::from_element(h - 1, hyper.alpha),
    })
}
