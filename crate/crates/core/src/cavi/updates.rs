//! The five closed-form factor updates.
//!
//! Each step maximizes the ELBO over one mean-field factor with the others
//! held fixed, so none of them can decrease it.

use nalgebra::{DMatrix, DVector};

use super::{elbo, CaviError, Hyperparams, VariationalState};
use crate::data_io::Dataset;
use crate::numerics::{softmax_in_place, spd_inverse, NumericsError};

fn numerical(step: &'static str) -> impl Fn(NumericsError) -> CaviError {
    move |source| CaviError::Numerical { step, source }
}

/// `Σ_i E[η_i η_iᵀ] = μ_ηᵀ μ_η + n V_η`.
pub(crate) fn factor_gram(state: &VariationalState) -> DMatrix<f64> {
    state.mu_eta.tr_mul(&state.mu_eta) + &state.v_eta * state.n() as f64
}

/// Step 1: `q(λ_j)` for every row `j`.
///
/// `V_j = (diag(θ*) + r_j G)⁻¹` and `μ_j = r_j V_j μ_ηᵀ y_·j`, where
/// `r_j = A/B_j`, `G = μ_ηᵀμ_η + nV_η` and `θ*` is the expected prior precision.
pub fn update_loadings(
    state: &mut VariationalState,
    data: &Dataset,
    hyper: &Hyperparams,
) -> Result<(), CaviError> {
    let gram = factor_gram(state);
    let prior_precision = state.loadings_prior_precision(hyper);
    let eta_t_y = state.mu_eta.tr_mul(&data.y);
    let rates = state.noise_precisions();
    for j in 0..state.p() {
        let mut precision = &gram * rates[j];
        for h in 0..state.truncation() {
            precision[(h, h)] += prior_precision[h];
        }
        let cov = spd_inverse(&precision)
            .map_err(numerical("loadings update"))?
            .into_inner();
        let mean = &cov * eta_t_y.column(j) * rates[j];
        state.mu_lambda.set_row(j, &mean.transpose());
        state.v_lambda[j] = cov;
    }
    Ok(())
}

/// `Σ_i E[(y_ij − λ_jᵀη_i)²]` for column `j`, given `G` and `μ_ηᵀ y_·j`.
pub(crate) fn expected_squared_residual(
    state: &VariationalState,
    data: &Dataset,
    gram: &DMatrix<f64>,
    eta_t_y: &DMatrix<f64>,
    j: usize,
) -> f64 {
    let mu: DVector<f64> = state.mu_lambda.row(j).transpose();
    let yy = data.y.column(j).norm_squared();
    let cross = eta_t_y.column(j).dot(&mu);
    let quad = (gram * &mu).dot(&mu);
    let trace = gram.component_mul(&state.v_lambda[j]).sum();
    yy - 2.0 * cross + quad + trace
}

/// Step 2: `q(σ_j²)`. `A = a_σ + n/2`, `B_j = b_σ + ½ Σ_i E[(y_ij − λ_jᵀη_i)²]`.
pub fn update_noise(
    state: &mut VariationalState,
    data: &Dataset,
    hyper: &Hyperparams,
) -> Result<(), CaviError> {
    state.a_sigma = hyper.a_sigma + data.n() as f64 / 2.0;
    let gram = factor_gram(state);
    let eta_t_y = state.mu_eta.tr_mul(&data.y);
    for j in 0..state.p() {
        let resid = expected_squared_residual(state, data, &gram, &eta_t_y, j);
        state.b_sigma[j] = hyper.b_sigma + 0.5 * resid;
    }
    Ok(())
}

/// Step 3: `q(η_i)` with a shared covariance.
///
/// `V_η = (I + Σ_j r_j E[λ_j λ_jᵀ])⁻¹` and `μ_η,i = V_η Σ_j r_j μ_j y_ij`.
pub fn update_factors(
    state: &mut VariationalState,
    data: &Dataset,
    _hyper: &Hyperparams,
) -> Result<(), CaviError> {
    let h = state.truncation();
    let rates = state.noise_precisions();
    let mut weighted_mu = state.mu_lambda.clone();
    for (j, mut row) in weighted_mu.row_iter_mut().enumerate() {
        row *= rates[j];
    }
    let mut precision = DMatrix::identity(h, h) + state.mu_lambda.tr_mul(&weighted_mu);
    for (j, v) in state.v_lambda.iter().enumerate() {
        precision += v * rates[j];
    }
    let cov = spd_inverse(&precision)
        .map_err(numerical("factor update"))?
        .into_inner();
    state.mu_eta = &data.y * weighted_mu * &cov;
    state.v_eta = cov;
    Ok(())
}

/// Step 4: `q(z_h)`.
///
/// Column `h` is assigned index `l ≤ h` (spike) or `l > h` (slab) with log-weight
/// `E[log ω_l] − ½ p log θ − ½ E[λ_·hᵀλ_·h] / θ`; rows are normalized in the log domain.
pub fn update_assignments(
    state: &mut VariationalState,
    hyper: &Hyperparams,
) -> Result<(), CaviError> {
    let h_max = state.truncation();
    let p = state.p() as f64;
    let log_omega = state.expected_log_weights();
    let second = state.column_second_moments();
    let mut weights = vec![0.0; h_max];
    for h in 0..h_max {
        let spike = -0.5 * p * hyper.theta_inf.ln() - 0.5 * second[h] / hyper.theta_inf;
        let slab = -0.5 * p * hyper.theta0.ln() - 0.5 * second[h] / hyper.theta0;
        // Both terms can reach ~1e7; shifting by the larger one before adding
        // E[log ω_l] keeps the weights within the dominant group at full precision.
        // The last row has no slab indices, so only present groups count.
        let top = if h + 1 < h_max { spike.max(slab) } else { spike };
        let (spike, slab) = (spike - top, slab - top);
        for (l, w) in weights.iter_mut().enumerate() {
            *w = log_omega[l] + if l <= h { spike } else { slab };
        }
        softmax_in_place(&mut weights).map_err(numerical("assignment update"))?;
        for (l, &w) in weights.iter().enumerate() {
            state.kappa[(h, l)] = w;
        }
    }
    Ok(())
}

/// Step 5: `q(v_h)` for `h < H`.
/// `A_h = 1 + Σ_l κ_lh`, `B_h = α + Σ_l Σ_{m>h} κ_lm`.
pub fn update_sticks(state: &mut VariationalState, hyper: &Hyperparams) -> Result<(), CaviError> {
    let h_max = state.truncation();
    let column_mass: Vec<f64> = state.kappa.column_iter().map(|c| c.sum()).collect();
    let mut tail: f64 = 0.0;
    for h in (0..h_max - 1).rev() {
        tail += column_mass[h + 1];
        state.a_v[h] = 1.0 + column_mass[h];
        state.b_v[h] = hyper.alpha + tail;
    }
    Ok(())
}

/// One full sweep of steps 1–5 followed by the ELBO.
pub fn cycle(
    state: &mut VariationalState,
    data: &Dataset,
    hyper: &Hyperparams,
) -> Result<f64, CaviError> {
    update_loadings(state, data, hyper)?;
    update_noise(state, data, hyper)?;
    update_factors(state, data, hyper)?;
    update_assignments(state, hyper)?;
    update_sticks(state, hyper)?;
    let value = elbo(state, data, hyper)?;
    if !value.is_finite() {
        return Err(CaviError::NonFiniteElbo);
    }
    Ok(value)
}
