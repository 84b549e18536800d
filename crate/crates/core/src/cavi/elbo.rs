//! Closed-form evidence lower bound.
//!
//! [`elbo`] groups the bound as expected log joint plus the entropies of the
//! five factors. [`elbo_kl_form`] reaches the same number as expected
//! log-likelihood minus per-factor KL divergences, using different algebra for
//! every term, and serves as a cross-check.

use std::f64::consts::PI;

use super::updates::{expected_squared_residual, factor_gram};
use super::{CaviError, Hyperparams, VariationalState};
use crate::data_io::Dataset;
use crate::numerics::{digamma_positive as psi, ln_gamma, spd_log_det};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Each expectation under `q` that makes up the ELBO.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ElboTerms {
    pub log_likelihood: f64,
    pub log_prior_loadings: f64,
    pub log_prior_factors: f64,
    pub log_prior_noise: f64,
    pub log_prior_assignments: f64,
    pub log_prior_sticks: f64,
    pub entropy_loadings: f64,
    pub entropy_factors: f64,
    pub entropy_noise: f64,
    pub entropy_assignments: f64,
    pub entropy_sticks: f64,
}

impl ElboTerms {
    pub fn expected_log_joint(&self) -> f64 {
        self.log_likelihood
            + self.log_prior_loadings
            + self.log_prior_factors
            + self.log_prior_noise
            + self.log_prior_assignments
            + self.log_prior_sticks
    }

    pub fn entropy(&self) -> f64 {
        self.entropy_loadings
            + self.entropy_factors
            + self.entropy_noise
            + self.entropy_assignments
            + self.entropy_sticks
    }

    pub fn total(&self) -> f64 {
        self.expected_log_joint() + self.entropy()
    }
}

fn log_det(m: &nalgebra::DMatrix<f64>, what: &'static str) -> Result<f64, CaviError> {
    spd_log_det(m).map_err(|source| CaviError::Numerical { step: what, source })
}

fn check_shapes(state: &VariationalState, data: &Dataset) -> Result<(), CaviError> {
    if data.p() != state.p() || data.n() != state.n() {
        return Err(CaviError::Shape(format!(
            "state is for n = {}, p = {} but data is {}x{}",
            state.n(),
            state.p(),
            data.n(),
            data.p()
        )));
    }
    Ok(())
}

impl ElboTerms {
    pub fn compute(
        state: &VariationalState,
        data: &Dataset,
        hyper: &Hyperparams,
    ) -> Result<Self, CaviError> {
        check_shapes(state, data)?;
        let (n, p, h_max) = (state.n() as f64, state.p(), state.truncation());
        let h_f = h_max as f64;
        let a = state.a_sigma;
        let psi_a = psi(a);

        let gram = factor_gram(state);
        let eta_t_y = state.mu_eta.tr_mul(&data.y);
        let mut log_likelihood = 0.0;
        let mut log_prior_noise = 0.0;
        let mut entropy_noise = 0.0;
        let mut entropy_loadings = 0.0;
        let lgamma_prior = ln_gamma(hyper.a_sigma);
        let lgamma_a = ln_gamma(a);
        for j in 0..p {
            let b = state.b_sigma[j];
            let e_prec = a / b;
            let e_log_prec = psi_a - b.ln();
            let resid = expected_squared_residual(state, data, &gram, &eta_t_y, j);
            log_likelihood += -0.5 * n * LN_2PI + 0.5 * n * e_log_prec - 0.5 * e_prec * resid;
            log_prior_noise += hyper.a_sigma * hyper.b_sigma.ln() - lgamma_prior
                + (hyper.a_sigma + 1.0) * e_log_prec
                - hyper.b_sigma * e_prec;
            entropy_noise += a + b.ln() + lgamma_a - (1.0 + a) * psi_a;
            entropy_loadings +=
                0.5 * h_f * (1.0 + LN_2PI) + 0.5 * log_det(&state.v_lambda[j], "loadings entropy")?;
        }

        let log_prior_factors =
            -0.5 * n * h_f * LN_2PI - 0.5 * (state.mu_eta.norm_squared() + n * state.v_eta.trace());
        let entropy_factors =
            n * (0.5 * h_f * (1.0 + LN_2PI) + 0.5 * log_det(&state.v_eta, "factor entropy")?);

        let second = state.column_second_moments();
        let log_omega = state.expected_log_weights();
        let p_f = p as f64;
        let mut log_prior_loadings = 0.0;
        let mut log_prior_assignments = 0.0;
        let mut entropy_assignments = 0.0;
        for h in 0..h_max {
            let spike = state.spike_mass(h);
            let slab = state.slab_mass(h);
            log_prior_loadings += spike
                * (-0.5 * p_f * (2.0 * PI * hyper.theta_inf).ln() - 0.5 * second[h] / hyper.theta_inf)
                + slab
                    * (-0.5 * p_f * (2.0 * PI * hyper.theta0).ln() - 0.5 * second[h] / hyper.theta0);
            for l in 0..h_max {
                let k = state.kappa[(h, l)];
                log_prior_assignments += k * log_omega[l];
                if k > 0.0 {
                    entropy_assignments -= k * k.ln();
                }
            }
        }

        let mut log_prior_sticks = 0.0;
        let mut entropy_sticks = 0.0;
        for (h, (_, e_log_1mv)) in state.stick_log_moments().into_iter().enumerate() {
            let (av, bv) = (state.a_v[h], state.b_v[h]);
            log_prior_sticks += hyper.alpha.ln() + (hyper.alpha - 1.0) * e_log_1mv;
            let ln_beta = ln_gamma(av) + ln_gamma(bv) - ln_gamma(av + bv);
            entropy_sticks += ln_beta - (av - 1.0) * psi(av) - (bv - 1.0) * psi(bv)
                + (av + bv - 2.0) * psi(av + bv);
        }

        Ok(ElboTerms {
            log_likelihood,
            log_prior_loadings,
            log_prior_factors,
            log_prior_noise,
            log_prior_assignments,
            log_prior_sticks,
            entropy_loadings,
            entropy_factors,
            entropy_noise,
            entropy_assignments,
            entropy_sticks,
        })
    }
}

/// `E_q[log p(y, λ, η, σ², z, v)] − E_q[log q(λ, η, σ², z, v)]`, constants included.
pub fn elbo(
    state: &VariationalState,
    data: &Dataset,
    hyper: &Hyperparams,
) -> Result<f64, CaviError> {
    Ok(ElboTerms::compute(state, data, hyper)?.total())
}

/// The ELBO as expected log-likelihood minus KL divergences from each prior factor.
///
/// The likelihood is summed cell by cell and every KL uses its textbook closed
/// form, so this shares no intermediate quantities with [`elbo`] beyond the
/// digamma-based stick moments.
pub fn elbo_kl_form(
    state: &VariationalState,
    data: &Dataset,
    hyper: &Hyperparams,
) -> Result<f64, CaviError> {
    check_shapes(state, data)?;
    let (n, p, h_max) = (state.n(), state.p(), state.truncation());
    let h_f = h_max as f64;
    let a = state.a_sigma;

    // E[(y − λᵀη)²] = (y − μ_λᵀμ_η)² + μ_ηᵀV_λμ_η + μ_λᵀV_ημ_λ + tr(V_η V_λ).
    let mut log_likelihood = 0.0;
    for j in 0..p {
        let b = state.b_sigma[j];
        let mu_l = state.mu_lambda.row(j);
        let v_l = &state.v_lambda[j];
        let cross_trace = (&state.v_eta * v_l).trace();
        let mu_l_quad = (mu_l * &state.v_eta * mu_l.transpose())[(0, 0)];
        for i in 0..n {
            let mu_e = state.mu_eta.row(i);
            let fitted = mu_l.dot(&mu_e);
            let mu_e_quad = (mu_e * v_l * mu_e.transpose())[(0, 0)];
            let sq = (data.y[(i, j)] - fitted).powi(2) + mu_e_quad + mu_l_quad + cross_trace;
            log_likelihood += 0.5 * (psi(a) - b.ln()) - 0.5 * (2.0 * PI).ln() - 0.5 * (a / b) * sq;
        }
    }

    // KL(N(μ, V) || N(0, I)) per factor-score row.
    let ld_eta = log_det(&state.v_eta, "factor KL")?;
    let kl_factors: f64 = (0..n)
        .map(|i| {
            0.5 * (state.v_eta.trace() + state.mu_eta.row(i).norm_squared() - h_f - ld_eta)
        })
        .sum();

    // KL(Ga(A, B) || Ga(a, b)) on the precisions.
    let (a0, b0) = (hyper.a_sigma, hyper.b_sigma);
    let kl_noise: f64 = state
        .b_sigma
        .iter()
        .map(|&b| {
            (a - a0) * psi(a) - ln_gamma(a) + ln_gamma(a0) + a0 * (b.ln() - b0.ln())
                + a * (b0 - b) / b
        })
        .sum();

    // E_z KL(N(μ_j, V_j) || N(0, diag(θ_z))), linear in 1/θ and log θ.
    let mut inv_var = vec![0.0; h_max];
    let mut log_var = vec![0.0; h_max];
    for h in 0..h_max {
        for l in 0..h_max {
            let theta = if l <= h { hyper.theta_inf } else { hyper.theta0 };
            inv_var[h] += state.kappa[(h, l)] / theta;
            log_var[h] += state.kappa[(h, l)] * theta.ln();
        }
    }
    let mut kl_loadings = 0.0;
    for j in 0..p {
        let v = &state.v_lambda[j];
        let mut acc = -h_f - log_det(v, "loadings KL")?;
        for h in 0..h_max {
            acc += inv_var[h] * (state.mu_lambda[(j, h)].powi(2) + v[(h, h)]) + log_var[h];
        }
        kl_loadings += 0.5 * acc;
    }

    // E_v KL(Cat(κ_h) || Cat(ω)).
    let log_omega = state.expected_log_weights();
    let mut kl_assignments = 0.0;
    for h in 0..h_max {
        for l in 0..h_max {
            let k = state.kappa[(h, l)];
            if k > 0.0 {
                kl_assignments += k * (k.ln() - log_omega[l]);
            }
        }
    }

    // KL(Beta(A, B) || Beta(1, α)).
    let alpha = hyper.alpha;
    let kl_sticks: f64 = state
        .a_v
        .iter()
        .zip(state.b_v.iter())
        .map(|(&av, &bv)| {
            let ln_beta_q = ln_gamma(av) + ln_gamma(bv) - ln_gamma(av + bv);
            let ln_beta_p = -alpha.ln();
            ln_beta_p - ln_beta_q
                + (av - 1.0) * psi(av)
                + (bv - alpha) * psi(bv)
                + (1.0 + alpha - av - bv) * psi(av + bv)
        })
        .sum();

    Ok(log_likelihood - kl_factors - kl_noise - kl_loadings - kl_assignments - kl_sticks)
}
