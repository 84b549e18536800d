//! Samples covariance matrices from a fitted approximation and scores them.
//!
//! Fits simulated data, draws `Ω = ΛΛᵀ + diag(σ²)` from the variational
//! posterior, converts each draw to a correlation matrix and reports the mean
//! squared deviation from both the sample correlation and the true one.
//!
//! ```bash
//! cargo run --release --example posterior_correlation -- [draws]
//! ```

use cusp_vb::cavi::{fit, FitOptions, Hyperparams};
use cusp_vb::data_io::{sample_correlation, simulate_factor_data, SyntheticTruth};
use cusp_vb::posterior::{correlation_error, sample_omega, to_correlation};

fn main() -> anyhow::Result<()> {
    let draws: usize = std::env::args().nth(1).map_or(Ok(2000), |s| s.parse())?;
    let truth = SyntheticTruth::random_signs(6, 2, 0.8, 0.5, 3)?;
    let data = simulate_factor_data(&truth, 150, 3)?;
    let result = fit(&data, &Hyperparams::with_defaults(data.p()), &FitOptions::default())?;

    let sample = sample_omega(&result.state, draws, 11)?;
    let empirical = sample_correlation(&data)?;
    let true_corr = to_correlation(&truth.covariance())?;
    let vs_sample = correlation_error(&sample, &empirical)?;
    let vs_truth = correlation_error(&sample, &true_corr)?;

    let mean_corr = sample
        .draws
        .iter()
        .map(to_correlation)
        .try_fold(nalgebra::DMatrix::zeros(data.p(), data.p()), |acc, c| c.map(|c| acc + c))?
        / draws as f64;

    println!("E[H*] = {:.2}, {draws} draws", result.expected_active);
    println!("posterior mean correlation:{mean_corr:.3}");
    println!("sample correlation:{empirical:.3}");
    println!("MSE vs sample correlation  {:.5} (s.e. {:.1e})", vs_sample.mse, vs_sample.standard_error);
    println!("MSE vs true correlation    {:.5} (s.e. {:.1e})", vs_truth.mse, vs_truth.standard_error);
    Ok(())
}
