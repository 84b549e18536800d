//! End-to-end run on the 25-item personality questionnaire.
//!
//! Expects a CSV of the 25 raw item scores (header row, one respondent per
//! row, no missing values), e.g. the respondents older than fifty from the
//! `bfi` data of the R `psych` package:
//!
//! ```bash
//! cargo run --release --example bfi_pipeline -- bfi_over50.csv
//! ```

use std::time::Instant;

use cusp_vb::cavi::{fit, FitOptions, Hyperparams};
use cusp_vb::data_io::{load_csv, preprocess_bfi, sample_correlation};
use cusp_vb::posterior::{correlation_error, sample_omega};

fn main() -> anyhow::Result<()> {
    let path = std::env::args()
        .nth(1)
        .ok_or_else(|| anyhow::anyhow!("usage: bfi_pipeline <items.csv> [seed]"))?;
    let seed: u64 = std::env::args().nth(2).map_or(Ok(0), |s| s.parse())?;

    let data = preprocess_bfi(load_csv(&path, true)?)?;
    println!("n = {}, p = {}", data.n(), data.p());

    let hyper = Hyperparams::with_defaults(data.p());
    let options = FitOptions { seed, ..FitOptions::default() };
    let start = Instant::now();
    let result = fit(&data, &hyper, &options)?;
    let elapsed = start.elapsed();

    for run in &result.runs {
        println!(
            "restart {:2}: {:4} cycles, final ELBO {:.3}",
            run.restart_index,
            run.elbo_trace.len(),
            run.final_elbo().unwrap_or(f64::NAN)
        );
    }

    let draws = sample_omega(&result.state, 2000, seed)?;
    let err = correlation_error(&draws, &sample_correlation(&data)?)?;
    println!();
    println!("best restart   {}", result.restart_index);
    println!("MSE            {:.4} (MC s.e. {:.1e})", err.mse, err.standard_error);
    println!("E[H*]          {:.2}", result.expected_active);
    println!("fit time       {:.1} s", elapsed.as_secs_f64());
    Ok(())
}
