//! Draws from the cumulative shrinkage prior.
//!
//! Prints one stick-breaking realization, compares the Monte Carlo mean of the
//! spike probabilities with `1 − (α/(1+α))^h`, and shows how the chance of a
//! loading landing near zero grows with the column index.
//!
//! ```bash
//! cargo run --release --example stick_breaking -- [alpha] [truncation]
//! ```

use cusp_vb::cavi::Hyperparams;
use cusp_vb::prior::{expected_pi, sample_cusp_loadings, sample_sticks};
use cusp_vb::rng::{stream_rng, Stream};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let alpha: f64 = args.next().map_or(Ok(5.0), |s| s.parse())?;
    let truncation: usize = args.next().map_or(Ok(10), |s| s.parse())?;
    let draws = 100_000;

    let mut rng = stream_rng(0, Stream::Prior, 0);
    let one = sample_sticks(alpha, truncation, &mut rng)?;
    println!("one draw with alpha = {alpha}, H = {truncation}");
    println!("  h      v_h    omega_h     pi_h");
    for h in 0..truncation {
        println!("{:3} {:8.4} {:10.4} {:8.4}", h + 1, one.v[h], one.omega[h], one.pi[h]);
    }

    let mut mean_pi = vec![0.0; truncation];
    for _ in 0..draws {
        let d = sample_sticks(alpha, truncation, &mut rng)?;
        for (m, p) in mean_pi.iter_mut().zip(&d.pi) {
            *m += p / draws as f64;
        }
    }

    let hyper = Hyperparams { alpha, truncation, ..Hyperparams::with_defaults(truncation - 1) };
    let eps = 0.1;
    let mut near_zero = vec![0usize; truncation];
    let mut rng = stream_rng(0, Stream::Prior, 1);
    for _ in 0..draws {
        let lambda = sample_cusp_loadings(&hyper, 1, &mut rng)?;
        for (count, x) in near_zero.iter_mut().zip(lambda.iter()) {
            if x.abs() < eps {
                *count += 1;
            }
        }
    }

    println!();
    println!("{draws} draws: spike probability and Pr(|lambda_h| < {eps})");
    println!("  h  mean pi_h  expected   Pr(near 0)");
    for h in 0..truncation {
        println!(
            "{:3} {:10.4} {:9.4} {:12.4}",
            h + 1,
            mean_pi[h],
            expected_pi(alpha, h + 1, truncation)?,
            near_zero[h] as f64 / draws as f64
        );
    }
    Ok(())
}
