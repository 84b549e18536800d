//! Follows one CAVI chain cycle by cycle.
//!
//! Starts from a single random initialization and prints the ELBO, its
//! increment and the expected number of active factors after every cycle; the
//! increments are never negative.
//!
//! ```bash
//! cargo run --release --example elbo_trace -- [seed]
//! ```

use cusp_vb::cavi::{cycle, elbo, expected_active, init_state, Hyperparams};
use cusp_vb::data_io::{simulate_factor_data, SyntheticTruth};
use cusp_vb::rng::{stream_rng, Stream};

fn main() -> anyhow::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(Ok(0), |s| s.parse())?;
    let truth = SyntheticTruth::random_signs(8, 2, 1.0, 0.3, seed)?;
    let data = simulate_factor_data(&truth, 200, seed)?;
    let hyper = Hyperparams::with_defaults(data.p());

    let mut state = init_state(&data, &hyper, &mut stream_rng(seed, Stream::Init, 0))?;
    let mut previous = elbo(&state, &data, &hyper)?;
    println!("cycle          ELBO     increment  E[H*]");
    println!("{:5} {:13.4} {:>13} {:6.2}", 0, previous, "", expected_active(&state.kappa)?);
    for c in 1..=200 {
        let value = cycle(&mut state, &data, &hyper)?;
        let increment = value - previous;
        println!("{c:5} {value:13.4} {increment:13.6} {:6.2}", expected_active(&state.kappa)?);
        if c > 1 && increment < 1e-6 {
            break;
        }
        previous = value;
    }
    Ok(())
}
