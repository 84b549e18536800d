//! Property checks shared by the integration tests and the acceptance binary.
//! Each returns the measured quantity so callers can both assert and report.

use super::*;
use cusp_vb::cavi::{
    cycle, elbo, init_state, update_assignments, update_factors, update_loadings, update_noise,
    update_sticks,
};
use cusp_vb::rng::{stream_rng, Stream};

/// Worst scaled gap between each library step and its naive oracle, in step order.
pub fn oracle_gaps(seed: u64, p: usize, h: usize, n: usize) -> [f64; 5] {
    let Instance { data, hyper, state } = random_instance(seed, p, h, n);
    let mut gaps = [0.0; 5];

    let (mu, covs) = oracle_loadings(&state, &data, &hyper);
    let mut s = state.clone();
    update_loadings(&mut s, &data, &hyper).unwrap();
    gaps[0] = covs
        .iter()
        .zip(&s.v_lambda)
        .map(|(o, v)| max_scaled_gap(v, o))
        .fold(max_scaled_gap(&s.mu_lambda, &mu), f64::max);

    let (a, b) = oracle_noise(&state, &data, &hyper);
    let mut s = state.clone();
    update_noise(&mut s, &data, &hyper).unwrap();
    gaps[1] = max_scaled_gap(&DMatrix::from_column_slice(p, 1, s.b_sigma.as_slice()), &DMatrix::from_column_slice(p, 1, b.as_slice()))
        .max((s.a_sigma - a).abs() / a);

    let (mu, cov) = oracle_factors(&state, &data);
    let mut s = state.clone();
    update_factors(&mut s, &data, &hyper).unwrap();
    gaps[2] = max_scaled_gap(&s.mu_eta, &mu).max(max_scaled_gap(&s.v_eta, &cov));

    let kappa = oracle_assignments(&state, &hyper);
    let mut s = state.clone();
    update_assignments(&mut s, &hyper).unwrap();
    gaps[3] = max_scaled_gap(&s.kappa, &kappa);

    let (a, b) = oracle_sticks(&state, &hyper);
    let mut s = state.clone();
    update_sticks(&mut s, &hyper).unwrap();
    let col = |v: &DVector<f64>| DMatrix::from_column_slice(v.len(), 1, v.as_slice());
    gaps[4] = max_scaled_gap(&col(&s.a_v), &col(&a)).max(max_scaled_gap(&col(&s.b_v), &col(&b)));
    gaps
}

/// Most negative ELBO increment over `cycles` full cycles from a fresh
/// initialization, relative to `|ELBO|` (0 when every increment is ≥ 0).
pub fn worst_cycle_decrease(seed: u64, cycles: usize) -> f64 {
    let (p, h, n) = random_shape(seed);
    let Instance { data, hyper, .. } = random_instance(seed, p, h, n);
    let mut s = init_state(&data, &hyper, &mut stream_rng(seed, Stream::Init, 0)).unwrap();
    let mut prev = elbo(&s, &data, &hyper).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..cycles {
        let next = cycle(&mut s, &data, &hyper).unwrap();
        worst = worst.min((next - prev) / next.abs().max(1.0));
        prev = next;
    }
    worst
}

/// Relative ELBO change caused by each step applied alone to an arbitrary state.
pub fn per_step_changes(seed: u64) -> [f64; 5] {
    let (p, h, n) = random_shape(seed);
    let Instance { data, hyper, state } = random_instance(seed, p, h, n);
    let before = elbo(&state, &data, &hyper).unwrap();
    let steps: [&dyn Fn(&mut VariationalState); 5] = [
        &|s| update_loadings(s, &data, &hyper).unwrap(),
        &|s| update_noise(s, &data, &hyper).unwrap(),
        &|s| update_factors(s, &data, &hyper).unwrap(),
        &|s| update_assignments(s, &hyper).unwrap(),
        &|s| update_sticks(s, &hyper).unwrap(),
    ];
    let mut out = [0.0; 5];
    for (k, step) in steps.iter().enumerate() {
        let mut s = state.clone();
        step(&mut s);
        let after = elbo(&s, &data, &hyper).unwrap();
        out[k] = (after - before) / before.abs().max(1.0);
    }
    out
}

/// A small state that has been through a few cycles, used where a realistic
/// (rather than arbitrary) approximation is wanted.
pub fn settled_instance(seed: u64, p: usize, h: usize, n: usize, theta_inf: f64) -> Instance {
    let Instance { data, mut hyper, .. } = random_instance(seed, p, h, n);
    hyper.theta_inf = theta_inf;
    let mut state = init_state(&data, &hyper, &mut stream_rng(seed, Stream::Init, 0)).unwrap();
    for _ in 0..5 {
        cycle(&mut state, &data, &hyper).unwrap();
    }
    Instance { data, hyper, state }
}

/// Results of the prior Monte Carlo study.
pub struct PriorReport {
    /// Worst of `|Σω − 1|`, `|π_H − 1|` and any decrease `π_h − π_{h+1}`.
    pub telescoping_error: f64,
    /// Largest `|mean(π_h) − (1 − (α/(1+α))^h)| / SE` over `h < H`.
    pub expected_pi_z: f64,
    /// Largest `(P̂_h − P̂_{h'}) / SE` over `h < h'`, for the small-ball
    /// probability `P(|λ_h| < ε)`; must stay below 3 for increasing shrinkage.
    pub small_ball_z: f64,
}

pub fn prior_report(alpha: f64, truncation: usize, eps: f64, draws: usize, seed: u64) -> PriorReport {
    use cusp_vb::cavi::Hyperparams;
    use cusp_vb::prior::{expected_pi, sample_cusp_loadings, sample_sticks};

    let mut rng = stream_rng(seed, Stream::Prior, 0);
    let mut telescoping_error: f64 = 0.0;
    let mut sum = vec![0.0; truncation];
    let mut sum_sq = vec![0.0; truncation];
    for _ in 0..draws {
        let d = sample_sticks(alpha, truncation, &mut rng).unwrap();
        telescoping_error = telescoping_error
            .max((d.omega.iter().sum::<f64>() - 1.0).abs())
            .max((d.pi[truncation - 1] - 1.0).abs());
        for h in 0..truncation {
            if h + 1 < truncation {
                telescoping_error = telescoping_error.max(d.pi[h] - d.pi[h + 1]);
            }
            sum[h] += d.pi[h];
            sum_sq[h] += d.pi[h] * d.pi[h];
        }
    }
    let m = draws as f64;
    let mut expected_pi_z: f64 = 0.0;
    for h in 0..truncation - 1 {
        let mean = sum[h] / m;
        let se = ((sum_sq[h] / m - mean * mean) / m).sqrt();
        let target = 1.0 - (alpha / (1.0 + alpha)).powi(h as i32 + 1);
        assert_eq!(expected_pi(alpha, h + 1, truncation).unwrap(), target);
        expected_pi_z = expected_pi_z.max((mean - target).abs() / se);
    }

    let hyper = Hyperparams { alpha, truncation, ..Hyperparams::with_defaults(truncation - 1) };
    let mut hits = vec![0usize; truncation];
    let mut rng = stream_rng(seed, Stream::Prior, 1);
    for _ in 0..draws {
        let lambda = sample_cusp_loadings(&hyper, 1, &mut rng).unwrap();
        for h in 0..truncation {
            if lambda[(0, h)].abs() < eps {
                hits[h] += 1;
            }
        }
    }
    let freq: Vec<f64> = hits.iter().map(|&c| c as f64 / m).collect();
    let mut small_ball_z = f64::NEG_INFINITY;
    for h in 0..truncation {
        for k in h + 1..truncation {
            let se = ((freq[h] * (1.0 - freq[h]) + freq[k] * (1.0 - freq[k])) / m).sqrt().max(1e-12);
            small_ball_z = small_ball_z.max((freq[h] - freq[k]) / se);
        }
    }
    PriorReport { telescoping_error, expected_pi_z, small_ball_z }
}

/// Largest `|mean(Ω_jj) − (μ_jᵀμ_j + tr V_j + B_j/(A − 1))| / SE` over rows,
/// and the largest deviation of a correlation diagonal from 1.
pub fn posterior_moment_check(state: &VariationalState, draws: usize, seed: u64) -> (f64, f64) {
    use cusp_vb::posterior::{sample_omega, to_correlation};
    let sample = sample_omega(state, draws, seed).unwrap();
    let p = state.p();
    let m = draws as f64;
    let mut worst_z: f64 = 0.0;
    for j in 0..p {
        let values: Vec<f64> = sample.draws.iter().map(|o| o[(j, j)]).collect();
        let mean = values.iter().sum::<f64>() / m;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        let mu = state.mu_lambda.row(j);
        let target = mu.dot(&mu) + state.v_lambda[j].trace() + state.b_sigma[j] / (state.a_sigma - 1.0);
        worst_z = worst_z.max((mean - target).abs() / (var / m).sqrt());
    }
    let mut diag_error: f64 = 0.0;
    for omega in sample.draws.iter().take(1000) {
        let corr = to_correlation(omega).unwrap();
        for j in 0..p {
            diag_error = diag_error.max((corr[(j, j)] - 1.0).abs());
        }
    }
    (worst_z, diag_error)
}

/// Runs the command-line binary, panicking with its stderr on failure.
pub fn run_cli(args: &[&str]) -> std::process::Output {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_cusp-vb"))
        .args(args)
        .output()
        .expect("binary runs");
    out
}

/// Every regular file in `dir`, sorted by name, with its bytes.
pub fn dir_contents(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

/// Runs simulate → fit → eval into `dir` and returns the produced files.
pub fn cli_pipeline(dir: &std::path::Path, seed: u64) -> Vec<(String, Vec<u8>)> {
    let d = dir.to_str().unwrap();
    let seed = seed.to_string();
    let data = format!("{d}/data.csv");
    let truth = format!("{d}/truth.json");
    for args in [
        vec!["simulate", "--output-dir", d, "--p", "6", "--n", "120", "--factors", "2", "--seed", &seed],
        vec!["fit", "--input", &data, "--output-dir", d, "--restarts", "4", "--seed", &seed],
        vec!["eval", "--input", &data, "--output-dir", d, "--truth", &truth, "--draws", "300", "--seed", &seed],
    ] {
        let out = run_cli(&args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    dir_contents(dir)
}
