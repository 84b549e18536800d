//! Shared helpers for the integration tests: seeded random instances and
//! deliberately naive reference implementations written with plain loops.
#![allow(dead_code, clippy::needless_range_loop)]

use cusp_vb::cavi::{Hyperparams, VariationalState};
use cusp_vb::data_io::Dataset;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::gamma::{digamma, ln_gamma};
use std::f64::consts::PI;

pub struct Instance {
    pub data: Dataset,
    pub hyper: Hyperparams,
    pub state: VariationalState,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// A well-conditioned random SPD matrix `B Bᵀ / h + c I`.
pub fn random_spd(rng: &mut ChaCha8Rng, h: usize, scale: f64) -> DMatrix<f64> {
    let b = DMatrix::from_fn(h, h, |_, _| normal(rng));
    let m = (&b * b.transpose()) / h as f64 + DMatrix::identity(h, h) * 0.3;
    m * scale
}

fn random_simplex(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| (1.5 * normal(rng)).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// A random dataset, hyperparameters and an arbitrary (not yet optimized)
/// variational state of the given shape.
pub fn random_instance(seed: u64, p: usize, h: usize, n: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambda = DMatrix::from_fn(p, 2, |_, _| normal(&mut rng));
    let eta = DMatrix::from_fn(n, 2, |_, _| normal(&mut rng));
    let noise = DMatrix::from_fn(n, p, |_, _| 0.5 * normal(&mut rng));
    let data = Dataset::new(eta * lambda.transpose() + noise).unwrap();

    let theta_inf = [1e-6, 1e-3, 0.05][rng.random_range(0..3)];
    let hyper = Hyperparams {
        p,
        truncation: h,
        a_sigma: rng.random_range(0.5..3.0),
        b_sigma: rng.random_range(0.1..2.0),
        alpha: rng.random_range(0.5..8.0),
        theta0: rng.random_range(0.5..3.0),
        theta_inf,
    };

    let mut kappa = DMatrix::zeros(h, h);
    for row in 0..h {
        for (l, w) in random_simplex(&mut rng, h).into_iter().enumerate() {
            kappa[(row, l)] = w;
        }
    }
    let state = VariationalState {
        mu_lambda: DMatrix::from_fn(p, h, |_, _| normal(&mut rng)),
        v_lambda: (0..p).map(|_| random_spd(&mut rng, h, 0.5)).collect(),
        mu_eta: DMatrix::from_fn(n, h, |_, _| normal(&mut rng)),
        v_eta: random_spd(&mut rng, h, 0.5),
        a_sigma: hyper.a_sigma + n as f64 / 2.0,
        b_sigma: DVector::from_fn(p, |_, _| rng.random_range(0.3..4.0)),
        kappa,
        a_v: DVector::from_fn(h - 1, |_, _| rng.random_range(0.5..5.0)),
        b_v: DVector::from_fn(h - 1, |_, _| rng.random_range(0.5..9.0)),
    };
    Instance { data, hyper, state }
}

/// Shapes drawn from the ranges `p ∈ {2..6}`, `H ∈ {2..4}`, `n ∈ {5..50}`.
pub fn random_shape(seed: u64) -> (usize, usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    (rng.random_range(2..=6), rng.random_range(2..=4), rng.random_range(5..=50))
}

/// Gauss–Jordan inverse with partial pivoting.
pub fn naive_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let k = m.nrows();
    let mut a: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let mut row: Vec<f64> = (0..k).map(|j| m[(i, j)]).collect();
            row.extend((0..k).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        let d = a[col][col];
        for v in a[col].iter_mut() {
            *v /= d;
        }
        for r in 0..k {
            if r != col {
                let f = a[r][col];
                for c in 0..2 * k {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    DMatrix::from_fn(k, k, |i, j| a[i][k + j])
}

/// Lower Cholesky factor by the textbook recurrence.
pub fn naive_cholesky(m: &DMatrix<f64>) -> DMatrix<f64> {
    let k = m.nrows();
    let mut l = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            let mut s = m[(i, j)];
            for q in 0..j {
                s -= l[(i, q)] * l[(j, q)];
            }
            l[(i, j)] = if i == j { s.sqrt() } else { s / l[(j, j)] };
        }
    }
    l
}

/// `|a − b| ≤ tol · max(1, |b|)` entrywise; returns the worst scaled gap.
pub fn max_scaled_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

fn slab_weight(kappa: &DMatrix<f64>, h: usize) -> (f64, f64) {
    let mut spike = 0.0;
    for l in 0..=h {
        spike += kappa[(h, l)];
    }
    (spike, 1.0 - spike)
}

/// Loadings step written directly from its formula.
pub fn oracle_loadings(s: &VariationalState, data: &Dataset, hp: &Hyperparams) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let (n, p, h) = (data.n(), data.p(), s.kappa.nrows());
    let mut mu = DMatrix::zeros(p, h);
    let mut covs = Vec::new();
    for j in 0..p {
        let r = s.a_sigma / s.b_sigma[j];
        let mut prec = DMatrix::zeros(h, h);
        for a in 0..h {
            for b in 0..h {
                let mut g = 0.0;
                for i in 0..n {
                    g += s.mu_eta[(i, a)] * s.mu_eta[(i, b)] + s.v_eta[(a, b)];
                }
                prec[(a, b)] = r * g;
            }
            let (spike, slab) = slab_weight(&s.kappa, a);
            prec[(a, a)] += slab / hp.theta0 + spike / hp.theta_inf;
        }
        let cov = naive_inverse(&prec);
        for a in 0..h {
            let mut acc = 0.0;
            for b in 0..h {
                let mut ey = 0.0;
                for i in 0..n {
                    ey += s.mu_eta[(i, b)] * data.y[(i, j)];
                }
                acc += cov[(a, b)] * ey;
            }
            mu[(j, a)] = r * acc;
        }
        covs.push(cov);
    }
    (mu, covs)
}

/// Noise step, with the expected squared residual expanded cell by cell.
pub fn oracle_noise(s: &VariationalState, data: &Dataset, hp: &Hyperparams) -> (f64, DVector<f64>) {
    let (n, p, h) = (data.n(), data.p(), s.kappa.nrows());
    let mut b = DVector::zeros(p);
    for j in 0..p {
        let mut total = 0.0;
        for i in 0..n {
            let mut mean = 0.0;
            for a in 0..h {
                mean += s.mu_lambda[(j, a)] * s.mu_eta[(i, a)];
            }
            let mut var = 0.0;
            for a in 0..h {
                for c in 0..h {
                    let el = s.mu_lambda[(j, a)] * s.mu_lambda[(j, c)] + s.v_lambda[j][(a, c)];
                    let ee = s.mu_eta[(i, a)] * s.mu_eta[(i, c)] + s.v_eta[(a, c)];
                    var += el * ee;
                }
            }
            // E[(y − λᵀη)²] = y² − 2y E[λᵀη] + E[(λᵀη)²]
            total += data.y[(i, j)].powi(2) - 2.0 * data.y[(i, j)] * mean + var;
        }
        b[j] = hp.b_sigma + 0.5 * total;
    }
    (hp.a_sigma + n as f64 / 2.0, b)
}

/// Factors step.
pub fn oracle_factors(s: &VariationalState, data: &Dataset) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, p, h) = (data.n(), data.p(), s.kappa.nrows());
    let mut prec = DMatrix::identity(h, h);
    for j in 0..p {
        let r = s.a_sigma / s.b_sigma[j];
        for a in 0..h {
            for c in 0..h {
                prec[(a, c)] += r * (s.mu_lambda[(j, a)] * s.mu_lambda[(j, c)] + s.v_lambda[j][(a, c)]);
            }
        }
    }
    let cov = naive_inverse(&prec);
    let mut mu = DMatrix::zeros(n, h);
    for i in 0..n {
        for a in 0..h {
            let mut acc = 0.0;
            for c in 0..h {
                let mut t = 0.0;
                for j in 0..p {
                    t += s.a_sigma / s.b_sigma[j] * s.mu_lambda[(j, c)] * data.y[(i, j)];
                }
                acc += cov[(a, c)] * t;
            }
            mu[(i, a)] = acc;
        }
    }
    (mu, cov)
}

/// `E[log ω_l]` from the Beta parameters, using an independent digamma.
pub fn oracle_log_weights(s: &VariationalState) -> Vec<f64> {
    let h = s.kappa.nrows();
    (0..h)
        .map(|l| {
            let mut v = 0.0;
            for m in 0..l {
                v += digamma(s.b_v[m]) - digamma(s.a_v[m] + s.b_v[m]);
            }
            if l + 1 < h {
                v += digamma(s.a_v[l]) - digamma(s.a_v[l] + s.b_v[l]);
            }
            v
        })
        .collect()
}

/// Assignments step.
pub fn oracle_assignments(s: &VariationalState, hp: &Hyperparams) -> DMatrix<f64> {
    let (p, h) = (s.mu_lambda.nrows(), s.kappa.nrows());
    let log_w = oracle_log_weights(s);
    let mut kappa = DMatrix::zeros(h, h);
    for row in 0..h {
        let mut sq = 0.0;
        for j in 0..p {
            sq += s.mu_lambda[(j, row)].powi(2) + s.v_lambda[j][(row, row)];
        }
        // The Gaussian terms are shared within the spike and slab groups and can
        // be huge, so they are shifted by their maximum before the weights are added.
        let group = |theta: f64| -0.5 * p as f64 * theta.ln() - 0.5 * sq / theta;
        let (spike, slab) = (group(hp.theta_inf), group(hp.theta0));
        let shift = if row + 1 < h && slab > spike { slab } else { spike };
        let logits: Vec<f64> = (0..h)
            .map(|l| log_w[l] + if l <= row { spike - shift } else { slab - shift })
            .collect();
        let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|x| (x - top).exp()).sum();
        for l in 0..h {
            kappa[(row, l)] = (logits[l] - top).exp() / z;
        }
    }
    kappa
}

/// Sticks step.
pub fn oracle_sticks(s: &VariationalState, hp: &Hyperparams) -> (DVector<f64>, DVector<f64>) {
    let h = s.kappa.nrows();
    let mut a = DVector::zeros(h - 1);
    let mut b = DVector::zeros(h - 1);
    for l in 0..h - 1 {
        let mut own = 0.0;
        let mut later = 0.0;
        for row in 0..h {
            own += s.kappa[(row, l)];
            for m in l + 1..h {
                later += s.kappa[(row, m)];
            }
        }
        a[l] = 1.0 + own;
        b[l] = hp.alpha + later;
    }
    (a, b)
}

// ---- independent log densities for Monte Carlo checks ----

pub fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * PI * var).ln() - 0.5 * (x - mean).powi(2) / var
}

pub fn log_mvn(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let k = x.len() as f64;
    let l = naive_cholesky(cov);
    let log_det: f64 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let diff = x - mean;
    let quad = (naive_inverse(cov) * &diff).dot(&diff);
    -0.5 * (k * (2.0 * PI).ln() + log_det + quad)
}

pub fn log_inv_gamma(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - rate / x
}

pub fn log_beta(x: f64, a: f64, b: f64) -> f64 {
    ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln()
}

/// Draws a Gamma(shape, 1) variate by Marsaglia–Tsang.
pub fn gamma_draw(rng: &mut ChaCha8Rng, shape: f64) -> f64 {
    if shape < 1.0 {
        let u: f64 = rng.random();
        return gamma_draw(rng, shape + 1.0) * u.powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = normal(rng);
        let v = (1.0 + c * x).powi(3);
        if v <= 0.0 {
            continue;
        }
        let u: f64 = rng.random();
        if u.ln() < 0.5 * x * x + d - d * v + d * v.ln() {
            return d * v;
        }
    }
}

fn mvn_draw(rng: &mut ChaCha8Rng, mean: &DVector<f64>, chol: &DMatrix<f64>) -> DVector<f64> {
    let z = DVector::from_fn(mean.len(), |_, _| normal(rng));
    mean + chol * z
}

/// Monte Carlo estimate of `E_q[log p(y, θ) − log q(θ)]` and its standard error.
pub fn monte_carlo_elbo(
    s: &VariationalState,
    data: &Dataset,
    hp: &Hyperparams,
    draws: usize,
    seed: u64,
) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, p, h) = (data.n(), data.p(), s.kappa.nrows());
    let chol_lambda: Vec<DMatrix<f64>> = s.v_lambda.iter().map(naive_cholesky).collect();
    let chol_eta = naive_cholesky(&s.v_eta);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..draws {
        let mut log_ratio = 0.0;
        let lambda: Vec<DVector<f64>> = (0..p)
            .map(|j| {
                let mean = s.mu_lambda.row(j).transpose();
                let x = mvn_draw(&mut rng, &mean, &chol_lambda[j]);
                log_ratio -= log_mvn(&x, &mean, &s.v_lambda[j]);
                x
            })
            .collect();
        let eta: Vec<DVector<f64>> = (0..n)
            .map(|i| {
                let mean = s.mu_eta.row(i).transpose();
                let x = mvn_draw(&mut rng, &mean, &chol_eta);
                log_ratio -= log_mvn(&x, &mean, &s.v_eta);
                log_ratio += log_mvn(&x, &DVector::zeros(h), &DMatrix::identity(h, h));
                x
            })
            .collect();
        let sigma2: Vec<f64> = (0..p)
            .map(|j| {
                let x = s.b_sigma[j] / gamma_draw(&mut rng, s.a_sigma);
                log_ratio -= log_inv_gamma(x, s.a_sigma, s.b_sigma[j]);
                log_ratio += log_inv_gamma(x, hp.a_sigma, hp.b_sigma);
                x
            })
            .collect();
        let mut v = vec![1.0; h];
        for l in 0..h - 1 {
            let x = gamma_draw(&mut rng, s.a_v[l]);
            let y = gamma_draw(&mut rng, s.b_v[l]);
            v[l] = x / (x + y);
            log_ratio -= log_beta(v[l], s.a_v[l], s.b_v[l]);
            log_ratio += log_beta(v[l], 1.0, hp.alpha);
        }
        let mut omega = vec![0.0; h];
        let mut rest = 1.0;
        for l in 0..h {
            omega[l] = v[l] * rest;
            rest *= 1.0 - v[l];
        }
        for col in 0..h {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut z = h - 1;
            for l in 0..h {
                acc += s.kappa[(col, l)];
                if u < acc {
                    z = l;
                    break;
                }
            }
            log_ratio -= s.kappa[(col, z)].ln();
            log_ratio += omega[z].ln();
            let theta = if z <= col { hp.theta_inf } else { hp.theta0 };
            for lj in &lambda {
                log_ratio += log_normal(lj[col], 0.0, theta);
            }
        }
        for i in 0..n {
            for j in 0..p {
                log_ratio += log_normal(data.y[(i, j)], lambda[j].dot(&eta[i]), sigma2[j]);
            }
        }
        sum += log_ratio;
        sum_sq += log_ratio * log_ratio;
    }
    let m = draws as f64;
    let mean = sum / m;
    let var = (sum_sq / m - mean * mean) * m / (m - 1.0);
    (mean, (var / m).sqrt())
}
pub mod checks;
