//! Batch front end: `simulate`, `fit` and `eval`.
//!
//! Settings resolve as command-line flag, then `--config` TOML file, then the
//! built-in default. Every output carries the seed it was produced with.
//!
//! | command    | writes                                                        |
//! |------------|---------------------------------------------------------------|
//! | `simulate` | `data.csv`, `truth.json`                                      |
//! | `fit`      | `fit.json`, `elbo_trace.csv` (restart,cycle,elbo), `summary.txt` |
//! | `eval`     | `metrics.txt`, `deviations.csv`                               |

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cavi::{expected_active, fit, FitOptions, FitResult, Hyperparams, VariationalState};
use crate::data_io::{
    load_csv, preprocess_bfi, sample_correlation, simulate_factor_data, Dataset, SyntheticTruth,
};
use crate::posterior::{correlation_error, sample_omega, to_correlation};

#[derive(Debug, Parser)]
#[command(name = "cusp-vb", version, about = "Variational inference for shrinkage factor models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset from a factor model with known loadings.
    Simulate(Settings),
    /// Fit the variational approximation from several random starts.
    Fit(Settings),
    /// Sample covariances from a fit and score their correlation matrix.
    Eval(Settings),
}

fn flag_bool(s: &str) -> Result<bool, String> {
    s.parse().map_err(|_| format!("expected true or false, got {s:?}"))
}

/// Settings shared by every subcommand. Unset values fall back to the
/// `--config` file, then to [`RunConfig::default`].
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Settings {
    /// TOML file with any of these settings (kebab-case keys).
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Dataset CSV (fit, eval).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Whether the dataset CSV starts with a header row.
    #[arg(long, value_parser = flag_bool)]
    pub header: Option<bool>,
    /// Flip the reverse-keyed items 1, 9, 10, 11, 12, 22, 25 (1-indexed) and center.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_parser = flag_bool)]
    pub bfi_preprocess: Option<bool>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub theta0: Option<f64>,
    #[arg(long = "theta-inf")]
    pub theta_inf: Option<f64>,
    #[arg(long)]
    pub a_sigma: Option<f64>,
    #[arg(long)]
    pub b_sigma: Option<f64>,
    /// Number of factor columns H (default p + 1).
    #[arg(long)]
    pub truncation: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_cycles: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of covariance draws (eval).
    #[arg(long)]
    pub draws: Option<usize>,
    /// Fitted parameters to evaluate (default `<output-dir>/fit.json`).
    #[arg(long)]
    pub fit: Option<PathBuf>,
    /// Truth manifest from `simulate`, compared against during eval.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Observed dimension (simulate).
    #[arg(long)]
    pub p: Option<usize>,
    /// Number of active factors (simulate).
    #[arg(long)]
    pub factors: Option<usize>,
    /// Number of rows (simulate).
    #[arg(long)]
    pub n: Option<usize>,
    /// Magnitude of every true loading (simulate).
    #[arg(long)]
    pub loading_scale: Option<f64>,
    /// Noise variance (simulate).
    #[arg(long)]
    pub noise: Option<f64>,
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub header: bool,
    pub bfi_preprocess: bool,
    pub alpha: f64,
    pub theta0: f64,
    pub theta_inf: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub truncation: Option<usize>,
    pub restarts: usize,
    pub tol: f64,
    pub max_cycles: usize,
    pub seed: u64,
    pub draws: usize,
    pub fit: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub p: usize,
    pub factors: usize,
    pub n: usize,
    pub loading_scale: f64,
    pub noise: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let fit = FitOptions::default();
        RunConfig {
            input: None,
            output_dir: PathBuf::from("."),
            header: true,
            bfi_preprocess: false,
            alpha: Hyperparams::DEFAULT_ALPHA,
            theta0: Hyperparams::DEFAULT_THETA0,
            theta_inf: Hyperparams::DEFAULT_THETA_INF,
            a_sigma: Hyperparams::DEFAULT_A_SIGMA,
            b_sigma: Hyperparams::DEFAULT_B_SIGMA,
            truncation: None,
            restarts: fit.restarts,
            tol: fit.tol,
            max_cycles: fit.max_cycles,
            seed: fit.seed,
            draws: 2000,
            fit: None,
            truth: None,
            p: 10,
            factors: 3,
            n: 500,
            loading_scale: 1.0,
            noise: 0.2,
        }
    }
}

impl RunConfig {
    /// Applies `flags` over `file` over the defaults.
    pub fn resolve(flags: &Settings, file: Option<&Settings>) -> Self {
        let mut cfg = RunConfig::default();
        for layer in file.into_iter().chain(std::iter::once(flags)) {
            cfg.apply(layer);
        }
        cfg
    }

    fn apply(&mut self, s: &Settings) {
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = &s.$field { self.$field = v.clone(); } )* };
        }
        set!(
            output_dir, header, bfi_preprocess, alpha, theta0, theta_inf, a_sigma, b_sigma,
            restarts, tol, max_cycles, seed, draws, p, factors, n, loading_scale, noise
        );
        if s.input.is_some() {
            self.input = s.input.clone();
        }
        if s.truncation.is_some() {
            self.truncation = s.truncation;
        }
        if s.fit.is_some() {
            self.fit = s.fit.clone();
        }
        if s.truth.is_some() {
            self.truth = s.truth.clone();
        }
    }

    pub fn load(flags: &Settings) -> Result<Self> {
        let file = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                Some(toml::from_str::<Settings>(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?)
            }
            None => None,
        };
        Ok(Self::resolve(flags, file.as_ref()))
    }

    pub fn hyperparams(&self, p: usize) -> Hyperparams {
        Hyperparams {
            p,
            truncation: self.truncation.unwrap_or(p + 1),
            a_sigma: self.a_sigma,
            b_sigma: self.b_sigma,
            alpha: self.alpha,
            theta0: self.theta0,
            theta_inf: self.theta_inf,
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            restarts: self.restarts,
            tol: self.tol,
            max_cycles: self.max_cycles,
            seed: self.seed,
        }
    }

    fn input(&self) -> Result<&Path> {
        self.input.as_deref().context("--input is required")
    }

    /// Loads the input dataset, applying the questionnaire pipeline when requested.
    pub fn dataset(&self) -> Result<Dataset> {
        let path = self.input()?;
        let data = load_csv(path, self.header)
            .with_context(|| format!("loading {}", path.display()))?;
        if self.bfi_preprocess {
            Ok(preprocess_bfi(data)?)
        } else {
            Ok(data)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(s) => cmd_simulate(&RunConfig::load(&s)?),
        Command::Fit(s) => cmd_fit(&RunConfig::load(&s)?).map(|_| ()),
        Command::Eval(s) => cmd_eval(&RunConfig::load(&s)?).map(|_| ()),
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        bail!("{what}: rows have unequal lengths");
    }
    Ok(DMatrix::from_row_iterator(nrows, ncols, rows.iter().flatten().copied()))
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn key_values(pairs: &[(&str, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

/// Ground truth written by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthManifest {
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    pub active_factors: usize,
    pub active_threshold: f64,
    pub lambda: Vec<Vec<f64>>,
    pub sigma2: Vec<f64>,
}

impl TruthManifest {
    pub fn to_truth(&self) -> Result<SyntheticTruth> {
        let lambda = from_rows(&self.lambda, "lambda")?;
        Ok(SyntheticTruth::new(
            lambda,
            DVector::from_vec(self.sigma2.clone()),
            self.active_threshold,
        )?)
    }
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let truth = SyntheticTruth::random_signs(cfg.p, cfg.factors, cfg.loading_scale, cfg.noise, cfg.seed)?;
    let data = simulate_factor_data(&truth, cfg.n, cfg.seed)?;
    let mut csv = Vec::new();
    data.write_csv(&mut csv)?;
    write_file(&cfg.output_dir, "data.csv", &csv)?;
    let manifest = TruthManifest {
        seed: cfg.seed,
        n: cfg.n,
        p: cfg.p,
        active_factors: truth.active_factors,
        active_threshold: truth.active_threshold,
        lambda: rows(&truth.lambda_true),
        sigma2: truth.sigma2_true.iter().copied().collect(),
    };
    write_file(
        &cfg.output_dir,
        "truth.json",
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;
    Ok(())
}

/// Fitted variational parameters as written to `fit.json`. Matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedParams {
    pub seed: u64,
    pub hyperparams: Hyperparams,
    pub n: usize,
    pub preprocessing: Vec<String>,
    pub restart_index: usize,
    pub final_elbo: f64,
    pub expected_active: f64,
    pub mu_lambda: Vec<Vec<f64>>,
    pub v_lambda: Vec<Vec<Vec<f64>>>,
    pub mu_eta: Vec<Vec<f64>>,
    pub v_eta: Vec<Vec<f64>>,
    pub a_sigma: f64,
    pub b_sigma: Vec<f64>,
    pub kappa: Vec<Vec<f64>>,
    pub a_v: Vec<f64>,
    pub b_v: Vec<f64>,
}

impl FittedParams {
    pub fn new(result: &FitResult, hyper: &Hyperparams, data: &Dataset, seed: u64) -> Self {
        let s = &result.state;
        FittedParams {
            seed,
            hyperparams: *hyper,
            n: data.n(),
            preprocessing: data.preprocessing_log.iter().map(ToString::to_string).collect(),
            restart_index: result.restart_index,
            final_elbo: result.final_elbo(),
            expected_active: result.expected_active,
            mu_lambda: rows(&s.mu_lambda),
            v_lambda: s.v_lambda.iter().map(rows).collect(),
            mu_eta: rows(&s.mu_eta),
            v_eta: rows(&s.v_eta),
            a_sigma: s.a_sigma,
            b_sigma: s.b_sigma.iter().copied().collect(),
            kappa: rows(&s.kappa),
            a_v: s.a_v.iter().copied().collect(),
            b_v: s.b_v.iter().copied().collect(),
        }
    }

    pub fn state(&self) -> Result<VariationalState> {
        let state = VariationalState {
            mu_lambda: from_rows(&self.mu_lambda, "mu_lambda")?,
            v_lambda: self
                .v_lambda
                .iter()
                .map(|m| from_rows(m, "v_lambda"))
                .collect::<Result<_>>()?,
            mu_eta: from_rows(&self.mu_eta, "mu_eta")?,
            v_eta: from_rows(&self.v_eta, "v_eta")?,
            a_sigma: self.a_sigma,
            b_sigma: DVector::from_vec(self.b_sigma.clone()),
            kappa: from_rows(&self.kappa, "kappa")?,
            a_v: DVector::from_vec(self.a_v.clone()),
            b_v: DVector::from_vec(self.b_v.clone()),
        };
        let (p, h) = (self.hyperparams.p, self.hyperparams.truncation);
        if state.mu_lambda.shape() != (p, h)
            || state.v_lambda.len() != p
            || state.kappa.shape() != (h, h)
            || state.b_sigma.len() != p
        {
            bail!("fit file is inconsistent with p = {p}, H = {h}");
        }
        Ok(state)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<FitResult> {
    let data = cfg.dataset()?;
    let hyper = cfg.hyperparams(data.p());
    let result = fit(&data, &hyper, &cfg.fit_options())?;

    let params = FittedParams::new(&result, &hyper, &data, cfg.seed);
    write_file(&cfg.output_dir, "fit.json", serde_json::to_string_pretty(&params)?.as_bytes())?;

    let mut trace = String::from("restart,cycle,elbo\n");
    for run in &result.runs {
        for (c, e) in run.elbo_trace.iter().enumerate() {
            trace.push_str(&format!("{},{},{}\n", run.restart_index, c + 1, e));
        }
    }
    write_file(&cfg.output_dir, "elbo_trace.csv", trace.as_bytes())?;

    let failed = result.runs.iter().filter(|r| r.failure.is_some()).count();
    let summary = key_values(&[
        ("seed", cfg.seed.to_string()),
        ("n", data.n().to_string()),
        ("p", data.p().to_string()),
        ("truncation", hyper.truncation.to_string()),
        ("alpha", hyper.alpha.to_string()),
        ("theta0", hyper.theta0.to_string()),
        ("theta_inf", hyper.theta_inf.to_string()),
        ("a_sigma", hyper.a_sigma.to_string()),
        ("b_sigma", hyper.b_sigma.to_string()),
        ("restarts", cfg.restarts.to_string()),
        ("failed_restarts", failed.to_string()),
        ("tol", cfg.tol.to_string()),
        ("max_cycles", cfg.max_cycles.to_string()),
        ("preprocessing", params.preprocessing.join("; ")),
        ("best_restart", result.restart_index.to_string()),
        ("final_elbo", result.final_elbo().to_string()),
        ("cycles", result.cycles.to_string()),
        ("converged", result.converged.to_string()),
        ("expected_active", result.expected_active.to_string()),
    ]);
    write_file(&cfg.output_dir, "summary.txt", summary.as_bytes())?;
    Ok(result)
}

/// Metrics produced by `eval`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalMetrics {
    pub mse: f64,
    pub mse_standard_error: f64,
    pub expected_active: f64,
    pub draw_count: usize,
    pub seed: u64,
    pub true_active_factors: Option<usize>,
    pub mse_vs_true_correlation: Option<f64>,
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalMetrics> {
    let fit_path = cfg
        .fit
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join("fit.json"));
    let params = FittedParams::read(&fit_path)?;
    let mut cfg = cfg.clone();
    // The reference correlation must see the same sign flips as the fit did.
    cfg.bfi_preprocess |= params.preprocessing.iter().any(|t| t.starts_with("sign-flip"));
    let data = cfg.dataset()?;
    if data.p() != params.hyperparams.p {
        bail!(
            "dataset has {} columns but the fit was for p = {}",
            data.p(),
            params.hyperparams.p
        );
    }
    let state = params.state()?;
    let reference = sample_correlation(&data)?;
    let draws = sample_omega(&state, cfg.draws, cfg.seed)?;
    let err = correlation_error(&draws, &reference)?;
    let active = expected_active(&state.kappa)?;

    let (true_active_factors, mse_vs_true_correlation) = match &cfg.truth {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let manifest: TruthManifest = serde_json::from_str(&text)?;
            let truth = manifest.to_truth()?;
            if truth.p() != data.p() {
                bail!("truth manifest has p = {} but the dataset has {}", truth.p(), data.p());
            }
            let true_corr = to_correlation(&truth.covariance())?;
            (Some(truth.active_factors), Some(correlation_error(&draws, &true_corr)?.mse))
        }
        None => (None, None),
    };

    let mut pairs = vec![
        ("mse", err.mse.to_string()),
        ("mse_standard_error", err.standard_error.to_string()),
        ("expected_active", active.to_string()),
        ("draw_count", cfg.draws.to_string()),
        ("seed", cfg.seed.to_string()),
        ("fit_seed", params.seed.to_string()),
        ("n", data.n().to_string()),
        ("p", data.p().to_string()),
    ];
    if let (Some(k), Some(m)) = (true_active_factors, mse_vs_true_correlation) {
        pairs.push(("true_active_factors", k.to_string()));
        pairs.push(("mse_vs_true_correlation", m.to_string()));
    }
    write_file(&cfg.output_dir, "metrics.txt", key_values(&pairs).as_bytes())?;

    let p = data.p();
    let mut table = Vec::new();
    writeln!(table, "row,col,sample_correlation,mean_deviation,mse")?;
    for j in 0..p {
        for q in j..p {
            writeln!(
                table,
                "{},{},{},{},{}",
                j + 1,
                q + 1,
                reference[(j, q)],
                err.entry_bias[(j, q)],
                err.entry_mse[(j, q)]
            )?;
        }
    }
    write_file(&cfg.output_dir, "deviations.csv", &table)?;

    Ok(EvalMetrics {
        mse: err.mse,
        mse_standard_error: err.standard_error,
        expected_active: active,
        draw_count: cfg.draws,
        seed: cfg.seed,
        true_active_factors,
        mse_vs_true_correlation,
    })
}
