use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{cycle, init_state, CaviError, Hyperparams, VariationalState};
use crate::data_io::Dataset;
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub restarts: usize,
    /// Absolute ELBO increment below which a run stops.
    pub tol: f64,
    pub max_cycles: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            restarts: 20,
            tol: 0.05,
            max_cycles: 5000,
            seed: 0,
        }
    }
}

/// The monitored trajectory of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutcome {
    pub state: VariationalState,
    /// ELBO after each completed cycle.
    pub elbo_trace: Vec<f64>,
    pub converged: bool,
}

/// Summary of one restart, kept whether or not it succeeded.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub restart_index: usize,
    pub elbo_trace: Vec<f64>,
    pub converged: bool,
    pub failure: Option<String>,
}

impl RunRecord {
    pub fn final_elbo(&self) -> Option<f64> {
        self.elbo_trace.last().copied()
    }
}

/// The best run of a multi-restart fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub state: VariationalState,
    pub elbo_trace: Vec<f64>,
    pub converged: bool,
    pub cycles: usize,
    pub restart_index: usize,
    pub expected_active: f64,
    /// Every restart in index order, including discarded ones.
    pub runs: Vec<RunRecord>,
}

impl FitResult {
    pub fn final_elbo(&self) -> f64 {
        *self.elbo_trace.last().expect("a successful run has at least one cycle")
    }
}

/// Cycles `state` until the ELBO grows by less than `tol` or `max_cycles` is hit.
///
/// On failure the partial trace is returned alongside the error.
pub fn run_chain(
    mut state: VariationalState,
    data: &Dataset,
    hyper: &Hyperparams,
    tol: f64,
    max_cycles: usize,
) -> Result<ChainOutcome, (CaviError, Vec<f64>)> {
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    for _ in 0..max_cycles {
        match cycle(&mut state, data, hyper) {
            Ok(value) => {
                let previous = trace.last().copied();
                trace.push(value);
                if let Some(prev) = previous {
                    if value - prev < tol {
                        converged = true;
                        break;
                    }
                }
            }
            Err(e) => return Err((e, trace)),
        }
    }
    Ok(ChainOutcome {
        state,
        elbo_trace: trace,
        converged,
    })
}

/// Runs `restarts` independent chains and keeps the one with the highest final ELBO.
///
/// Restart `r` draws its initialization from its own stream, so results do not
/// depend on how chains are scheduled across threads. A chain that hits a
/// numerical failure is dropped with a warning; ties go to the lower index.
pub fn fit(
    data: &Dataset,
    hyper: &Hyperparams,
    options: &FitOptions,
) -> Result<FitResult, CaviError> {
    hyper.validate()?;
    if options.restarts < 1 {
        return Err(CaviError::InvalidOptions("restarts must be at least 1".into()));
    }
    if !(options.tol > 0.0) {
        return Err(CaviError::InvalidOptions("tol must be positive".into()));
    }
    if options.max_cycles < 1 {
        return Err(CaviError::InvalidOptions("max_cycles must be at least 1".into()));
    }
    let outcomes: Vec<Result<ChainOutcome, (CaviError, Vec<f64>)>> = (0..options.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(options.seed, Stream::Init, r as u64);
            let state = init_state(data, hyper, &mut rng).map_err(|e| (e, Vec::new()))?;
            run_chain(state, data, hyper, options.tol, options.max_cycles)
        })
        .collect();

    let mut runs = Vec::with_capacity(outcomes.len());
    let mut best: Option<(usize, ChainOutcome)> = None;
    let mut last_error = None;
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(chain) => {
                runs.push(RunRecord {
                    restart_index: r,
                    elbo_trace: chain.elbo_trace.clone(),
                    converged: chain.converged,
                    failure: None,
                });
                let value = *chain.elbo_trace.last().expect("max_cycles >= 1");
                let better = match &best {
                    None => true,
                    Some((_, b)) => value > *b.elbo_trace.last().unwrap(),
                };
                if better {
                    best = Some((r, chain));
                }
            }
            Err((e, trace)) => {
                log::warn!("restart {r} discarded: {e}");
                runs.push(RunRecord {
                    restart_index: r,
                    elbo_trace: trace,
                    converged: false,
                    failure: Some(e.to_string()),
                });
                last_error = Some(e);
            }
        }
    }
    let (restart_index, chain) = best.ok_or_else(|| CaviError::AllRestartsFailed {
        restarts: options.restarts,
        last: last_error.map(|e| e.to_string()).unwrap_or_default(),
    })?;
    let expected_active = expected_active(&chain.state.kappa)?;
    Ok(FitResult {
        cycles: chain.elbo_trace.len(),
        elbo_trace: chain.elbo_trace,
        converged: chain.converged,
        state: chain.state,
        restart_index,
        expected_active,
        runs,
    })
}

/// Expected number of slab columns, `Σ_h Σ_{l>h} κ_hl`.
pub fn expected_active(kappa: &DMatrix<f64>) -> Result<f64, CaviError> {
    for (row, r) in kappa.row_iter().enumerate() {
        let sum = r.sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CaviError::RowSum { row, sum });
        }
    }
    let h_max = kappa.nrows();
    Ok((0..h_max)
        .map(|h| (h + 1..kappa.ncols()).map(|l| kappa[(h, l)]).sum::<f64>())
        .sum())
}
