//! Iterated maps, the attractor criterion and basin probes.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{NtkError, Result};
use crate::rng::stream;
use crate::spectrum::SpectrumReport;

/// Stopping rule for [`iterate`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IterateConfig {
    pub max_iter: usize,
    /// Convergence when the mean squared error to the target drops below this.
    pub tol: f64,
}

impl Default for IterateConfig {
    fn default() -> Self {
        IterateConfig { max_iter: 50, tol: 1e-2 }
    }
}

#[derive(Debug, Clone)]
pub struct IterationTrace {
    /// `x₀, f(x₀), …`; always `iterations_used + 1` entries.
    pub states: Vec<DVector<f64>>,
    pub converged: bool,
    pub iterations_used: usize,
    pub final_mse: f64,
}

/// Mean over coordinates of the squared difference.
pub fn mse(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm_squared() / a.len().max(1) as f64
}

/// Applies `map` until the state is within `tol` (MSE) of `target` or
/// `max_iter` applications have been made.
pub fn iterate<F>(map: F, x0: &DVector<f64>, target: &DVector<f64>, cfg: IterateConfig) -> Result<IterationTrace>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    if cfg.max_iter == 0 {
        return Err(NtkError::InvalidArgument("max_iter must be at least 1".into()));
    }
    if x0.len() != target.len() {
        return Err(NtkError::DimensionMismatch { expected: target.len(), got: x0.len() });
    }
    let mut states = vec![x0.clone()];
    let mut final_mse = mse(x0, target);
    for it in 1..=cfg.max_iter {
        let next = map(states.last().expect("non-empty"))?;
        if next.len() != target.len() {
            return Err(NtkError::DimensionMismatch { expected: target.len(), got: next.len() });
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(NtkError::NonFiniteState { iteration: it });
        }
        final_mse = mse(&next, target);
        states.push(next);
        if final_mse < cfg.tol {
            return Ok(IterationTrace { states, converged: true, iterations_used: it, final_mse });
        }
    }
    Ok(IterationTrace { states, converged: false, iterations_used: cfg.max_iter, final_mse })
}

/// Sufficient attractor test: every eigenvalue has modulus below `1 − margin`.
pub fn is_attractor(rep: &SpectrumReport, margin: f64) -> bool {
    rep.largest_norm < 1.0 - margin
}

#[derive(Debug, Clone, Serialize)]
pub struct BasinReport {
    /// Standard deviation of the added noise, in input units.
    pub noise_radius: f64,
    /// Perturbations per training point.
    pub samples: usize,
    pub successes: usize,
    /// `successes / (samples · points)`.
    pub success_rate: f64,
    pub per_point: Vec<f64>,
    /// Runs that produced a non-finite state (counted as failures).
    pub diverged: usize,
}

/// Perturbs each column of `fixed_points` with `N(0, σ²I)` noise `samples`
/// times and counts runs that return to the same column.
pub fn basin_probe<F>(
    map: F,
    fixed_points: &DMatrix<f64>,
    sigma: f64,
    samples: usize,
    seed: u64,
    cfg: IterateConfig,
) -> Result<BasinReport>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>> + Sync,
{
    if samples == 0 {
        return Err(NtkError::InvalidArgument("samples must be at least 1".into()));
    }
    if !(sigma >= 0.0) {
        return Err(NtkError::InvalidArgument(format!("noise radius must be non-negative, got {sigma}")));
    }
    let points = fixed_points.ncols();
    let jobs: Vec<(usize, usize)> = (0..points).flat_map(|p| (0..samples).map(move |s| (p, s))).collect();
    let outcomes: Vec<(usize, Option<bool>)> = jobs
        .par_iter()
        .map(|&(p, s)| {
            let target = fixed_points.column(p).into_owned();
            let mut rng = stream(seed, &[p as u64, s as u64]);
            let noise = DVector::from_fn(target.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let x0 = &target + noise * sigma;
            match iterate(&map, &x0, &target, cfg) {
                Ok(tr) => Ok((p, Some(tr.converged))),
                Err(NtkError::NonFiniteState { .. }) => Ok((p, None)),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let mut hits = vec![0usize; points];
    let mut diverged = 0;
    for (p, o) in outcomes {
        match o {
            Some(true) => hits[p] += 1,
            Some(false) => {}
            None => diverged += 1,
        }
    }
    let successes: usize = hits.iter().sum();
    Ok(BasinReport {
        noise_radius: sigma,
        samples,
        successes,
        success_rate: successes as f64 / (samples * points) as f64,
        per_point: hits.iter().map(|&h| h as f64 / samples as f64).collect(),
        diverged,
    })
}
