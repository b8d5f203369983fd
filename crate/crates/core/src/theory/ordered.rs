//! Variance map, the χ₁ slope at `c = 1`, and the diagonal NTK lower bound.

use serde::Serialize;

use super::CheckRecord;
use crate::activation::{Activation, Profile};
use crate::error::{NtkError, Result};
use crate::kernels::closed_form::erf_t11;
use crate::kernels::{default_quadrature, diag_next};

const Q_TOL: f64 = 1e-12;
const Q_MAX_ITER: usize = 1000;

#[derive(Debug, Clone, Serialize)]
pub struct OrderedRegionReport {
    pub act: Activation,
    /// `q^(0) = q_init, q^(1), …` up to the last iterate.
    pub q_sequence: Vec<f64>,
    pub q_star: f64,
    pub converged: bool,
    /// All consecutive differences share one sign (or vanish).
    pub monotone: bool,
    /// `E[σ'(√q* z)²]`.
    pub chi1: f64,
}

fn slope_sq(act: Activation, q: f64) -> f64 {
    let p = act.profile(1);
    let prof = Profile { lo: 0.0, hi: 0.0, radius: p.radius, pole: p.pole };
    default_quadrature().expect_1d(&|u: f64| act.eval(1, u).powi(2), prof, 0.0, q.max(0.0).sqrt())
}

/// Iterates `q ↦ E[σ(√q z)²]` to a fixed point and evaluates `χ₁` there.
pub fn chi1_diagnostic(act: Activation, q_init: f64) -> Result<OrderedRegionReport> {
    if !(q_init >= 0.0) || !q_init.is_finite() {
        return Err(NtkError::InvalidArgument(format!("q_init must be finite and non-negative, got {q_init}")));
    }
    let quad = default_quadrature();
    let mut q_sequence = vec![q_init];
    let mut converged = false;
    for _ in 0..Q_MAX_ITER {
        let q = *q_sequence.last().expect("non-empty");
        let next = diag_next(quad, act, q);
        if !next.is_finite() {
            return Err(NtkError::NoConvergence(format!("variance map produced {next}")));
        }
        q_sequence.push(next);
        if (next - q).abs() <= Q_TOL * next.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("variance map for {} did not converge in {Q_MAX_ITER} steps", act.name());
    }
    let diffs: Vec<f64> = q_sequence.windows(2).map(|w| w[1] - w[0]).collect();
    let monotone = diffs.iter().all(|&d| d >= -Q_TOL) || diffs.iter().all(|&d| d <= Q_TOL);
    let q_star = *q_sequence.last().expect("non-empty");
    Ok(OrderedRegionReport { act, chi1: slope_sq(act, q_star), q_sequence, q_star, converged, monotone })
}

/// `Θ^(L)(x, x)` from `q¹ = ‖x‖²/n₀` by the diagonal recursion
/// `Θ ← Θ E[σ'²] + E[σ²]`.
pub fn theta_diagonal(act: Activation, q1: f64, depth: usize) -> Result<f64> {
    if depth == 0 {
        return Err(NtkError::InvalidArgument("depth must be at least 1".into()));
    }
    let quad = default_quadrature();
    let (mut q, mut theta) = (q1, q1);
    for _ in 1..depth {
        let sigma = diag_next(quad, act, q);
        theta = theta * slope_sq(act, q) + sigma;
        q = sigma;
    }
    Ok(theta)
}

/// Smallest `Θ^(L)(x, x)` over the given squared norms per input dimension.
pub fn theta_diagonal_minimum(act: Activation, q1_values: &[f64], depth: usize) -> Result<f64> {
    q1_values.iter().try_fold(f64::INFINITY, |m, &q| Ok(m.min(theta_diagonal(act, q, depth)?)))
}

pub(super) fn records(_seed: u64) -> Result<Vec<CheckRecord>> {
    let mut out = Vec::new();
    for &q0 in &[0.1, 1.0, 10.0] {
        let rep = chi1_diagnostic(Activation::Sigmoid, q0)?;
        out.push(CheckRecord::at_most(&format!("chi1/sigmoid-q{q0}"), rep.chi1, 1.0 / 16.0, 1e-12));
        out.push(CheckRecord::at_least(&format!("chi1/monotone-q{q0}"), rep.monotone as u8 as f64, 1.0, 0.0));
    }
    out.push(CheckRecord::close("chi1/zero-variance-limit", slope_sq(Activation::Sigmoid, 0.0), 1.0 / 16.0, 1e-15));
    let erf = chi1_diagnostic(Activation::Erf, 1.0)?;
    let closed = erf_t11(erf.q_star, erf.q_star, erf.q_star);
    out.push(CheckRecord::close("chi1/erf-closed-form", erf.chi1, closed, 1e-10));

    let q1: Vec<f64> =
        (0..=200).map(|k| 10f64.powf(-4.0 + 7.0 * k as f64 / 200.0)).chain(std::iter::once(0.0)).collect();
    for depth in 2..=6 {
        let m = theta_diagonal_minimum(Activation::Sigmoid, &q1, depth)?;
        out.push(CheckRecord::at_least(&format!("diagonal-floor/theta-L{depth}"), m, 0.25, 1e-9));
    }
    Ok(out)
}
