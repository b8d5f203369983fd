//! Large-norm behaviour of the two-layer erf-scaled sigmoid NTK: gradient
//! components and the antipodal-pair kernel.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::CheckRecord;
use crate::data::Dataset;
use crate::error::{NtkError, Result};
use crate::kernels::closed_form::{erf_scaled_t00, g2_norm_sq, g2_norm_sq_expanded};
use crate::kernels::{closed_form_gradient_components, Kernel, KernelSystem};
use crate::regression::{jacobian_infinity, InitSurrogate};
use crate::rng::derive_seed;
use crate::spectrum::spectrum;

#[derive(Debug, Clone, Serialize)]
pub struct GradientComponentReport {
    pub rho: f64,
    pub r: f64,
    pub n0: usize,
    /// `‖I^g₁‖`, the arcsin part.
    pub g1_norm: f64,
    /// `‖I^g₂‖`, the rational part.
    pub g2_norm: f64,
    /// `‖I^g₁ + I^g₂‖`.
    pub total_norm: f64,
    /// `‖I^g₂‖²` from the scalar `(ρ, r)` formula.
    pub g2_sq_formula: f64,
    /// The printed polynomial expansion, without the restored factor `r²`.
    pub g2_sq_printed: f64,
}

impl GradientComponentReport {
    /// `g2_sq_formula / g2_sq_printed`; equals `r²`.
    pub fn printed_ratio(&self) -> f64 {
        self.g2_sq_formula / self.g2_sq_printed
    }
}

/// Norms of the two parts of `∂Θ(xᵢ, x)/∂x` at `x = x₁`.
pub fn gradient_component_norms(x1: &DVector<f64>, xi: &DVector<f64>) -> Result<GradientComponentReport> {
    if x1.len() != xi.len() {
        return Err(NtkError::DimensionMismatch { expected: x1.len(), got: xi.len() });
    }
    let r = x1.norm();
    if r == 0.0 || (xi.norm() - r).abs() > 1e-10 * r {
        return Err(NtkError::InvalidArgument("inputs must share a positive norm".into()));
    }
    let n0 = x1.len();
    let rho = (xi.dot(x1) / (r * r)).clamp(-1.0, 1.0);
    let (g1, g2) = closed_form_gradient_components(xi, x1)?;
    let nf = n0 as f64;
    Ok(GradientComponentReport {
        rho,
        r,
        n0,
        g1_norm: g1.norm(),
        g2_norm: g2.norm(),
        total_norm: (g1 + g2).norm(),
        g2_sq_formula: g2_norm_sq(rho, r, nf),
        g2_sq_printed: g2_norm_sq_expanded(rho, r, nf) / (r * r),
    })
}

/// Grid search for the maximum of `‖I^g₂‖` over `r`; returns `(r*, max)`.
pub fn g2_spike(rho: f64, n0: usize, radii: &[f64]) -> Option<(f64, f64)> {
    radii.iter().map(|&r| (r, g2_norm_sq(rho, r, n0 as f64).sqrt())).max_by(|a, b| a.1.total_cmp(&b.1))
}

/// `n` points of norm `r` in `R^{n₀}` whose first two columns are `x` and `−x`.
pub fn antipodal_dataset<R: Rng + ?Sized>(n0: usize, n: usize, r: f64, rng: &mut R) -> Result<Dataset> {
    if n < 2 {
        return Err(NtkError::InvalidArgument("need at least the pair".into()));
    }
    let mut x = DMatrix::from_fn(n0, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    for mut col in x.column_iter_mut() {
        let norm = col.norm();
        col *= r / norm;
    }
    let first = x.column(0).into_owned();
    x.set_column(1, &(-first));
    Dataset::with_dependent_columns(x)
}

#[derive(Debug, Clone, Serialize)]
pub struct ParallelInputsReport {
    pub r: f64,
    pub n0: usize,
    pub n: usize,
    pub pair: (usize, usize),
    /// `I_k = r² / (2π √(4n₀² + 4n₀r²))`.
    pub i_k: f64,
    pub diagonal_mean: f64,
    /// Full kernel entry `K̃₁₂` of the pair.
    pub pair_entry: f64,
    /// Arcsin part `1/4 + asin(·)/2π` of `K̃₁₂`; tends to 0.
    pub pair_sigma_part: f64,
    /// `K̃₁₂ / (−I_k)`; tends to 1.
    pub pair_entry_ratio: f64,
    /// `max |K̃ᵢⱼ − 1/4| / min K̃ᵢᵢ` over non-pair off-diagonal entries.
    pub off_pair_ratio: f64,
    /// Zero-mode `‖J∞(x₁)‖_op`.
    pub j_inf_norm: f64,
    pub largest_eigen_norm: f64,
}

fn find_pair(data: &Dataset) -> Result<(usize, usize)> {
    let rho = data.rho();
    let mut pairs = Vec::new();
    for i in 0..data.n() {
        for j in 0..i {
            if rho[(i, j)] < -1.0 + 1e-10 {
                pairs.push((j, i));
            }
        }
    }
    match pairs.as_slice() {
        [p] => Ok(*p),
        _ => Err(NtkError::InvalidDataset(format!("expected exactly one antipodal pair, found {}", pairs.len()))),
    }
}

/// Block structure of the erf-scaled two-layer kernel with one antipodal pair
/// and the zero-mode trained Jacobian at the first pair point.
pub fn parallel_inputs_check(data: &Dataset) -> Result<ParallelInputsReport> {
    let pair = find_pair(data)?;
    let (n0, n, r) = (data.n0(), data.n(), data.r());
    let ks = KernelSystem::new(data, Kernel::ErfScaledTwoLayer)?;
    let k = ks.gram();
    let nf = n0 as f64;
    let i_k = r * r / (2.0 * PI * (4.0 * nf * nf + 4.0 * nf * r * r).sqrt());
    let diag_min = (0..n).map(|i| k[(i, i)]).fold(f64::INFINITY, f64::min);
    let diagonal_mean = (0..n).map(|i| k[(i, i)]).sum::<f64>() / n as f64;
    let mut off = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let is_pair = (i, j) == pair || (j, i) == pair;
            if i != j && !is_pair {
                off = off.max((k[(i, j)] - 0.25).abs());
            }
        }
    }
    let q = r * r / nf;
    let pair_entry = k[(pair.0, pair.1)];
    let x1 = data.column(pair.0);
    let j = jacobian_infinity(data, &ks, &InitSurrogate::Zero, &x1, false)?;
    let j_inf_norm = j
        .clone()
        .try_svd(false, false, f64::EPSILON, 0)
        .ok_or(NtkError::SvdFailure { rows: n0, cols: n0 })?
        .singular_values
        .max();
    Ok(ParallelInputsReport {
        r,
        n0,
        n,
        pair,
        i_k,
        diagonal_mean,
        pair_entry,
        pair_sigma_part: erf_scaled_t00(q, -q, q),
        pair_entry_ratio: pair_entry / -i_k,
        off_pair_ratio: off / diag_min,
        j_inf_norm,
        largest_eigen_norm: spectrum(&j)?.largest_norm,
    })
}

pub(super) fn records(seed: u64) -> Result<Vec<CheckRecord>> {
    let mut out = Vec::new();
    let n0 = 32;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[30]));
    let x1 = DVector::from_fn(n0, |_, _| rng.sample::<f64, _>(StandardNormal));
    let u = DVector::from_fn(n0, |_, _| rng.sample::<f64, _>(StandardNormal));
    let e1 = x1.normalize();
    let perp = (&u - &e1 * e1.dot(&u)).normalize();
    let at = |rho: f64, r: f64| -> Result<GradientComponentReport> {
        let xi = (&e1 * rho + &perp * (1.0 - rho * rho).sqrt()) * r;
        gradient_component_norms(&(&e1 * r), &xi)
    };
    let far = at(0.3, 1e5)?;
    out.push(CheckRecord::at_most("gradient/decay-off-diagonal", far.total_norm, 0.0, 1e-4));
    let same = at(1.0, 1e5)?;
    let limit = 1.0 / (8.0 * PI * (n0 as f64).sqrt());
    out.push(CheckRecord::close("gradient/diagonal-limit", same.total_norm / limit, 1.0, 1e-3));
    let mid = at(0.6, 50.0)?;
    out.push(CheckRecord::close(
        "gradient/g2-formula-vs-vector",
        mid.g2_sq_formula / (mid.g2_norm * mid.g2_norm),
        1.0,
        1e-10,
    ));
    out.push(
        CheckRecord::close("gradient/printed-expansion-ratio-r2", mid.printed_ratio() / (mid.r * mid.r), 1.0, 1e-10)
            .soft(),
    );
    let radii: Vec<f64> = (0..=400).map(|k| 10f64.powf(-1.0 + 6.0 * k as f64 / 400.0)).collect();
    if let Some((r_star, peak)) = g2_spike(0.999, n0, &radii) {
        let end = g2_norm_sq(0.999, *radii.last().expect("non-empty"), n0 as f64).sqrt();
        let interior = r_star > radii[0] && r_star < *radii.last().expect("non-empty");
        out.push(CheckRecord::at_least("gradient/g2-spike-interior", interior as u8 as f64, 1.0, 0.0));
        out.push(CheckRecord::at_least("gradient/g2-spike-height", peak / end, 1.0, 0.0));
    }

    let data = antipodal_dataset(n0, 5, 1e3, &mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[31])))?;
    let rep = parallel_inputs_check(&data)?;
    out.push(CheckRecord::at_most("parallel/off-pair-ratio", rep.off_pair_ratio, 0.05, 0.0));
    out.push(CheckRecord::at_most("parallel/pair-sigma-part", rep.pair_sigma_part, 0.0, 0.01));
    out.push(CheckRecord::close("parallel/pair-entry-over-minus-ik", rep.pair_entry_ratio, 1.0, 0.05));
    out.push(CheckRecord::at_most("parallel/j-inf-norm", rep.j_inf_norm, 0.55, 0.0));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(rho: f64, r: f64, n0: usize) -> (DVector<f64>, DVector<f64>) {
        let mut a = DVector::zeros(n0);
        a[0] = r;
        let mut b = DVector::zeros(n0);
        b[0] = rho * r;
        b[1] = (1.0 - rho * rho).sqrt() * r;
        (a, b)
    }

    #[test]
    fn both_components_decay_for_distinct_points() {
        let mut last = f64::INFINITY;
        for &r in &[1e2, 1e3, 1e4, 1e5] {
            let (a, b) = pair(0.5, r, 16);
            let rep = gradient_component_norms(&a, &b).unwrap();
            assert!(rep.total_norm < last);
            last = rep.total_norm;
        }
        assert!(last < 1e-4);
    }

    #[test]
    fn diagonal_limit() {
        let (a, _) = pair(1.0, 1e6, 8);
        let rep = gradient_component_norms(&a, &a).unwrap();
        let limit = 1.0 / (8.0 * PI * 8f64.sqrt());
        assert!((rep.total_norm / limit - 1.0).abs() < 1e-5);
        assert!(rep.g1_norm < 1e-5 * rep.g2_norm);
    }

    #[test]
    fn printed_expansion_misses_r_squared() {
        let (a, b) = pair(0.2, 7.0, 5);
        let rep = gradient_component_norms(&a, &b).unwrap();
        assert!((rep.g2_sq_formula - rep.g2_norm.powi(2)).abs() < 1e-12 * rep.g2_sq_formula);
        assert!((rep.printed_ratio() - 49.0).abs() < 1e-9);
    }

    #[test]
    fn spike_near_one() {
        let radii: Vec<f64> = (0..=300).map(|k| 10f64.powf(-1.0 + 5.0 * k as f64 / 300.0)).collect();
        let (r_star, peak) = g2_spike(0.999, 32, &radii).unwrap();
        assert!(r_star > 0.2 && r_star < 1e4);
        assert!(peak > g2_norm_sq(0.999, 1e4, 32.0).sqrt());
    }

    #[test]
    fn antipodal_block_structure() {
        let data = antipodal_dataset(32, 5, 1e3, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let rep = parallel_inputs_check(&data).unwrap();
        assert_eq!(rep.pair, (0, 1));
        assert!(rep.off_pair_ratio < 0.05);
        assert!(rep.pair_sigma_part < 1e-2);
        assert!((rep.pair_entry_ratio - 1.0).abs() < 0.05, "{rep:?}");
        assert!(rep.j_inf_norm <= 0.55, "{rep:?}");
    }

    #[test]
    fn requires_exactly_one_pair() {
        let d = Dataset::random_sphere(6, 3, 2.0, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert!(parallel_inputs_check(&d).is_err());
    }
}
