//! Affine-activation region: eigenvalue-1 multiplicities and the rank-one
//! perturbation of the projection `X(XᵀX)⁻¹Xᵀ`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::CheckRecord;
use crate::activation::Activation;
use crate::data::Dataset;
use crate::error::{NtkError, Result};
use crate::kernels::{Kernel, KernelSystem};
use crate::regression::{jacobian_infinity, InitSurrogate};
use crate::rng::derive_seed;
use crate::spectrum::{spectrum_with_window, SpectrumReport, NEAR_ONE_WINDOW};

#[derive(Debug, Clone, Serialize)]
pub struct RankOneReport {
    pub k: usize,
    pub m: usize,
    pub c: f64,
    /// `trace(B (XᵀX)⁻¹) = 𝟙ᵀ(XᵀX)⁻¹𝟙`.
    pub g: f64,
    /// `1 / (1 + c g)`.
    pub lambda_hat: f64,
    /// Eigenvalues of `X(XᵀX + cB)⁻¹Xᵀ`, descending.
    pub eigenvalues: Vec<f64>,
    /// Max-entry difference between the direct solve and the rank-one update.
    pub path_difference: f64,
    /// `‖M a − λ̂ a‖ / ‖a‖` with `a = X(XᵀX)⁻¹𝟙`.
    pub eigen_residual: f64,
    /// Largest column norm; `g ≥ 1/r²`.
    pub r: f64,
}

impl RankOneReport {
    /// Eigenvalues within `tol` of `value`.
    pub fn count_near(&self, value: f64, tol: f64) -> usize {
        self.eigenvalues.iter().filter(|&&l| (l - value).abs() < tol).count()
    }
}

/// `M = X(XᵀX + cB)⁻¹Xᵀ` for the all-ones `B`, computed by a direct solve and
/// by the rank-one inverse update, with its spectrum and the `λ̂` eigen-pair.
pub fn rank_one_spectrum(x: &DMatrix<f64>, c: f64) -> Result<RankOneReport> {
    let (k, m) = x.shape();
    if m < 2 || k < m {
        return Err(NtkError::InvalidArgument(format!("need k ≥ m ≥ 2, got {k}×{m}")));
    }
    if !(c >= 0.0) || !c.is_finite() {
        return Err(NtkError::InvalidArgument(format!("c must be finite and non-negative, got {c}")));
    }
    let gram = x.transpose() * x;
    let p_inv = gram.clone().cholesky().ok_or(NtkError::Degenerate("XᵀX is singular".into()))?.inverse();
    let ones = DVector::from_element(m, 1.0);
    let u = &p_inv * &ones;
    let g = ones.dot(&u);
    let lambda_hat = 1.0 / (1.0 + c * g);

    let b = DMatrix::from_element(m, m, 1.0);
    let direct_inner =
        (&gram + &b * c).cholesky().ok_or(NtkError::Degenerate("XᵀX + cB is singular".into()))?.inverse();
    let miller_inner = &p_inv - (&u * u.transpose()) * (c / (1.0 + c * g));
    let direct = x * direct_inner * x.transpose();
    let miller = x * miller_inner * x.transpose();
    let path_difference = (&direct - &miller).amax();

    let sym = (&direct + direct.transpose()) * 0.5;
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));

    let a = x * &u;
    let eigen_residual = (&direct * &a - &a * lambda_hat).norm() / a.norm();
    let r = x.column_iter().map(|col| col.norm()).fold(0.0, f64::max);
    Ok(RankOneReport { k, m, c, g, lambda_hat, eigenvalues, path_difference, eigen_residual, r })
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearRegionReport {
    pub alpha: f64,
    pub beta: f64,
    pub n0: usize,
    pub n: usize,
    pub r: f64,
    /// `‖J₀‖_op` of the surrogate.
    pub j0_norm: f64,
    /// `Δ = 1 − ‖J₀‖_op`.
    pub delta: f64,
    /// `‖(1/√n₁) W^(1) 𝟙‖`.
    pub bias_norm: f64,
    /// `β n₀ Δ / (2 r α²)`.
    pub bias_threshold: f64,
    /// `0 < Δ ≤ 1`.
    pub norm_condition: bool,
    /// `bias_norm < bias_threshold`.
    pub bias_condition: bool,
    pub multiplicity_observed: usize,
    /// `n` for `β = 0`, `n − 1` otherwise.
    pub multiplicity_predicted: usize,
    /// Whether the side conditions make the prediction exact.
    pub prediction_exact: bool,
    pub window: f64,
    /// `c = n₀β² / (2α²)`.
    pub c: f64,
    pub g: f64,
    pub lambda_hat: f64,
    /// Residual of the `λ̂` eigen-pair of `X(XᵀX + cB)⁻¹Xᵀ`.
    pub lambda_hat_residual: f64,
    pub spectrum: SpectrumReport,
    /// `max |J∞ − I|`, meaningful for `β = 0, n = n₀`.
    pub identity_error: f64,
}

/// Trained Jacobian of a two-layer network with activation `αx + β`, using
/// the exact affine NTK and a sampled width-`width` network for `f₀`, `J₀`.
pub fn linear_region_check(
    alpha: f64,
    beta: f64,
    data: &Dataset,
    width: usize,
    seed: u64,
) -> Result<LinearRegionReport> {
    let (n0, n) = (data.n0(), data.n());
    if n > n0 {
        return Err(NtkError::InvalidDataset(format!("need n ≤ n₀, got n = {n}, n₀ = {n0}")));
    }
    if alpha == 0.0 {
        return Err(NtkError::InvalidArgument("slope must be non-zero".into()));
    }
    let act = Activation::linear(alpha, beta);
    let ks = KernelSystem::new(data, Kernel::new(2, act))?;
    let init = InitSurrogate::finite_width(n0, width, 2, act, seed)?;
    let net = init.network().expect("finite width");
    let x = data.column(0);
    let j_inf = jacobian_infinity(data, &ks, &init, &x, false)?;
    let spectrum = spectrum_with_window(&j_inf, NEAR_ONE_WINDOW)?;

    let j0 = init.j0(&x)?;
    let j0_norm = j0
        .clone()
        .try_svd(false, false, f64::EPSILON, 0)
        .ok_or(NtkError::SvdFailure { rows: n0, cols: n0 })?
        .singular_values
        .max();
    let delta = 1.0 - j0_norm;
    let w1 = &net.weights()[1];
    let bias_norm = w1.column_sum().norm() / (width as f64).sqrt();
    let r = data.r();
    let bias_threshold = beta * n0 as f64 * delta / (2.0 * r * alpha * alpha);
    let norm_condition = delta > 0.0 && delta <= 1.0;
    let bias_condition = bias_norm < bias_threshold;

    let c = n0 as f64 * beta * beta / (2.0 * alpha * alpha);
    let (g, lambda_hat, lambda_hat_residual) = if n >= 2 {
        let ro = rank_one_spectrum(data.x(), c)?;
        (ro.g, ro.lambda_hat, ro.eigen_residual)
    } else {
        let g = 1.0 / data.x().column(0).norm_squared();
        (g, 1.0 / (1.0 + c * g), 0.0)
    };

    let (multiplicity_predicted, prediction_exact) =
        if beta == 0.0 { (n, norm_condition) } else { (n - 1, norm_condition && bias_condition) };
    let identity_error = if n == n0 { (&j_inf - DMatrix::identity(n0, n0)).amax() } else { f64::NAN };
    Ok(LinearRegionReport {
        alpha,
        beta,
        n0,
        n,
        r,
        j0_norm,
        delta,
        bias_norm,
        bias_threshold,
        norm_condition,
        bias_condition,
        multiplicity_observed: spectrum.count_near_one,
        multiplicity_predicted,
        prediction_exact,
        window: spectrum.window,
        c,
        g,
        lambda_hat,
        lambda_hat_residual,
        spectrum,
        identity_error,
    })
}

pub(super) fn records(seed: u64) -> Result<Vec<CheckRecord>> {
    let mut out = Vec::new();
    let mut worst = 0.0f64;
    for (i, &n0) in [2usize, 4, 8].iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[20, i as u64]));
        let data = Dataset::random_sphere(n0, n0, 1.0, &mut rng)?;
        let rep = linear_region_check(0.25, 0.0, &data, 2048, derive_seed(seed, &[21, i as u64]))?;
        worst = worst.max(rep.identity_error);
    }
    out.push(CheckRecord::at_most("affine/full-data-identity", worst, 0.0, 1e-6));
    for (i, &n) in [2usize, 5, 8].iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[22, i as u64]));
        let data = Dataset::random_sphere(10, n, 1.0, &mut rng)?;
        let rep = linear_region_check(0.25, 0.5, &data, 4096, derive_seed(seed, &[23, i as u64]))?;
        let rec = CheckRecord::close(
            &format!("affine/multiplicity-n{n}"),
            rep.multiplicity_observed as f64,
            rep.multiplicity_predicted as f64,
            0.0,
        );
        out.push(if rep.prediction_exact { rec } else { rec.soft() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[24]));
    let data = Dataset::random_sphere(10, 5, 6.0 * 10f64.sqrt(), &mut rng)?;
    let rep = linear_region_check(0.25, 0.5, &data, 4096, derive_seed(seed, &[25]))?;
    out.push(CheckRecord::close("affine/bias-condition-fails-at-large-r", rep.bias_condition as u8 as f64, 0.0, 0.0));

    let mut worst_path = 0.0f64;
    let mut worst_res = 0.0f64;
    let mut worst_bound = f64::INFINITY;
    for i in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[26, i]));
        let data = Dataset::random_sphere(6, 4, 1.0 + i as f64, &mut rng)?;
        let ro = rank_one_spectrum(data.x(), 0.1 * i as f64)?;
        worst_path = worst_path.max(ro.path_difference);
        worst_res = worst_res.max(ro.eigen_residual);
        worst_bound = worst_bound.min(ro.g - 1.0 / (ro.r * ro.r));
    }
    out.push(CheckRecord::at_most("rank-one/direct-vs-update", worst_path, 0.0, 1e-10));
    out.push(CheckRecord::at_most("rank-one/eigen-residual", worst_res, 0.0, 1e-10));
    out.push(CheckRecord::at_least("rank-one/trace-lower-bound", worst_bound, 0.0, 1e-12));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(n0: usize, n: usize, r: f64, seed: u64) -> Dataset {
        Dataset::random_sphere(n0, n, r, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn two_by_two_identity_case() {
        let rep = rank_one_spectrum(&DMatrix::identity(2, 2), 1.0).unwrap();
        assert!((rep.g - 2.0).abs() < 1e-14);
        assert!((rep.lambda_hat - 1.0 / 3.0).abs() < 1e-14);
        assert!((rep.eigenvalues[0] - 1.0).abs() < 1e-14);
        assert!((rep.eigenvalues[1] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn zero_c_is_a_projection() {
        let d = data(7, 3, 2.0, 1);
        let rep = rank_one_spectrum(d.x(), 0.0).unwrap();
        assert_eq!(rep.count_near(1.0, 1e-10), 3);
        assert_eq!(rep.count_near(0.0, 1e-10), 4);
    }

    #[test]
    fn rank_one_structure_of_the_spectrum() {
        let d = data(9, 4, 3.0, 2);
        let rep = rank_one_spectrum(d.x(), 2.5).unwrap();
        assert_eq!(rep.count_near(1.0, 1e-10), 3);
        assert_eq!(rep.count_near(0.0, 1e-10), 5);
        assert_eq!(rep.count_near(rep.lambda_hat, 1e-10), 1);
        assert!(rep.lambda_hat > 0.0 && rep.lambda_hat < 1.0);
        assert!(rep.g >= 1.0 / 9.0 - 1e-12);
        assert!(rep.path_difference < 1e-12);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(rank_one_spectrum(&DMatrix::identity(3, 1), 1.0).is_err());
        assert!(rank_one_spectrum(&DMatrix::zeros(2, 3), 1.0).is_err());
        assert!(rank_one_spectrum(&DMatrix::zeros(3, 2), 1.0).is_err());
    }

    #[test]
    fn full_data_identity() {
        let rep = linear_region_check(0.25, 0.0, &data(3, 3, 1.0, 3), 1024, 4).unwrap();
        assert!(rep.identity_error < 1e-8);
        assert_eq!(rep.multiplicity_observed, 3);
    }

    #[test]
    fn affine_multiplicity() {
        for &n in &[2usize, 5, 8] {
            let rep = linear_region_check(0.25, 0.5, &data(10, n, 1.0, 10 + n as u64), 4096, 5).unwrap();
            assert!(rep.norm_condition && rep.bias_condition, "{rep:?}");
            assert_eq!(rep.multiplicity_observed, n - 1);
        }
    }

    #[test]
    fn bias_condition_fails_at_large_radius() {
        let rep = linear_region_check(0.25, 0.5, &data(10, 4, 20.0, 6), 4096, 6).unwrap();
        assert!(!rep.bias_condition, "{} {} {}", rep.bias_norm, rep.bias_threshold, rep.delta);
    }

    #[test]
    fn rejects_more_points_than_dimensions() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.6, 0.0, 1.0, 0.8]);
        let d = Dataset::new(x).unwrap();
        assert!(matches!(linear_region_check(0.25, 0.5, &d, 64, 1), Err(NtkError::InvalidDataset(_))));
    }
}
