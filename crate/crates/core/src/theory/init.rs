//! Jacobian-vector products and operator norms at random initialization.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::CheckRecord;
use crate::activation::{Activation, Profile};
use crate::error::{NtkError, Result};
use crate::kernels::{default_quadrature, diag_next};
use crate::rng::stream;

const MIN_WIDTH: usize = 32;
const ROW_BLOCK: usize = 256;

/// Second moments of `(α̂^(ℓ), ẑ^(ℓ))` at one layer.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LayerMoments {
    pub layer: usize,
    /// `E[(α̂^(ℓ))²]`; at layer 0 this is `‖x̂‖²/n₀`.
    pub e_alpha2: f64,
    /// `E[α̂^(ℓ) ẑ^(ℓ)]`; at layer 0 this is `x̂ᵀz₀/n₀`.
    pub e_alpha_z: f64,
    /// `E[(ẑ^(ℓ))²]`; at layer 0 this is `‖z₀‖²/n₀`.
    pub e_z2: f64,
}

fn slope_profile(act: Activation) -> Profile {
    let p = act.profile(1);
    Profile { lo: 0.0, hi: 0.0, radius: p.radius, pole: p.pole }
}

/// One step of the recursion: `(a, b) ~ N(0, [[qa, qab], [qab, qbb]])`,
/// `α̂ = σ(a)`, `ẑ = σ'(a) b`.
///
/// The bivariate expectations are reduced to one dimension by conditioning
/// `b` on `a`: `b | a ~ N(k a, v)` with `k = qab/qa`, `v = qbb − qab²/qa`.
fn moment_step(act: Activation, prev: LayerMoments) -> LayerMoments {
    let quad = default_quadrature();
    let (qa, qab, qbb) = (prev.e_alpha2.max(0.0), prev.e_alpha_z, prev.e_z2.max(0.0));
    let e_alpha2 = diag_next(quad, act, qa);
    let s0 = act.eval(1, 0.0);
    if qa < 1e-300 {
        return LayerMoments { layer: prev.layer + 1, e_alpha2, e_alpha_z: 0.0, e_z2: s0 * s0 * qbb };
    }
    let k = qab / qa;
    let v = (qbb - qab * k).max(0.0);
    let std = qa.sqrt();
    let prof = slope_profile(act);
    let cross = quad.expect_1d(&|u: f64| act.eval(0, u) * act.eval(1, u) * u, prof, 0.0, std);
    let z2 = quad.expect_1d(&|u: f64| act.eval(1, u).powi(2) * (k * k * u * u + v), prof, 0.0, std);
    LayerMoments { layer: prev.layer + 1, e_alpha2, e_alpha_z: k * cross, e_z2: z2 }
}

/// Analytic moments for layers `0..depth`. The output coordinates
/// `z̃^(L)` are `N(0, e_z2)` of the last entry.
pub fn layer_moments(
    act: Activation,
    depth: usize,
    x_hat: &DVector<f64>,
    z0: &DVector<f64>,
) -> Result<Vec<LayerMoments>> {
    if depth == 0 {
        return Err(NtkError::InvalidArgument("depth must be at least 1".into()));
    }
    if x_hat.len() != z0.len() {
        return Err(NtkError::DimensionMismatch { expected: x_hat.len(), got: z0.len() });
    }
    let n0 = x_hat.len() as f64;
    let mut out = vec![LayerMoments {
        layer: 0,
        e_alpha2: x_hat.norm_squared() / n0,
        e_alpha_z: x_hat.dot(z0) / n0,
        e_z2: z0.norm_squared() / n0,
    }];
    for _ in 1..depth {
        let next = moment_step(act, *out.last().expect("non-empty"));
        out.push(next);
    }
    Ok(out)
}

fn sample_block<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Samples a network with layer widths `dims` and returns `J(x̂) t` for the
/// `n₀ × k` matrix `t`.
///
/// Weights are drawn row block by row block and never stored, so the memory
/// footprint is `O(width · (k + 256))`.
fn propagate<R: Rng + ?Sized>(
    act: Activation,
    dims: &[usize],
    x_hat: &DVector<f64>,
    t: &DMatrix<f64>,
    rng: &mut R,
) -> DMatrix<f64> {
    let depth = dims.len() - 1;
    let mut h = x_hat.clone();
    let mut m = t.clone();
    for l in 0..depth {
        let n_in = h.len();
        let n_out = dims[l + 1];
        let scale = 1.0 / (n_in as f64).sqrt();
        let mut pre = DVector::zeros(n_out);
        let mut next = DMatrix::zeros(n_out, m.ncols());
        let mut start = 0;
        while start < n_out {
            let rows = ROW_BLOCK.min(n_out - start);
            let g = sample_block(rows, n_in, rng);
            pre.rows_mut(start, rows).copy_from(&(&g * &h * scale));
            next.rows_mut(start, rows).copy_from(&(&g * &m * scale));
            start += rows;
        }
        if l + 1 < depth {
            for (mut row, p) in next.row_iter_mut().zip(pre.iter()) {
                row *= act.eval(1, *p);
            }
            h = pre.map(|v| act.eval(0, v));
        }
        m = next;
    }
    m
}

/// Input-output Jacobian at `x̂` of a freshly sampled autoencoder.
pub fn sample_init_jacobian<R: Rng + ?Sized>(
    act: Activation,
    width: usize,
    depth: usize,
    x_hat: &DVector<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if depth == 0 || width == 0 || x_hat.is_empty() {
        return Err(NtkError::InvalidArgument("depth, width and input dimension must be positive".into()));
    }
    let n0 = x_hat.len();
    let mut dims = vec![n0];
    dims.extend(std::iter::repeat_n(width, depth - 1));
    dims.push(n0);
    Ok(propagate(act, &dims, x_hat, &DMatrix::identity(n0, n0), rng))
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentCheckReport {
    pub depth: usize,
    pub n0: usize,
    pub widths: Vec<usize>,
    pub analytic: Vec<LayerMoments>,
    /// `E[(ẑ^(L−1))²]`, the predicted variance of each output coordinate.
    pub predicted_variance: f64,
    pub empirical_variance: f64,
    pub empirical_mean: f64,
    pub samples: usize,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Jarque–Bera statistic; approximately χ²₂ under normality.
    pub jarque_bera: f64,
}

impl MomentCheckReport {
    pub fn relative_error(&self) -> f64 {
        (self.empirical_variance - self.predicted_variance).abs() / self.predicted_variance.abs().max(f64::MIN_POSITIVE)
    }
}

/// Samples coordinates of `J(x̂) z₀` from finite networks with hidden widths
/// `widths` (length `depth − 1`) and compares them with [`layer_moments`].
///
/// `samples` is the number of output coordinates; every network contributes `n₀`.
pub fn layer_moments_montecarlo(
    act: Activation,
    depth: usize,
    x_hat: &DVector<f64>,
    z0: &DVector<f64>,
    widths: &[usize],
    samples: usize,
    seed: u64,
) -> Result<MomentCheckReport> {
    if (z0.norm() - 1.0).abs() > 1e-10 {
        return Err(NtkError::InvalidArgument(format!("z0 must be a unit vector, norm {}", z0.norm())));
    }
    if widths.len() + 1 != depth {
        return Err(NtkError::InvalidArgument(format!(
            "expected {} hidden widths for depth {depth}, got {}",
            depth.saturating_sub(1),
            widths.len()
        )));
    }
    if let Some(w) = widths.iter().find(|&&w| w < MIN_WIDTH) {
        return Err(NtkError::InvalidArgument(format!("hidden width {w} below {MIN_WIDTH}")));
    }
    if samples < 2 {
        return Err(NtkError::InvalidArgument("need at least two samples".into()));
    }
    let analytic = layer_moments(act, depth, x_hat, z0)?;
    let n0 = x_hat.len();
    let nets = samples.div_ceil(n0);
    let t = DMatrix::from_column_slice(n0, 1, z0.as_slice());
    let dims: Vec<usize> = std::iter::once(n0).chain(widths.iter().copied()).chain(std::iter::once(n0)).collect();
    let coords: Vec<f64> = (0..nets)
        .into_par_iter()
        .flat_map_iter(|k| {
            let mut rng = stream(seed, &[k as u64]);
            let m = propagate(act, &dims, x_hat, &t, &mut rng);
            m.column(0).iter().copied().collect::<Vec<_>>()
        })
        .collect();
    let coords = &coords[..samples];
    let nf = samples as f64;
    let mean = coords.iter().sum::<f64>() / nf;
    let c2 = coords.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
    let c3 = coords.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / nf;
    let c4 = coords.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / nf;
    let skewness = c3 / c2.powf(1.5);
    let excess_kurtosis = c4 / (c2 * c2) - 3.0;
    let predicted_variance = analytic.last().expect("non-empty").e_z2;
    Ok(MomentCheckReport {
        depth,
        n0,
        widths: widths.to_vec(),
        analytic,
        predicted_variance,
        // second moment about zero: the predicted mean is 0
        empirical_variance: coords.iter().map(|v| v * v).sum::<f64>() / nf,
        empirical_mean: mean,
        samples,
        skewness,
        excess_kurtosis,
        jarque_bera: nf / 6.0 * (skewness * skewness + 0.25 * excess_kurtosis * excess_kurtosis),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct InitNormConfig {
    pub act: Activation,
    pub depths: Vec<usize>,
    pub n0: usize,
    pub width: usize,
    /// Independent networks per depth and input point.
    pub seeds: usize,
    /// Norm of the sampled inputs; `0` evaluates at `x̂ = 0`.
    pub radius: f64,
    /// Input points per network (ignored when `radius == 0`).
    pub points: usize,
    /// Random unit vectors used for the `τ` supremum.
    pub unit_vectors: usize,
    pub seed: u64,
}

impl Default for InitNormConfig {
    fn default() -> Self {
        InitNormConfig {
            act: Activation::Sigmoid,
            depths: vec![2, 3, 4],
            n0: 64,
            width: 4096,
            seeds: 20,
            radius: 0.0,
            points: 1,
            unit_vectors: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DepthSamples {
    pub depth: usize,
    pub norms: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    /// Estimated `sup E[(ẑ^(L−1))²]`.
    pub tau: f64,
    /// `c √(n₀ τ)` with the fitted `c`.
    pub bound: f64,
    /// Samples above three times `bound`.
    pub violations: usize,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Concentration {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InitJacobianReport {
    pub act: Activation,
    pub n0: usize,
    pub width: usize,
    pub per_depth: Vec<DepthSamples>,
    /// Median of `‖J‖ / √(n₀ τ)` over all samples.
    pub fitted_c: f64,
    /// `(L, median(L+1) / median(L))` for consecutive scanned depths.
    pub ratios: Vec<(usize, f64)>,
    /// Statistics at `L = 2`, `x̂ = 0`, when scanned.
    pub concentration: Option<Concentration>,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn random_unit<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 0.0 {
            return v / norm;
        }
    }
}

fn op_norm(j: &DMatrix<f64>) -> Result<f64> {
    let (rows, cols) = j.shape();
    let svd = j.clone().try_svd(false, false, f64::EPSILON, 0).ok_or(NtkError::SvdFailure { rows, cols })?;
    Ok(svd.singular_values.max())
}

/// Operator norms of `J₀` across depths, with the `τ` estimate and a fitted
/// constant for the `c √(n₀ τ)` bound.
pub fn init_norm_depth_scan(cfg: &InitNormConfig) -> Result<InitJacobianReport> {
    if cfg.depths.is_empty() || cfg.depths.contains(&0) {
        return Err(NtkError::InvalidArgument("depths must be non-empty and positive".into()));
    }
    if cfg.seeds == 0 || cfg.n0 == 0 || cfg.width < MIN_WIDTH {
        return Err(NtkError::InvalidArgument("seeds, n0 must be positive and width at least 32".into()));
    }
    if cfg.width < 1000 {
        log::warn!("width {} is below the 1e3 regime the bound is stated for", cfg.width);
    }
    let n0 = cfg.n0;
    let points: Vec<DVector<f64>> = if cfg.radius == 0.0 {
        vec![DVector::zeros(n0)]
    } else {
        (0..cfg.points.max(1)).map(|p| random_unit(n0, &mut stream(cfg.seed, &[1, p as u64])) * cfg.radius).collect()
    };

    let mut directions: Vec<DVector<f64>> =
        (0..cfg.unit_vectors).map(|k| random_unit(n0, &mut stream(cfg.seed, &[2, k as u64]))).collect();
    let w0 = sample_block(cfg.width, n0, &mut stream(cfg.seed, &[3])) / (n0 as f64).sqrt();
    let svd = w0.try_svd(false, true, f64::EPSILON, 0).ok_or(NtkError::SvdFailure { rows: cfg.width, cols: n0 })?;
    let v_t = svd.v_t.expect("requested");
    directions.extend(v_t.row_iter().map(|r| r.transpose()));

    let mut per_depth = Vec::with_capacity(cfg.depths.len());
    let mut ratios_all = Vec::new();
    for &depth in &cfg.depths {
        let jobs: Vec<(usize, usize)> = (0..points.len()).flat_map(|p| (0..cfg.seeds).map(move |s| (p, s))).collect();
        let norms: Vec<f64> = jobs
            .par_iter()
            .map(|&(p, s)| {
                let mut rng = stream(cfg.seed, &[0, depth as u64, p as u64, s as u64]);
                op_norm(&sample_init_jacobian(cfg.act, cfg.width, depth, &points[p], &mut rng)?)
            })
            .collect::<Result<_>>()?;
        // τ depends on z₀ only through x̂ᵀz₀
        let mut tau = 0.0f64;
        for x in &points {
            let mut seen: Vec<f64> = Vec::new();
            for z in &directions {
                let s = x.dot(z);
                if seen.contains(&s) {
                    continue;
                }
                seen.push(s);
                let m = layer_moments(cfg.act, depth, x, z)?;
                tau = tau.max(m.last().expect("non-empty").e_z2);
            }
        }
        let scale = (n0 as f64 * tau).sqrt();
        ratios_all.extend(norms.iter().map(|v| v / scale));
        let mean = norms.iter().sum::<f64>() / norms.len() as f64;
        per_depth.push(DepthSamples {
            depth,
            median: median(&norms),
            mean,
            norms,
            tau,
            bound: f64::NAN,
            violations: 0,
        });
    }
    let fitted_c = median(&ratios_all);
    for d in &mut per_depth {
        d.bound = fitted_c * (n0 as f64 * d.tau).sqrt();
        d.violations = d.norms.iter().filter(|&&v| v > 3.0 * d.bound).count();
        if d.violations > 0 {
            log::warn!("depth {}: {} samples exceed 3x the fitted bound {:.4}", d.depth, d.violations, d.bound);
        }
    }
    let ratios = per_depth
        .windows(2)
        .filter(|w| w[1].depth == w[0].depth + 1)
        .map(|w| (w[0].depth, w[1].median / w[0].median))
        .collect();
    let concentration = if cfg.radius == 0.0 {
        per_depth.iter().find(|d| d.depth == 2).map(|d| {
            let n = d.norms.len() as f64;
            let var = d.norms.iter().map(|v| (v - d.mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            Concentration {
                mean: d.mean,
                std: var.sqrt(),
                min: d.norms.iter().copied().fold(f64::INFINITY, f64::min),
                max: d.norms.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
    } else {
        None
    };
    Ok(InitJacobianReport { act: cfg.act, n0, width: cfg.width, per_depth, fitted_c, ratios, concentration })
}

pub(super) fn records(seed: u64) -> Result<Vec<CheckRecord>> {
    let mut out = Vec::new();
    let n0 = 8;
    let x0 = DVector::zeros(n0);
    let z0 = random_unit(n0, &mut stream(seed, &[10]));
    let m = layer_moments(Activation::Sigmoid, 2, &x0, &z0)?;
    out.push(CheckRecord::close("moments/zero-input-variance", m[1].e_z2, 1.0 / (16.0 * n0 as f64), 1e-15));
    let x = random_unit(n0, &mut stream(seed, &[11])) * 3.0;
    for depth in 1..=4 {
        let m = layer_moments(Activation::Sigmoid, depth, &x, &z0)?;
        let bound = 1.0 / (n0 as f64 * 16f64.powi(depth as i32 - 1));
        out.push(CheckRecord::at_most(
            &format!("moments/sigmoid-bound-L{depth}"),
            m.last().unwrap().e_z2,
            bound,
            1e-15,
        ));
    }
    let rep = layer_moments_montecarlo(Activation::Sigmoid, 2, &x, &z0, &[4096], 4000, seed)?;
    out.push(CheckRecord::at_most("moments/mc-relative-error", rep.relative_error(), 0.0, 0.1));
    out.push(CheckRecord::at_most("moments/mc-jarque-bera", rep.jarque_bera, 0.0, 13.8).soft());

    let scan = init_norm_depth_scan(&InitNormConfig {
        n0: 32,
        width: 1024,
        seeds: 6,
        unit_vectors: 200,
        seed,
        ..Default::default()
    })?;
    if let Some(c) = scan.concentration {
        out.push(CheckRecord::close("init-norm/norm-concentration-L2", c.mean, 0.5, 0.1).soft());
    }
    for &(l, r) in &scan.ratios {
        out.push(CheckRecord::at_most(&format!("init-norm/depth-ratio-L{l}"), r, 0.5, 0.0));
    }
    for d in &scan.per_depth {
        out.push(
            CheckRecord::at_most(&format!("init-norm/bound-violations-L{}", d.depth), d.violations as f64, 0.0, 0.0)
                .soft(),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_input_moment_is_a_sixteenth() {
        let n0 = 5;
        let z = random_unit(n0, &mut ChaCha8Rng::seed_from_u64(1));
        let m = layer_moments(Activation::Sigmoid, 2, &DVector::zeros(n0), &z).unwrap();
        assert!((m[1].e_z2 - 1.0 / 80.0).abs() < 1e-16);
        assert_eq!(m[1].e_alpha_z, 0.0);
        assert!((m[1].e_alpha2 - 0.25).abs() < 1e-15);
    }

    #[test]
    fn linear_moments_are_exact() {
        // σ = αu + β: ẑ = α b, so E[ẑ²] = α² qbb and E[α̂ẑ] = α² qab.
        let act = Activation::linear(0.7, 0.3);
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let z = DVector::from_vec(vec![0.6, 0.0, 0.8]);
        let m = layer_moments(act, 2, &x, &z).unwrap();
        let n0 = 3.0;
        assert!((m[1].e_z2 - 0.49 / n0).abs() < 1e-14);
        assert!((m[1].e_alpha_z - 0.49 * x.dot(&z) / n0).abs() < 1e-14);
        assert!((m[1].e_alpha2 - (0.49 * x.norm_squared() / n0 + 0.09)).abs() < 1e-14);
    }

    #[test]
    fn stein_identity_for_cross_moment() {
        // E[σ(a)σ'(a) b] = qab E[σ'(a)² + σ(a)σ''(a)]
        let act = Activation::Tanh;
        let x = DVector::from_vec(vec![2.0, 1.0]);
        let z = DVector::from_vec(vec![0.6, 0.8]);
        let m = layer_moments(act, 2, &x, &z).unwrap();
        let (qa, qab) = (x.norm_squared() / 2.0, x.dot(&z) / 2.0);
        let quad = default_quadrature();
        let h = |u: f64| act.eval(1, u).powi(2) + act.eval(0, u) * act.eval(2, u);
        let stein = qab * quad.expect_1d(&h, slope_profile(act), 0.0, qa.sqrt());
        assert!((m[1].e_alpha_z - stein).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_bound_across_depths() {
        let n0 = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let x = random_unit(n0, &mut rng) * rng.random_range(0.0..20.0);
            let z = random_unit(n0, &mut rng);
            let m = layer_moments(Activation::Sigmoid, 5, &x, &z).unwrap();
            for (l, mm) in m.iter().enumerate() {
                assert!(mm.e_z2 <= 1.0 / (n0 as f64 * 16f64.powi(l as i32)) + 1e-16);
            }
        }
    }

    #[test]
    fn rejects_narrow_widths_and_non_unit_z() {
        let x = DVector::zeros(3);
        let z = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!(layer_moments_montecarlo(Activation::Sigmoid, 2, &x, &z, &[16], 10, 0).is_err());
        assert!(layer_moments_montecarlo(Activation::Sigmoid, 2, &x, &(z * 2.0), &[64], 10, 0).is_err());
    }

    #[test]
    fn montecarlo_matches_recursion_at_depth_three() {
        let n0 = 4;
        let x = DVector::from_vec(vec![1.0, -1.0, 2.0, 0.5]);
        let z = random_unit(n0, &mut ChaCha8Rng::seed_from_u64(2));
        let rep = layer_moments_montecarlo(Activation::Sigmoid, 3, &x, &z, &[512, 512], 4000, 7).unwrap();
        assert!(rep.relative_error() < 0.1, "{rep:?}");
    }

    #[test]
    fn streamed_jacobian_matches_network() {
        // same draws in the same order as a materialized network
        let n0 = 3;
        let x = DVector::from_vec(vec![0.3, -1.2, 2.0]);
        let j = sample_init_jacobian(Activation::Sigmoid, 300, 3, &x, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dims = [n0, 300, 300, n0];
        let mut weights = Vec::new();
        for l in 0..3 {
            let mut w = DMatrix::zeros(dims[l + 1], dims[l]);
            let mut start = 0;
            while start < dims[l + 1] {
                let rows = ROW_BLOCK.min(dims[l + 1] - start);
                w.rows_mut(start, rows).copy_from(&sample_block(rows, dims[l], &mut rng));
                start += rows;
            }
            weights.push(w);
        }
        let net = crate::net::NetworkParams::from_weights(weights, Activation::Sigmoid).unwrap();
        assert!((net.jacobian(&x).unwrap() - j).amax() < 1e-12);
    }

    #[test]
    fn linear_two_layer_norm_near_twice_slope() {
        let alpha = 0.3;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let j = sample_init_jacobian(Activation::linear(alpha, 0.0), 2048, 2, &DVector::zeros(128), &mut rng).unwrap();
        let norm = op_norm(&j).unwrap();
        assert!((norm / (2.0 * alpha) - 1.0).abs() < 0.1, "{norm}");
    }
}
