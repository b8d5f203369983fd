//! Covariance and NTK recursions, the two-layer erf closed form and kernel
//! systems built on a dataset.

pub mod closed_form;
mod system;

use std::sync::OnceLock;

use nalgebra::DVector;
use serde::Serialize;

use crate::activation::{Activation, Profile};
use crate::error::{NtkError, Result};
use crate::quadrature::Quadrature;

pub use closed_form::{closed_form_gradient, closed_form_gradient_components, closed_form_ntk_2layer};
pub use system::{gram_and_kvec, Kernel, KernelSystem};

/// Correlations this close to ±1 are clamped.
const MAX_CORRELATION: f64 = 1.0 - 1e-12;
const PSD_TOLERANCE: f64 = 1e-10;

/// Shared default quadrature.
pub fn default_quadrature() -> &'static Quadrature {
    static Q: OnceLock<Quadrature> = OnceLock::new();
    Q.get_or_init(Quadrature::default)
}

/// A 2×2 Gaussian covariance `[[q_aa, q_ab], [q_ab, q_bb]]` at some layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovPair {
    pub q_aa: f64,
    pub q_ab: f64,
    pub q_bb: f64,
    pub layer: usize,
}

impl CovPair {
    pub fn new(q_aa: f64, q_ab: f64, q_bb: f64) -> Self {
        CovPair { q_aa, q_ab, q_bb, layer: 1 }
    }

    /// Checks PSD-ness up to a relative tolerance and clamps the correlation.
    pub fn validated(&self) -> Result<CovPair> {
        let CovPair { q_aa, q_ab, q_bb, layer } = *self;
        let bad = !(q_aa.is_finite() && q_ab.is_finite() && q_bb.is_finite())
            || q_aa < 0.0
            || q_bb < 0.0
            || q_ab * q_ab > q_aa * q_bb * (1.0 + PSD_TOLERANCE) + f64::MIN_POSITIVE;
        if bad {
            return Err(NtkError::NotPsd { q_aa, q_ab, q_bb });
        }
        let bound = (q_aa * q_bb).sqrt() * MAX_CORRELATION;
        Ok(CovPair { q_aa, q_ab: q_ab.clamp(-bound, bound), q_bb, layer })
    }

    pub fn correlation(&self) -> f64 {
        let d = (self.q_aa * self.q_bb).sqrt();
        if d > 0.0 {
            self.q_ab / d
        } else {
            0.0
        }
    }
}

/// `E[σ^(f)(u) σ^(g)(v)]` for `(u, v) ~ N(0, cov)`.
pub fn t_operator(cov: CovPair, f_order: u8, g_order: u8, act: Activation) -> Result<f64> {
    t_operator_with(default_quadrature(), cov, f_order, g_order, act)
}

pub fn t_operator_with(quad: &Quadrature, cov: CovPair, f_order: u8, g_order: u8, act: Activation) -> Result<f64> {
    if f_order > 3 || g_order > 3 {
        return Err(NtkError::InvalidArgument(format!("derivative orders ({f_order}, {g_order}) outside 0..=3")));
    }
    let c = cov.validated()?;
    let f = |u: f64| act.eval(f_order, u);
    let g = |v: f64| act.eval(g_order, v);
    Ok(quad.expect_2d(&f, act.profile(f_order), &g, act.profile(g_order), c.q_aa, c.q_ab, c.q_bb))
}

/// `E[σ(√q z)²]`, the diagonal of the next covariance.
pub(crate) fn diag_next(quad: &Quadrature, act: Activation, q: f64) -> f64 {
    let p = act.profile(0);
    let sq = Profile { lo: p.lo * p.lo, hi: p.hi * p.hi, radius: p.radius, pole: p.pole };
    quad.expect_1d(&|u: f64| act.eval(0, u).powi(2), sq, 0.0, q.max(0.0).sqrt())
}

/// `d/dq E[σ(√q z)²] = E[σ'² + σσ'']`.
fn diag_next_slope(quad: &Quadrature, act: Activation, q: f64) -> f64 {
    let p = act.profile(1);
    let h = |u: f64| act.eval(1, u).powi(2) + act.eval(0, u) * act.eval(2, u);
    quad.expect_1d(&h, Profile { lo: 0.0, hi: 0.0, radius: p.radius, pole: p.pole }, 0.0, q.max(0.0).sqrt())
}

/// One layer of the NTK recursion.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LayerTerms {
    /// `(Σ(x̂,x̂), Σ(x̂,x), Σ(x,x))` at this layer.
    pub cov: CovPair,
    /// `Σ̇(x̂, x)`; absent at the first layer.
    pub sigma_dot: Option<f64>,
    pub theta: f64,
}

/// Full recursion trace, one entry per layer `1..=L`.
#[derive(Debug, Clone, Serialize)]
pub struct NtkTrace {
    pub layers: Vec<LayerTerms>,
}

impl NtkTrace {
    /// `Θ^(L)(x̂, x)`.
    pub fn theta(&self) -> f64 {
        self.layers.last().map(|l| l.theta).unwrap_or(f64::NAN)
    }
}

fn check_inputs(x_hat: &DVector<f64>, x: &DVector<f64>, depth: usize) -> Result<()> {
    if depth == 0 {
        return Err(NtkError::InvalidArgument("depth must be at least 1".into()));
    }
    if x_hat.len() != x.len() {
        return Err(NtkError::DimensionMismatch { expected: x_hat.len(), got: x.len() });
    }
    if x.is_empty() {
        return Err(NtkError::InvalidArgument("input dimension must be at least 1".into()));
    }
    Ok(())
}

/// `Σ^(ℓ)`, `Σ̇^(ℓ)`, `Θ^(ℓ)` for `ℓ = 1..=depth`.
pub fn ntk_recursion(x_hat: &DVector<f64>, x: &DVector<f64>, depth: usize, act: Activation) -> Result<NtkTrace> {
    ntk_recursion_with(default_quadrature(), x_hat, x, depth, act)
}

pub fn ntk_recursion_with(
    quad: &Quadrature,
    x_hat: &DVector<f64>,
    x: &DVector<f64>,
    depth: usize,
    act: Activation,
) -> Result<NtkTrace> {
    check_inputs(x_hat, x, depth)?;
    let n0 = x.len() as f64;
    let mut cov =
        CovPair { q_aa: x_hat.norm_squared() / n0, q_ab: x_hat.dot(x) / n0, q_bb: x.norm_squared() / n0, layer: 1 };
    let mut theta = cov.q_ab;
    let mut layers = vec![LayerTerms { cov, sigma_dot: None, theta }];
    for layer in 2..=depth {
        let sigma = t_operator_with(quad, cov, 0, 0, act)?;
        let sigma_dot = t_operator_with(quad, cov, 1, 1, act)?;
        theta = theta * sigma_dot + sigma;
        cov =
            CovPair { q_aa: diag_next(quad, act, cov.q_aa), q_ab: sigma, q_bb: diag_next(quad, act, cov.q_bb), layer };
        layers.push(LayerTerms { cov, sigma_dot: Some(sigma_dot), theta });
    }
    Ok(NtkTrace { layers })
}

/// `Θ^(L)(x̂, x)` and `∂Θ^(L)(x̂, x)/∂x` by forward tangent propagation through
/// the recursion, using `∂/∂q_ab E[fg] = E[f'g']` and `∂/∂q_bb E[fg] = ½E[f g'']`.
pub fn ntk_value_and_gradient(
    x_hat: &DVector<f64>,
    x: &DVector<f64>,
    depth: usize,
    act: Activation,
) -> Result<(f64, DVector<f64>)> {
    ntk_value_and_gradient_with(default_quadrature(), x_hat, x, depth, act)
}

pub fn ntk_value_and_gradient_with(
    quad: &Quadrature,
    x_hat: &DVector<f64>,
    x: &DVector<f64>,
    depth: usize,
    act: Activation,
) -> Result<(f64, DVector<f64>)> {
    check_inputs(x_hat, x, depth)?;
    let n0 = x.len() as f64;
    let mut cov = CovPair::new(x_hat.norm_squared() / n0, x_hat.dot(x) / n0, x.norm_squared() / n0);
    let mut d_ab: DVector<f64> = x_hat / n0;
    let mut d_bb: DVector<f64> = x * (2.0 / n0);
    let mut theta = cov.q_ab;
    let mut d_theta = d_ab.clone();
    for layer in 2..=depth {
        let t = |f, g| t_operator_with(quad, cov, f, g, act);
        let sigma = t(0, 0)?;
        let sigma_dot = t(1, 1)?;
        let sigma_ddot = t(2, 2)?;
        let t02 = t(0, 2)?;
        let t13 = t(1, 3)?;
        let d_sigma = &d_ab * sigma_dot + &d_bb * (0.5 * t02);
        let d_sigma_dot = &d_ab * sigma_ddot + &d_bb * (0.5 * t13);
        d_theta = &d_theta * sigma_dot + &d_sigma_dot * theta + &d_sigma;
        theta = theta * sigma_dot + sigma;
        if layer < depth {
            let slope_bb = diag_next_slope(quad, act, cov.q_bb);
            d_bb *= slope_bb;
            d_ab = d_sigma;
            cov = CovPair {
                q_aa: diag_next(quad, act, cov.q_aa),
                q_ab: sigma,
                q_bb: diag_next(quad, act, cov.q_bb),
                layer,
            };
        }
    }
    Ok((theta, d_theta))
}

/// How `∂Θ/∂x` is evaluated for a two-layer network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientMode {
    /// Closed form for the erf-scaled sigmoid.
    ClosedForm,
    /// Four-term expectation formula, any activation.
    Generic(Activation),
}

/// `∂Θ^(2)(x̂, x)/∂x`.
pub fn ntk_gradient(x_hat: &DVector<f64>, x: &DVector<f64>, mode: GradientMode) -> Result<DVector<f64>> {
    match mode {
        GradientMode::ClosedForm => closed_form_gradient(x_hat, x),
        GradientMode::Generic(act) => Ok(ntk_value_and_gradient(x_hat, x, 2, act)?.1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use closed_form::*;
    use std::f64::consts::PI;

    fn vec(v: &[f64]) -> DVector<f64> {
        DVector::from_vec(v.to_vec())
    }

    #[test]
    fn zero_covariance_is_a_point_mass() {
        let v = t_operator(CovPair::new(0.0, 0.0, 0.0), 0, 0, Activation::Sigmoid).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
    }

    #[test]
    fn erf_closed_forms() {
        let v = t_operator(CovPair::new(1.0, 0.0, 1.0), 1, 1, Activation::Erf).unwrap();
        assert!((v - 4.0 / (3.0 * PI)).abs() < 1e-8);
        let v = t_operator(CovPair::new(1.0, 1.0, 1.0), 0, 0, Activation::Erf).unwrap();
        assert!((v - 2.0 / PI * (2.0f64 / 3.0).asin()).abs() < 1e-8);
    }

    #[test]
    fn non_psd_is_rejected() {
        let err = t_operator(CovPair::new(1.0, 2.0, 1.0), 0, 0, Activation::Tanh).unwrap_err();
        assert!(matches!(err, NtkError::NotPsd { .. }));
        assert!(t_operator(CovPair::new(1.0, 0.0, 1.0), 4, 0, Activation::Tanh).is_err());
    }

    #[test]
    fn wide_covariances_match_erf_scaled_closed_form() {
        let act = Activation::ErfScaledSigmoid;
        for &(a, rho, c) in
            &[(0.5f64, 0.3, 2.0f64), (40.0, -0.8, 900.0), (1e4, 0.999, 1e4), (3e3, 1.0, 3e3), (7.0, 0.2, 5e3)]
        {
            let b = rho * (a * c).sqrt();
            let cov = CovPair::new(a, b, c);
            let v00 = t_operator(cov, 0, 0, act).unwrap();
            let v11 = t_operator(cov, 1, 1, act).unwrap();
            assert!((v00 - erf_scaled_t00(a, b, c)).abs() < 1e-10, "t00 {a} {b} {c}: {v00}");
            assert!((v11 - erf_scaled_t11(a, b, c)).abs() < 1e-10, "t11 {a} {b} {c}: {v11}");
        }
    }

    #[test]
    fn depth_one_is_the_normalized_inner_product() {
        let x = vec(&[1.0, -1.0, 1.0, 1.0]);
        let tr = ntk_recursion(&x, &x, 1, Activation::Sigmoid).unwrap();
        assert_eq!(tr.theta(), 1.0);
    }

    #[test]
    fn zero_inputs_give_quarter_at_depth_two() {
        let z = DVector::zeros(3);
        let tr = ntk_recursion(&z, &z, 2, Activation::Sigmoid).unwrap();
        assert!((tr.theta() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn recursion_matches_closed_form() {
        let xh = vec(&[3.0, -2.0, 0.5, 7.0]);
        let x = vec(&[-1.0, 4.0, 2.0, 6.5]);
        let tr = ntk_recursion(&xh, &x, 2, Activation::ErfScaledSigmoid).unwrap();
        let cf = closed_form_ntk_2layer(&xh, &x).unwrap();
        assert!((tr.theta() - cf).abs() < 1e-10);
    }

    #[test]
    fn generic_gradient_matches_closed_form() {
        let xh = vec(&[3.0, -2.0, 0.5, 7.0]);
        let x = vec(&[-1.0, 4.0, 2.0, 6.5]);
        let a = ntk_gradient(&xh, &x, GradientMode::ClosedForm).unwrap();
        let b = ntk_gradient(&xh, &x, GradientMode::Generic(Activation::ErfScaledSigmoid)).unwrap();
        assert!((a - &b).norm() < 1e-9 * b.norm());
    }

    #[test]
    fn deep_gradient_matches_finite_differences() {
        let xh = vec(&[1.0, -2.0, 0.5]);
        let x = vec(&[-0.3, 1.4, 2.0]);
        for act in [Activation::Sigmoid, Activation::Tanh, Activation::linear(0.7, 0.2)] {
            for depth in 1..=4 {
                let (v, g) = ntk_value_and_gradient(&xh, &x, depth, act).unwrap();
                let tr = ntk_recursion(&xh, &x, depth, act).unwrap();
                assert!((v - tr.theta()).abs() < 1e-13);
                let h = 1e-5;
                for k in 0..3 {
                    let mut xp = x.clone();
                    xp[k] += h;
                    let mut xm = x.clone();
                    xm[k] -= h;
                    let fd = (ntk_recursion(&xh, &xp, depth, act).unwrap().theta()
                        - ntk_recursion(&xh, &xm, depth, act).unwrap().theta())
                        / (2.0 * h);
                    assert!((fd - g[k]).abs() < 1e-7 * (1.0 + g.norm()), "{act} L={depth} k={k}: {fd} vs {}", g[k]);
                }
            }
        }
    }
}
