//! Closed forms available for the erf family.

use nalgebra::DVector;

use crate::activation::FRAC_1_2PI;
use crate::error::{NtkError, Result};

fn clamp_unit(v: f64) -> f64 {
    v.clamp(-1.0, 1.0)
}

/// `E[σ̂(u) σ̂(v)]` for the erf-scaled sigmoid.
pub fn erf_scaled_t00(q_aa: f64, q_ab: f64, q_bb: f64) -> f64 {
    0.25 + FRAC_1_2PI * clamp_unit(q_ab / ((q_aa + 2.0) * (q_bb + 2.0)).sqrt()).asin()
}

/// `E[σ̂'(u) σ̂'(v)]` for the erf-scaled sigmoid.
pub fn erf_scaled_t11(q_aa: f64, q_ab: f64, q_bb: f64) -> f64 {
    FRAC_1_2PI / ((2.0 + q_aa) * (2.0 + q_bb) - q_ab * q_ab).sqrt()
}

/// `E[erf(u) erf(v)]`.
pub fn erf_t00(q_aa: f64, q_ab: f64, q_bb: f64) -> f64 {
    std::f64::consts::FRAC_2_PI * clamp_unit(2.0 * q_ab / ((1.0 + 2.0 * q_aa) * (1.0 + 2.0 * q_bb)).sqrt()).asin()
}

/// `E[erf'(u) erf'(v)] = (4/π) det(I + 2Σ)^{-1/2}`.
pub fn erf_t11(q_aa: f64, q_ab: f64, q_bb: f64) -> f64 {
    let det = (1.0 + 2.0 * q_aa) * (1.0 + 2.0 * q_bb) - 4.0 * q_ab * q_ab;
    4.0 / std::f64::consts::PI / det.sqrt()
}

struct Inner {
    p: f64,
    aa: f64,
    bb: f64,
    n0: f64,
}

impl Inner {
    fn new(x_hat: &DVector<f64>, x: &DVector<f64>) -> Result<Self> {
        if x_hat.len() != x.len() {
            return Err(NtkError::DimensionMismatch { expected: x_hat.len(), got: x.len() });
        }
        if x.is_empty() {
            return Err(NtkError::InvalidArgument("input dimension must be at least 1".into()));
        }
        Ok(Inner { p: x_hat.dot(x), aa: x_hat.norm_squared(), bb: x.norm_squared(), n0: x.len() as f64 })
    }

    /// `(x̂ᵀx̂ + 2n₀)(xᵀx + 2n₀)`
    fn d(&self) -> f64 {
        (self.aa + 2.0 * self.n0) * (self.bb + 2.0 * self.n0)
    }
}

/// Two-layer NTK of the erf-scaled sigmoid, `n₀` taken from the input length.
pub fn closed_form_ntk_2layer(x_hat: &DVector<f64>, x: &DVector<f64>) -> Result<f64> {
    let s = Inner::new(x_hat, x)?;
    let d = s.d();
    let e = d - s.p * s.p;
    if e <= 0.0 {
        return Err(NtkError::Degenerate(format!("closed-form NTK undefined, discriminant {e}")));
    }
    Ok(FRAC_1_2PI * s.p / e.sqrt() + FRAC_1_2PI * clamp_unit(s.p / d.sqrt()).asin() + 0.25)
}

/// The arcsin and rational parts of `∂Θ(x̂, x)/∂x`, in that order.
pub fn closed_form_gradient_components(x_hat: &DVector<f64>, x: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let s = Inner::new(x_hat, x)?;
    let d = s.d();
    let e = d - s.p * s.p;
    if e <= 0.0 {
        return Err(NtkError::Degenerate(format!("closed-form NTK undefined, discriminant {e}")));
    }
    let ahat = s.aa + 2.0 * s.n0;
    // 1/sqrt(1 - A²) = sqrt(D / E)
    let g1 = (x_hat * d - x * (s.p * ahat)) * (FRAC_1_2PI / (d * e.sqrt()));
    let g2 = (x_hat * e - (x * ahat - x_hat * s.p) * s.p) * (FRAC_1_2PI / e.powf(1.5));
    Ok((g1, g2))
}

/// `∂Θ(x̂, x)/∂x` for the two-layer erf-scaled sigmoid NTK.
pub fn closed_form_gradient(x_hat: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
    let (g1, g2) = closed_form_gradient_components(x_hat, x)?;
    Ok(g1 + g2)
}

/// `‖I^g₂(xᵢ, x₁)‖²` for `‖xᵢ‖ = ‖x₁‖ = r` and cosine `ρ`, from the
/// unexpanded numerator.
pub fn g2_norm_sq(rho: f64, r: f64, n0: f64) -> f64 {
    let r2 = r * r;
    let m = r2 + 2.0 * n0;
    let rho2 = rho * rho;
    let num = r2 * (m.powi(4) + r2 * r2 * rho2 * m * m - 2.0 * r2 * rho2 * m.powi(3));
    FRAC_1_2PI * FRAC_1_2PI * num / (m * m - r2 * r2 * rho2).powi(3)
}

/// The same quantity as a polynomial in `r²` over a cubed denominator.
///
/// The printed polynomial form drops an overall factor `r²`; it is restored here.
pub fn g2_norm_sq_expanded(rho: f64, r: f64, n0: f64) -> f64 {
    let r2 = r * r;
    let rho2 = rho * rho;
    let inner = n0 * (8.0 - 8.0 * rho2) + r2 * (1.0 - rho2);
    let inner = n0 * n0 * (24.0 - 20.0 * rho2) + r2 * inner;
    let inner = n0.powi(3) * (32.0 - 16.0 * rho2) + r2 * inner;
    let num = 16.0 * n0.powi(4) + r2 * inner;
    let den = r2 * r2 * (1.0 - rho2) + 4.0 * n0 * r2 + 4.0 * n0 * n0;
    r2 * FRAC_1_2PI * FRAC_1_2PI * num / den.powi(3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn erf_derivative_at_identity() {
        assert!((erf_t11(1.0, 0.0, 1.0) - 4.0 / (3.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_inputs_give_quarter() {
        let a = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let b = DVector::from_vec(vec![0.0, 5.0, 0.0]);
        assert!((closed_form_ntk_2layer(&a, &b).unwrap() - 0.25).abs() < 1e-15);
        let z = DVector::zeros(3);
        assert!((closed_form_ntk_2layer(&a, &z).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn large_radius_diagonal() {
        let n0 = 32;
        let mut x = DVector::zeros(n0);
        x[0] = 1000.0;
        let v = closed_form_ntk_2layer(&x, &x).unwrap();
        assert!((v - 14.57).abs() < 0.01, "{v}");
        let asym = 1000.0 / (4.0 * PI * (n0 as f64).sqrt());
        assert!((v / asym - 1.0).abs() < 0.05);
    }

    #[test]
    fn expanded_g2_norm_matches_unexpanded() {
        for &(rho, r) in &[(0.0, 1.0), (0.3, 5.0), (-0.7, 40.0), (0.999, 300.0)] {
            let a = g2_norm_sq(rho, r, 32.0);
            let b = g2_norm_sq_expanded(rho, r, 32.0);
            assert!((a - b).abs() <= 1e-12 * a.abs(), "{rho} {r}: {a} vs {b}");
        }
    }

    #[test]
    fn g2_norm_matches_vector_form() {
        let n0 = 6;
        let r = 7.0;
        let x1 = DVector::from_fn(n0, |i, _| if i == 0 { r } else { 0.0 });
        let theta: f64 = 1.1;
        let xi = DVector::from_fn(n0, |i, _| match i {
            0 => r * theta.cos(),
            1 => r * theta.sin(),
            _ => 0.0,
        });
        let (_, g2) = closed_form_gradient_components(&xi, &x1).unwrap();
        let a = g2_norm_sq(theta.cos(), r, n0 as f64);
        assert!((g2.norm_squared() - a).abs() < 1e-14, "{} vs {a}", g2.norm_squared());
    }

    #[test]
    fn gradient_at_zero_is_parallel_to_x_hat() {
        let xh = DVector::from_vec(vec![0.3, -1.2, 2.0, 0.5]);
        let g = closed_form_gradient(&xh, &DVector::zeros(4)).unwrap();
        let cos = g.dot(&xh) / (g.norm() * xh.norm());
        assert!((cos.abs() - 1.0).abs() < 1e-12);
    }
}
