//! Two-layer NTK of the erf-scaled sigmoid: closed form, quadrature recursion
//! and gradient for a pair of inputs at several radii.

use nalgebra::DVector;
use ntkae::kernels::closed_form::closed_form_ntk_2layer;
use ntkae::kernels::{ntk_gradient, ntk_recursion, GradientMode};
use ntkae::Activation;

fn main() -> ntkae::Result<()> {
    let n0 = 32;
    let a = DVector::from_fn(n0, |i, _| (i * 7 % 5) as f64 - 2.0);
    let b = DVector::from_fn(n0, |i, _| (i * 3 % 4) as f64 - 1.5);
    println!("{:>8} {:>14} {:>14} {:>12}", "r", "closed form", "quadrature", "|grad|");
    for r in [0.1, 1.0, 10.0, 100.0, 1000.0] {
        let (x, y) = (a.normalize() * r, b.normalize() * r);
        let cf = closed_form_ntk_2layer(&x, &y)?;
        let q = ntk_recursion(&x, &y, 2, Activation::ErfScaledSigmoid)?.theta();
        let g = ntk_gradient(&x, &y, GradientMode::ClosedForm)?;
        println!("{r:>8} {cf:>14.10} {q:>14.10} {:>12.3e}", g.norm());
    }
    Ok(())
}
