//! Variance-map fixed point and the slope χ₁ for each activation, and the
//! diagonal NTK floor of 1/4 for sigmoid networks with hidden layers.

use ntkae::theory::{chi1_diagnostic, theta_diagonal_minimum};
use ntkae::Activation;

fn main() -> ntkae::Result<()> {
    for act in [Activation::Sigmoid, Activation::ErfScaledSigmoid, Activation::Erf, Activation::Tanh] {
        let rep = chi1_diagnostic(act, 1.0)?;
        println!("{act:>20}: q* = {:.6}, chi1 = {:.6}, steps {}", rep.q_star, rep.chi1, rep.q_sequence.len() - 1);
    }
    let q1: Vec<f64> = (0..=60).map(|k| 10f64.powf(-4.0 + k as f64 / 10.0)).collect();
    for depth in 1..=5 {
        println!("L = {depth}: min Theta(x, x) = {:.6}", theta_diagonal_minimum(Activation::Sigmoid, &q1, depth)?);
    }
    Ok(())
}
