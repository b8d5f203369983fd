//! Spectrum of `X(XᵀX + cB)⁻¹Xᵀ` with the all-ones `B`: `m − 1` ones and
//! `λ̂ = 1/(1 + c g)`, by direct solve and by the rank-one inverse update.

use nalgebra::DMatrix;
use ntkae::theory::rank_one_spectrum;

fn main() -> ntkae::Result<()> {
    let x = DMatrix::from_fn(6, 4, |i, j| ((i * 5 + j * 3) % 7) as f64 - 3.0 + if i == j { 2.0 } else { 0.0 });
    for c in [0.0, 0.1, 1.0, 10.0] {
        let rep = rank_one_spectrum(&x, c)?;
        let eig: Vec<String> = rep.eigenvalues.iter().map(|l| format!("{l:.4}")).collect();
        println!(
            "c = {c:<4}: lambda_hat {:.4}, eigenvalues [{}], path diff {:.1e}",
            rep.lambda_hat,
            eig.join(", "),
            rep.path_difference
        );
    }
    Ok(())
}
