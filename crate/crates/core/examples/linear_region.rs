//! Small-radius regime: with the affine surrogate `x/4 + 1/2` the trained
//! Jacobian keeps `n − 1` eigenvalues at 1, plus one at `1/(1 + c g)`.

use ntkae::data::Dataset;
use ntkae::rng::stream;
use ntkae::theory::linear_region_check;

fn main() -> ntkae::Result<()> {
    for n in [2, 5, 8] {
        let data = Dataset::random_sphere(10, n, 1.0, &mut stream(5, &[n as u64]))?;
        let rep = linear_region_check(0.25, 0.5, &data, 4096, 5)?;
        println!(
            "n = {n}: {} eigenvalues near 1 (predicted {}), lambda_hat = {:.4}, |J0| = {:.3}, bias {:.3} vs threshold {:.3}",
            rep.multiplicity_observed, rep.multiplicity_predicted, rep.lambda_hat, rep.j0_norm, rep.bias_norm, rep.bias_threshold
        );
    }
    Ok(())
}
