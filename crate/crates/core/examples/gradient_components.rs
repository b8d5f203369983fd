//! The two components of the kernel gradient at large radius and the
//! bounded spike of the second one near the diagonal.

use nalgebra::DVector;
use ntkae::theory::{g2_spike, gradient_component_norms};

fn main() -> ntkae::Result<()> {
    let n0 = 32;
    let mut e1 = DVector::zeros(n0);
    e1[0] = 1.0;
    let mut e2 = DVector::zeros(n0);
    e2[1] = 1.0;
    for rho in [0.0, 0.5, 0.99, 1.0] {
        for r in [1.0, 1e2, 1e4] {
            let xi = (&e1 * rho + &e2 * (1.0f64 - rho * rho).sqrt()) * r;
            let g = gradient_component_norms(&(&e1 * r), &xi)?;
            println!("rho {rho:<5} r {r:<8} |g1| {:.3e} |g2| {:.3e} total {:.3e}", g.g1_norm, g.g2_norm, g.total_norm);
        }
    }
    let radii: Vec<f64> = (0..=200).map(|k| 10f64.powf(-1.0 + 5.0 * k as f64 / 200.0)).collect();
    if let Some((r, peak)) = g2_spike(0.999, n0, &radii) {
        println!("|g2| peaks at r = {r:.3} with {peak:.4}");
    }
    Ok(())
}
