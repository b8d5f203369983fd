//! Operator norm of the input-output Jacobian at initialization: concentration
//! near 1/2 for two layers and geometric decay with depth.

use ntkae::theory::{init_norm_depth_scan, InitNormConfig};

fn main() -> ntkae::Result<()> {
    let rep = init_norm_depth_scan(&InitNormConfig {
        n0: 64,
        width: 2048,
        seeds: 10,
        unit_vectors: 50,
        ..InitNormConfig::default()
    })?;
    for d in &rep.per_depth {
        println!("L = {}: mean |J0| = {:.4}, median {:.4}, bound {:.4}", d.depth, d.mean, d.median, d.bound);
    }
    for (l, q) in &rep.ratios {
        println!("median(L = {}) / median(L = {l}) = {q:.3}", l + 1);
    }
    if let Some(c) = rep.concentration {
        println!("L = 2 at 0: mean {:.4}, std {:.4}, range [{:.4}, {:.4}]", c.mean, c.std, c.min, c.max);
    }
    Ok(())
}
