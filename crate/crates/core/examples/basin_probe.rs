//! Basin of attraction of the training points of the NTK-limit map under
//! Gaussian perturbations of growing size.

use ntkae::attractor::{basin_probe, is_attractor, IterateConfig};
use ntkae::data::Dataset;
use ntkae::kernels::{Kernel, KernelSystem};
use ntkae::regression::{f_infinity, jacobian_infinity, InitSurrogate};
use ntkae::rng::stream;
use ntkae::spectrum::spectrum;

fn main() -> ntkae::Result<()> {
    for r in [2.0, 20.0] {
        let data = Dataset::random_sphere(16, 5, r, &mut stream(4, &[]))?;
        let ks = KernelSystem::new(&data, Kernel::ErfScaledTwoLayer)?;
        let init = InitSurrogate::Zero;
        let attractors = (0..data.n())
            .filter(|&i| {
                let j = jacobian_infinity(&data, &ks, &init, &data.column(i), false).unwrap();
                is_attractor(&spectrum(&j).unwrap(), 1e-6)
            })
            .count();
        println!("r = {r}: {attractors}/{} training points are attractors", data.n());
        let map = |x: &nalgebra::DVector<f64>| f_infinity(&data, &ks, &init, x);
        for rel in [0.0, 0.05, 0.1, 0.2] {
            let b = basin_probe(map, data.x(), rel * r, 50, 9, IterateConfig::default())?;
            println!("  sigma = {rel:.2} r: success {:.3} (diverged {})", b.success_rate, b.diverged);
        }
    }
    Ok(())
}
