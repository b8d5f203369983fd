//! Kernel-regression map `f∞` and its Jacobian `J∞` at a training point, in
//! zero mode and with a finite-width realization of `f₀`.

use ntkae::data::Dataset;
use ntkae::kernels::{Kernel, KernelSystem};
use ntkae::regression::{f_infinity, jacobian_infinity, InitSurrogate};
use ntkae::rng::stream;
use ntkae::spectrum::spectrum;
use ntkae::Activation;

fn main() -> ntkae::Result<()> {
    let (n0, n, r, depth) = (16, 5, 10.0, 2);
    let data = Dataset::random_sphere(n0, n, r, &mut stream(1, &[]))?;
    let ks = KernelSystem::new(&data, Kernel::new(depth, Activation::Sigmoid))?;
    println!("gram condition {:.3e}, jitter {:e}", ks.condition(), ks.jitter());
    let x1 = data.column(0);
    for (name, init) in [
        ("zero", InitSurrogate::Zero),
        ("width 2000", InitSurrogate::finite_width(n0, 2000, depth, Activation::Sigmoid, 7)?),
    ] {
        let fx = f_infinity(&data, &ks, &init, &x1)?;
        let j = jacobian_infinity(&data, &ks, &init, &x1, false)?;
        let s = spectrum(&j)?;
        println!(
            "{name:>10}: |f(x1) - x1| = {:.2e}, largest |lambda| = {:.4}, |J|_op = {:.4}",
            (fx - &x1).norm(),
            s.largest_norm,
            s.operator_norm
        );
    }
    Ok(())
}
