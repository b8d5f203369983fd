//! An antipodal pair `x, −x` in the training set at large radius: the kernel
//! block structure and the resulting `‖J∞‖ ≤ 1/2` limit.

use ntkae::rng::stream;
use ntkae::theory::{antipodal_dataset, parallel_inputs_check};

fn main() -> ntkae::Result<()> {
    for r in [10.0, 1e2, 1e3, 1e4] {
        let data = antipodal_dataset(32, 4, r, &mut stream(8, &[]))?;
        let rep = parallel_inputs_check(&data)?;
        println!(
            "r = {r:<6}: K_12 / (-I_k) = {:.4}, sigma part {:.2e}, |J_inf|_op = {:.4}",
            rep.pair_entry_ratio, rep.pair_sigma_part, rep.j_inf_norm
        );
    }
    Ok(())
}
