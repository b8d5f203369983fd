//! Full-batch gradient descent on a wide two-layer sigmoid autoencoder, a
//! checkpoint round trip, and the trained Jacobian spectrum.
//!
//! `cargo run --release --example train_autoencoder -- [width] [r]`

use ntkae::data::Dataset;
use ntkae::net::{NetworkParams, TrainConfig};
use ntkae::rng::stream;
use ntkae::spectrum::spectrum;
use ntkae::Activation;

fn main() -> ntkae::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let width: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let r: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(20.0);
    let data = Dataset::random_sphere(32, 5, r, &mut stream(3, &[0]))?;
    let net = NetworkParams::autoencoder(32, width, 2, Activation::Sigmoid, &mut stream(3, &[1]))?;
    let rep = net.train(&data, &TrainConfig { max_iter: 50_000, ..TrainConfig::default() })?;
    for (it, loss) in rep.loss_trace.iter().step_by((rep.loss_trace.len() / 8).max(1)) {
        println!("step {it:>6}: loss {loss:.3e}");
    }
    println!("converged {} after {} steps, final loss {:.3e}", rep.converged, rep.iterations, rep.final_loss);

    let path = std::env::temp_dir().join("ntkae-example.ckpt");
    rep.params.save(&path)?;
    let back = NetworkParams::load(&path)?;
    let s = spectrum(&back.jacobian(&data.column(0))?)?;
    println!("reloaded {:?}; largest |lambda| at x1 = {:.4}", back.dims(), s.largest_norm);
    Ok(())
}
