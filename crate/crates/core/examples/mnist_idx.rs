//! Reads IDX images and applies per-image mean subtraction and rescaling.
//!
//! `cargo run --example mnist_idx -- path/to/train-images-idx3-ubyte`; without
//! a path a synthetic four-image file is written and read back.

use ntkae::idx::{read_idx, write_idx};

fn main() -> ntkae::Result<()> {
    let path = match std::env::args().nth(1) {
        Some(p) => p.into(),
        None => {
            let data: Vec<u8> = (0..4 * 784).map(|k| ((k % 28) * 9 + k / 784 * 5) as u8).collect();
            let p = std::env::temp_dir().join("ntkae-synthetic-idx3-ubyte");
            std::fs::write(&p, write_idx(&[4, 28, 28], &data)?)?;
            p
        }
    };
    for r in [10.0, 1000.0] {
        let batch = read_idx(&path, r, 0, 4)?;
        let norms: Vec<String> = batch.images.column_iter().map(|c| format!("{:.6}", c.norm())).collect();
        println!("r = {r}: {} images of length {}, norms [{}]", batch.len(), batch.images.nrows(), norms.join(", "));
    }
    Ok(())
}
