//! Finite-width fully connected autoencoder in NTK parameterization.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::activation::Activation;
use crate::data::Dataset;
use crate::error::{NtkError, Result};

/// Magic bytes at the start of every checkpoint.
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NTKAE001";

/// Weights `W^(0..L)` with `W^(ℓ)` of shape `n_{ℓ+1} × n_ℓ`. Each layer applies
/// `W^(ℓ) / √n_ℓ`; hidden layers are followed by the activation, the output
/// layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    dims: Vec<usize>,
    weights: Vec<DMatrix<f64>>,
    act: Activation,
}

/// Pre-activations and activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub output: DVector<f64>,
    /// `α̃^(ℓ)` for `ℓ = 1..L`, one per weight matrix.
    pub pre: Vec<DVector<f64>>,
    /// `α^(ℓ)` for `ℓ = 0..L-1`; entry 0 is the input.
    pub post: Vec<DVector<f64>>,
}

impl NetworkParams {
    /// I.i.d. standard Gaussian weights for layer widths `dims = [n₀, n₁, …, n_L]`.
    pub fn random<R: Rng + ?Sized>(dims: &[usize], act: Activation, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(NtkError::InvalidArgument(format!("invalid layer widths {dims:?}")));
        }
        let weights = dims
            .windows(2)
            .map(|w| DMatrix::from_fn(w[1], w[0], |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        Ok(NetworkParams { dims: dims.to_vec(), weights, act })
    }

    /// Autoencoder `n₀ → width → … → width → n₀` with `depth` weight matrices.
    pub fn autoencoder<R: Rng + ?Sized>(
        n0: usize,
        width: usize,
        depth: usize,
        act: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if depth == 0 {
            return Err(NtkError::InvalidArgument("depth must be at least 1".into()));
        }
        let mut dims = vec![n0];
        dims.extend(std::iter::repeat_n(width, depth - 1));
        dims.push(n0);
        Self::random(&dims, act, rng)
    }

    pub fn from_weights(weights: Vec<DMatrix<f64>>, act: Activation) -> Result<Self> {
        if weights.is_empty() {
            return Err(NtkError::InvalidArgument("no weight matrices".into()));
        }
        let mut dims = vec![weights[0].ncols()];
        for (l, w) in weights.iter().enumerate() {
            if w.ncols() != *dims.last().expect("non-empty") {
                return Err(NtkError::DimensionMismatch { expected: dims[l], got: w.ncols() });
            }
            dims.push(w.nrows());
        }
        Ok(NetworkParams { dims, weights, act })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    pub fn activation(&self) -> Activation {
        self.act
    }

    /// Number of weight matrices `L`.
    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.dims[0] {
            return Err(NtkError::DimensionMismatch { expected: self.dims[0], got: len });
        }
        Ok(())
    }

    fn scale(&self, layer: usize) -> f64 {
        1.0 / (self.dims[layer] as f64).sqrt()
    }

    pub fn forward(&self, x: &DVector<f64>) -> Result<ForwardPass> {
        self.check_input(x.len())?;
        let depth = self.depth();
        let mut pre = Vec::with_capacity(depth);
        let mut post = vec![x.clone()];
        for l in 0..depth {
            let z = &self.weights[l] * &post[l] * self.scale(l);
            if l + 1 < depth {
                post.push(z.map(|v| self.act.eval(0, v)));
            }
            pre.push(z);
        }
        let output = pre[depth - 1].clone();
        Ok(ForwardPass { output, pre, post })
    }

    /// `f(x)`.
    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.forward(x)?.output)
    }

    /// `f` applied to every column of `x`.
    pub fn apply_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_input(x.nrows())?;
        let mut h = x.clone();
        for l in 0..self.depth() {
            h = &self.weights[l] * &h * self.scale(l);
            if l + 1 < self.depth() {
                h.apply(|v| *v = self.act.eval(0, *v));
            }
        }
        Ok(h)
    }

    /// Input-output Jacobian `∂f/∂x`.
    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let fp = self.forward(x)?;
        Ok(self.jacobian_from(&fp))
    }

    /// Jacobian from a cached forward pass.
    pub fn jacobian_from(&self, fp: &ForwardPass) -> DMatrix<f64> {
        let mut m = &self.weights[0] * self.scale(0);
        for l in 1..self.depth() {
            let slope = fp.pre[l - 1].map(|v| self.act.eval(1, v));
            for (mut row, s) in m.row_iter_mut().zip(slope.iter()) {
                row *= *s;
            }
            m = &self.weights[l] * m * self.scale(l);
        }
        m
    }

    /// Loss `(1/2n) Σ ‖f(xᵢ) − xᵢ‖²` on the columns of `x`.
    pub fn loss(&self, x: &DMatrix<f64>) -> Result<f64> {
        let out = self.apply_batch(x)?;
        Ok((out - x).norm_squared() / (2.0 * x.ncols() as f64))
    }

    /// Loss and its gradient with respect to every weight matrix.
    pub fn loss_and_gradient(&self, x: &DMatrix<f64>) -> Result<(f64, Vec<DMatrix<f64>>)> {
        self.check_input(x.nrows())?;
        let depth = self.depth();
        let n = x.ncols() as f64;
        let mut post = vec![x.clone()];
        let mut slopes = Vec::with_capacity(depth);
        let mut out = DMatrix::zeros(0, 0);
        for l in 0..depth {
            let z = &self.weights[l] * &post[l] * self.scale(l);
            if l + 1 < depth {
                slopes.push(z.map(|v| self.act.eval(1, v)));
                post.push(z.map(|v| self.act.eval(0, v)));
            } else {
                out = z;
            }
        }
        let resid = out - x;
        let loss = resid.norm_squared() / (2.0 * n);
        let mut delta = resid / n;
        let mut grads = vec![DMatrix::zeros(0, 0); depth];
        for l in (0..depth).rev() {
            let s = self.scale(l);
            grads[l] = &delta * post[l].transpose() * s;
            if l > 0 {
                let mut back = self.weights[l].transpose() * &delta * s;
                back.component_mul_assign(&slopes[l - 1]);
                delta = back;
            }
        }
        Ok((loss, grads))
    }

    /// Full-batch gradient descent on the autoencoding loss over `data`.
    pub fn train(&self, data: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
        cfg.validate()?;
        let x = data.x();
        let mut params = self.clone();
        let mut trace = Vec::new();
        let mut prev = f64::INFINITY;
        let mut increases = 0usize;
        for it in 0..=cfg.max_iter {
            let (loss, grads) = params.loss_and_gradient(x)?;
            if !loss.is_finite() {
                return Err(NtkError::Diverged { iteration: it, loss });
            }
            if it % cfg.log_every == 0 {
                trace.push((it, loss));
                log::debug!("iteration {it}: loss {loss:e}");
            }
            if loss < cfg.threshold {
                if trace.last().map(|t| t.0) != Some(it) {
                    trace.push((it, loss));
                }
                return Ok(TrainReport {
                    params,
                    loss_trace: trace,
                    converged: true,
                    iterations: it,
                    final_loss: loss,
                    loss_increases: increases,
                });
            }
            if it == cfg.max_iter {
                if trace.last().map(|t| t.0) != Some(it) {
                    trace.push((it, loss));
                }
                return Ok(TrainReport {
                    params,
                    loss_trace: trace,
                    converged: false,
                    iterations: it,
                    final_loss: loss,
                    loss_increases: increases,
                });
            }
            if loss > prev {
                increases += 1;
                log::warn!("loss increased at iteration {it}: {prev:e} -> {loss:e}");
            }
            prev = loss;
            for (w, g) in params.weights.iter_mut().zip(&grads) {
                *w -= g * cfg.learning_rate;
            }
        }
        unreachable!("loop returns at max_iter")
    }

    /// Writes the binary checkpoint format.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&self.act.tag().to_le_bytes())?;
        let (slope, intercept) = self.act.affine_params();
        w.write_all(&slope.to_le_bytes())?;
        w.write_all(&intercept.to_le_bytes())?;
        w.write_all(&(self.depth() as u32).to_le_bytes())?;
        for &d in &self.dims {
            let d = u32::try_from(d).map_err(|_| NtkError::Checkpoint(format!("width {d} exceeds u32")))?;
            w.write_all(&d.to_le_bytes())?;
        }
        for m in &self.weights {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    w.write_all(&m[(i, j)].to_le_bytes())?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic, "magic")?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(NtkError::Checkpoint(format!("bad magic {magic:?}")));
        }
        let tag = read_u32(&mut r, "activation tag")?;
        let slope = read_f64(&mut r, "slope")?;
        let intercept = read_f64(&mut r, "intercept")?;
        let act = Activation::from_tag(tag, slope, intercept)
            .ok_or_else(|| NtkError::Checkpoint(format!("unknown activation tag {tag}")))?;
        let depth = read_u32(&mut r, "depth")? as usize;
        if depth == 0 || depth > 1024 {
            return Err(NtkError::Checkpoint(format!("implausible depth {depth}")));
        }
        let mut dims = Vec::with_capacity(depth + 1);
        for _ in 0..=depth {
            dims.push(read_u32(&mut r, "layer width")? as usize);
        }
        let mut weights = Vec::with_capacity(depth);
        for l in 0..depth {
            let (rows, cols) = (dims[l + 1], dims[l]);
            let mut buf = vec![0u8; rows * cols * 8];
            read_exact(&mut r, &mut buf, "weights")?;
            let vals: Vec<f64> =
                buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            weights.push(DMatrix::from_row_slice(rows, cols, &vals));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(NtkError::Checkpoint("trailing bytes after weights".into()));
        }
        NetworkParams::from_weights(weights, act)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_checkpoint(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_checkpoint(BufReader::new(File::open(path)?))
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => NtkError::Checkpoint(format!("truncated while reading {what}")),
        _ => NtkError::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R, what: &str) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, what)?;
    Ok(f64::from_le_bytes(b))
}

/// Gradient-descent settings.
#[derive(Debug, Clone, Serialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Training stops once the loss drops below this.
    pub threshold: f64,
    pub max_iter: usize,
    pub log_every: usize,
    /// Seed for weight initialization when a run builds its own network.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 1.0, threshold: 1e-7, max_iter: 500_000, log_every: 100, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(NtkError::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.threshold > 0.0) {
            return Err(NtkError::InvalidArgument(format!("threshold must be positive, got {}", self.threshold)));
        }
        if self.log_every == 0 {
            return Err(NtkError::InvalidArgument("log_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of a training run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub params: NetworkParams,
    /// `(iteration, loss)` every `log_every` steps plus the final step.
    pub loss_trace: Vec<(usize, f64)>,
    pub converged: bool,
    /// Gradient steps taken.
    pub iterations: usize,
    pub final_loss: f64,
    /// Steps at which the loss went up.
    pub loss_increases: usize,
}
