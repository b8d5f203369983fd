//! Kernel-regression solution of a gradient-flow-trained network in the NTK limit.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::activation::Activation;
use crate::data::Dataset;
use crate::error::{NtkError, Result};
use crate::kernels::KernelSystem;
use crate::net::NetworkParams;

/// Realization of the network at initialization, `f₀` and `J₀`.
#[derive(Debug, Clone)]
pub enum InitSurrogate {
    /// `f₀ ≡ 0`, `J₀ ≡ 0`.
    Zero,
    /// A sampled finite-width network.
    FiniteWidth(Box<NetworkParams>),
}

impl InitSurrogate {
    /// Samples an autoencoder with `depth` weight matrices and hidden width `width`.
    pub fn finite_width(n0: usize, width: usize, depth: usize, act: Activation, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(InitSurrogate::FiniteWidth(Box::new(NetworkParams::autoencoder(n0, width, depth, act, &mut rng)?)))
    }

    pub fn network(&self) -> Option<&NetworkParams> {
        match self {
            InitSurrogate::Zero => None,
            InitSurrogate::FiniteWidth(p) => Some(p),
        }
    }

    pub fn f0(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            InitSurrogate::Zero => Ok(DVector::zeros(x.len())),
            InitSurrogate::FiniteWidth(p) => p.apply(x),
        }
    }

    /// `f₀` on every column.
    pub fn f0_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            InitSurrogate::Zero => Ok(DMatrix::zeros(x.nrows(), x.ncols())),
            InitSurrogate::FiniteWidth(p) => p.apply_batch(x),
        }
    }

    pub fn j0(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        match self {
            InitSurrogate::Zero => Ok(DMatrix::zeros(x.len(), x.len())),
            InitSurrogate::FiniteWidth(p) => p.jacobian(x),
        }
    }
}

fn check(data: &Dataset, ks: &KernelSystem, x: &DVector<f64>) -> Result<()> {
    if ks.n() != data.n() {
        return Err(NtkError::DimensionMismatch { expected: data.n(), got: ks.n() });
    }
    if x.len() != data.n0() {
        return Err(NtkError::DimensionMismatch { expected: data.n0(), got: x.len() });
    }
    Ok(())
}

/// `f∞(x) = (X̂ − f₀(X̂)) K̃⁻¹ k_x + f₀(x)`.
pub fn f_infinity(data: &Dataset, ks: &KernelSystem, init: &InitSurrogate, x: &DVector<f64>) -> Result<DVector<f64>> {
    check(data, ks, x)?;
    let targets = data.x() - init.f0_batch(data.x())?;
    let coef = ks.solve_vec(&ks.kvec(x)?);
    Ok(targets * coef + init.f0(x)?)
}

/// `J∞(x) = (X̂ − f₀(X̂)) K̃⁻¹ ∂k_x/∂x + J₀(x)`.
///
/// With `approx_large_r` the `f₀(X̂)` correction is dropped.
pub fn jacobian_infinity(
    data: &Dataset,
    ks: &KernelSystem,
    init: &InitSurrogate,
    x: &DVector<f64>,
    approx_large_r: bool,
) -> Result<DMatrix<f64>> {
    check(data, ks, x)?;
    let (_, grad) = ks.kvec_and_gradient(x)?;
    let targets = if approx_large_r { data.x().clone() } else { data.x() - init.f0_batch(data.x())? };
    Ok(targets * ks.solve(&grad) + init.j0(x)?)
}
