use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rayon::prelude::*;

use super::{closed_form, ntk_recursion, ntk_value_and_gradient};
use crate::activation::Activation;
use crate::data::Dataset;
use crate::error::{NtkError, Result};

const JITTERS: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

/// A two-point kernel `Θ(x̂, x)` together with its gradient in `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// Quadrature recursion at any depth.
    Recursion { depth: usize, act: Activation },
    /// Two-layer erf-scaled sigmoid in closed form.
    ErfScaledTwoLayer,
    /// Two-layer affine activation: `(2α²/n₀) x̂ᵀx + β²`.
    AffineTwoLayer { slope: f64, intercept: f64 },
}

impl Kernel {
    /// Uses a closed form whenever one exists.
    pub fn new(depth: usize, act: Activation) -> Self {
        match (depth, act) {
            (2, Activation::ErfScaledSigmoid) => Kernel::ErfScaledTwoLayer,
            (2, Activation::Linear { slope, intercept }) => Kernel::AffineTwoLayer { slope, intercept },
            _ => Kernel::Recursion { depth, act },
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Kernel::Recursion { depth, .. } => *depth,
            _ => 2,
        }
    }

    pub fn activation(&self) -> Activation {
        match *self {
            Kernel::Recursion { act, .. } => act,
            Kernel::ErfScaledTwoLayer => Activation::ErfScaledSigmoid,
            Kernel::AffineTwoLayer { slope, intercept } => Activation::linear(slope, intercept),
        }
    }

    pub fn value(&self, x_hat: &DVector<f64>, x: &DVector<f64>) -> Result<f64> {
        match *self {
            Kernel::Recursion { depth, act } => Ok(ntk_recursion(x_hat, x, depth, act)?.theta()),
            Kernel::ErfScaledTwoLayer => closed_form::closed_form_ntk_2layer(x_hat, x),
            Kernel::AffineTwoLayer { slope, intercept } => {
                if x_hat.len() != x.len() {
                    return Err(NtkError::DimensionMismatch { expected: x_hat.len(), got: x.len() });
                }
                Ok(2.0 * slope * slope * x_hat.dot(x) / x.len() as f64 + intercept * intercept)
            }
        }
    }

    /// `(Θ(x̂, x), ∂Θ(x̂, x)/∂x)`.
    pub fn value_and_gradient(&self, x_hat: &DVector<f64>, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        match *self {
            Kernel::Recursion { depth, act } => ntk_value_and_gradient(x_hat, x, depth, act),
            Kernel::ErfScaledTwoLayer => {
                Ok((closed_form::closed_form_ntk_2layer(x_hat, x)?, closed_form::closed_form_gradient(x_hat, x)?))
            }
            Kernel::AffineTwoLayer { slope, .. } => {
                let v = self.value(x_hat, x)?;
                Ok((v, x_hat * (2.0 * slope * slope / x.len() as f64)))
            }
        }
    }
}

/// Gram matrix `K̃` of a dataset with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct KernelSystem {
    kernel: Kernel,
    x: DMatrix<f64>,
    gram: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
    condition: f64,
}

impl KernelSystem {
    pub fn new(data: &Dataset, kernel: Kernel) -> Result<Self> {
        let n = data.n();
        let cols: Vec<DVector<f64>> = (0..n).map(|i| data.column(i)).collect();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
        let values = pairs.par_iter().map(|&(i, j)| kernel.value(&cols[i], &cols[j])).collect::<Result<Vec<f64>>>()?;
        let mut gram = DMatrix::zeros(n, n);
        for (&(i, j), v) in pairs.iter().zip(values) {
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
        Self::from_gram(data, kernel, gram)
    }

    fn from_gram(data: &Dataset, kernel: Kernel, gram: DMatrix<f64>) -> Result<Self> {
        let n = gram.nrows();
        let eig = SymmetricEigen::try_new(gram.clone(), 1e-15, 0).ok_or(NtkError::EigenFailure { dim: n })?;
        let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let lmin = eig.eigenvalues.min();
        let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
        for &jitter in &JITTERS {
            let mut m = gram.clone();
            for i in 0..n {
                m[(i, i)] += jitter;
            }
            if let Some(chol) = Cholesky::new(m) {
                if jitter > 0.0 {
                    log::debug!("kernel matrix factorized with jitter {jitter:e} (condition {condition:e})");
                }
                return Ok(KernelSystem { kernel, x: data.x().clone(), gram, chol, jitter, condition });
            }
        }
        Err(NtkError::IllConditioned { condition, max_jitter: JITTERS[JITTERS.len() - 1] })
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Diagonal shift that made the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `λ_max / λ_min` of `K̃` before jitter.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn n(&self) -> usize {
        self.gram.nrows()
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// `‖K̃⁻¹‖_op`.
    pub fn inverse_norm(&self) -> f64 {
        let eig = SymmetricEigen::new(self.inverse());
        eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `k_x` with entries `Θ(xᵢ, x)`.
    pub fn kvec(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let v = (0..self.n())
            .into_par_iter()
            .map(|i| self.kernel.value(&self.x.column(i).into_owned(), x))
            .collect::<Result<Vec<f64>>>()?;
        Ok(DVector::from_vec(v))
    }

    /// `k_x` and `∂k_x/∂x` (`n × n₀`, row `i` is `∂Θ(xᵢ, x)/∂x`).
    pub fn kvec_and_gradient(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if x.len() != self.x.nrows() {
            return Err(NtkError::DimensionMismatch { expected: self.x.nrows(), got: x.len() });
        }
        let rows = (0..self.n())
            .into_par_iter()
            .map(|i| self.kernel.value_and_gradient(&self.x.column(i).into_owned(), x))
            .collect::<Result<Vec<_>>>()?;
        let k = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.0));
        let mut g = DMatrix::zeros(rows.len(), x.len());
        for (i, (_, gi)) in rows.iter().enumerate() {
            g.row_mut(i).copy_from(&gi.transpose());
        }
        Ok((k, g))
    }
}

/// `(K̃, k_x, ∂k_x/∂x)` for a dataset, query point and kernel.
pub fn gram_and_kvec(
    data: &Dataset,
    x: &DVector<f64>,
    depth: usize,
    act: Activation,
) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let ks = KernelSystem::new(data, Kernel::new(depth, act))?;
    let (k, g) = ks.kvec_and_gradient(x)?;
    Ok((ks.gram, k, g))
}
