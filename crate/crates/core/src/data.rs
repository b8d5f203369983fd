//! Training sets of equal-norm columns.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{NtkError, Result};

const NORM_RTOL: f64 = 1e-10;
const RANK_RTOL: f64 = 1e-10;

/// Data matrix `X̂` (`n₀ × n`) whose columns all have norm `r`.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: DMatrix<f64>,
    r: f64,
    rho: DMatrix<f64>,
}

impl Dataset {
    /// Validates column norms and, when `n ≤ n₀`, full column rank.
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        Self::build(x, true)
    }

    /// Like [`Dataset::new`] but accepts linearly dependent columns, such as an
    /// antipodal pair `x` and `−x`. Repeated columns are still rejected.
    pub fn with_dependent_columns(x: DMatrix<f64>) -> Result<Self> {
        let d = Self::build(x, false)?;
        for i in 0..d.n() {
            for j in 0..i {
                if d.rho[(i, j)] > 1.0 - 1e-12 {
                    return Err(NtkError::InvalidDataset(format!("columns {j} and {i} coincide")));
                }
            }
        }
        Ok(d)
    }

    fn build(x: DMatrix<f64>, check_rank: bool) -> Result<Self> {
        let (n0, n) = x.shape();
        if n0 == 0 || n == 0 {
            return Err(NtkError::InvalidDataset(format!("empty data matrix ({n0}x{n})")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NtkError::InvalidDataset("non-finite entries".into()));
        }
        let r = x.column(0).norm();
        if r == 0.0 {
            return Err(NtkError::InvalidDataset("columns have zero norm".into()));
        }
        for j in 1..n {
            let rj = x.column(j).norm();
            if (rj - r).abs() > NORM_RTOL * r {
                return Err(NtkError::InvalidDataset(format!("column {j} has norm {rj}, expected {r}")));
            }
        }
        if check_rank && n <= n0 {
            let sv = x.clone().try_svd(false, false, 1e-14, 0).ok_or(NtkError::SvdFailure { rows: n0, cols: n })?;
            let smax = sv.singular_values.max();
            let smin = sv.singular_values.min();
            if smin <= RANK_RTOL * smax {
                return Err(NtkError::InvalidDataset(format!(
                    "rank deficient: smallest singular value {smin:e}, largest {smax:e}"
                )));
            }
        }
        let r2 = r * r;
        let mut rho = x.transpose() * &x / r2;
        for i in 0..n {
            for j in 0..n {
                rho[(i, j)] = if i == j { 1.0 } else { rho[(i, j)].clamp(-1.0, 1.0) };
            }
        }
        Ok(Dataset { x, r, rho })
    }

    /// Rescales every column to norm `r`, then validates.
    pub fn with_radius(mut x: DMatrix<f64>, r: f64) -> Result<Self> {
        rescale_columns(&mut x, r)?;
        Dataset::new(x)
    }

    /// `n` Gaussian directions in `R^{n₀}` scaled to norm `r`.
    pub fn random_sphere<R: Rng + ?Sized>(n0: usize, n: usize, r: f64, rng: &mut R) -> Result<Self> {
        let x = DMatrix::from_fn(n0, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        Dataset::with_radius(x, r)
    }

    /// Same columns with every norm changed to `r`.
    pub fn rescaled(&self, r: f64) -> Result<Self> {
        Dataset::with_radius(self.x.clone(), r)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// Cosine matrix `ρᵢⱼ = xᵢᵀxⱼ / r²`.
    pub fn rho(&self) -> &DMatrix<f64> {
        &self.rho
    }

    pub fn n0(&self) -> usize {
        self.x.nrows()
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn column(&self, i: usize) -> DVector<f64> {
        self.x.column(i).into_owned()
    }
}

/// Scales each column of `x` to norm `r` in place.
pub fn rescale_columns(x: &mut DMatrix<f64>, r: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(NtkError::InvalidArgument(format!("radius must be positive, got {r}")));
    }
    for (j, mut col) in x.column_iter_mut().enumerate() {
        let nrm = col.norm();
        if nrm == 0.0 || !nrm.is_finite() {
            return Err(NtkError::InvalidDataset(format!("column {j} cannot be rescaled (norm {nrm})")));
        }
        col *= r / nrm;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_sphere_has_common_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = Dataset::random_sphere(8, 5, 3.5, &mut rng).unwrap();
        for j in 0..5 {
            assert!((d.x().column(j).norm() - 3.5).abs() < 1e-12);
            assert_eq!(d.rho()[(j, j)], 1.0);
        }
        assert!(d.rho().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn rejects_unequal_norms() {
        let x = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        assert!(matches!(Dataset::new(x), Err(NtkError::InvalidDataset(_))));
    }

    #[test]
    fn rejects_rank_deficient() {
        let x = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(Dataset::new(x).is_err());
    }

    #[test]
    fn more_points_than_dimensions_skips_rank_check() {
        let x = DMatrix::from_column_slice(2, 3, &[1.0, 0.0, 0.0, 1.0, -1.0, 0.0]);
        assert_eq!(Dataset::new(x).unwrap().n(), 3);
    }
}
