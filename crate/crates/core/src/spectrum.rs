//! Eigenvalues and operator norm of a real square matrix.

use nalgebra::{Complex, DMatrix, Schur};
use serde::Serialize;

use crate::error::{NtkError, Result};

/// Default half-width of the window counted as "near 1".
pub const NEAR_ONE_WINDOW: f64 = 1e-3;

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    /// Eigenvalues as `(re, im)`, sorted by decreasing modulus.
    pub eigenvalues: Vec<(f64, f64)>,
    pub largest_norm: f64,
    /// Largest singular value.
    pub operator_norm: f64,
    /// Eigenvalues with `|λ − 1| < window`.
    pub count_near_one: usize,
    pub window: f64,
}

impl SpectrumReport {
    pub fn eigenvalues_complex(&self) -> Vec<Complex<f64>> {
        self.eigenvalues.iter().map(|&(re, im)| Complex::new(re, im)).collect()
    }

    /// Recount with a different window.
    pub fn near_one(&self, window: f64) -> usize {
        self.eigenvalues.iter().filter(|&&(re, im)| Complex::new(re - 1.0, im).norm() < window).count()
    }
}

pub fn spectrum(j: &DMatrix<f64>) -> Result<SpectrumReport> {
    spectrum_with_window(j, NEAR_ONE_WINDOW)
}

pub fn spectrum_with_window(j: &DMatrix<f64>, window: f64) -> Result<SpectrumReport> {
    let (rows, cols) = j.shape();
    if rows != cols {
        return Err(NtkError::DimensionMismatch { expected: rows, got: cols });
    }
    if j.iter().any(|v| !v.is_finite()) {
        return Err(NtkError::InvalidArgument("matrix has non-finite entries".into()));
    }
    if rows == 0 {
        return Ok(SpectrumReport {
            eigenvalues: vec![],
            largest_norm: 0.0,
            operator_norm: 0.0,
            count_near_one: 0,
            window,
        });
    }
    // repeated eigenvalues can stall the strictest deflation test
    let schur = [f64::EPSILON, 8.0 * f64::EPSILON, 64.0 * f64::EPSILON]
        .iter()
        .find_map(|&eps| Schur::try_new(j.clone(), eps, 1000 * rows.max(10)))
        .ok_or(NtkError::EigenFailure { dim: rows })?;
    let mut eig: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.im.total_cmp(&a.im)));
    let svd = j.clone().try_svd(false, false, f64::EPSILON, 0).ok_or(NtkError::SvdFailure { rows, cols })?;
    let operator_norm = svd.singular_values.max();
    let largest_norm = eig.first().map_or(0.0, |v| v.norm());
    let eigenvalues: Vec<(f64, f64)> = eig.iter().map(|c| (c.re, c.im)).collect();
    let mut rep = SpectrumReport { eigenvalues, largest_norm, operator_norm, count_near_one: 0, window };
    rep.count_near_one = rep.near_one(window);
    Ok(rep)
}

/// Largest distance between a non-real eigenvalue and the nearest conjugate of
/// another eigenvalue, relative to the spectral radius.
pub fn conjugate_pair_defect(rep: &SpectrumReport) -> f64 {
    let eig = rep.eigenvalues_complex();
    let scale = rep.largest_norm.max(1.0);
    let mut worst = 0.0f64;
    for (i, z) in eig.iter().enumerate() {
        if z.im.abs() <= 1e-12 * scale {
            continue;
        }
        let best = eig
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != i)
            .map(|(_, w)| (w - z.conj()).norm())
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(best / scale);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity() {
        let r = spectrum(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(r.count_near_one, 3);
        assert!((r.operator_norm - 1.0).abs() < 1e-14);
        assert!((r.largest_norm - 1.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal() {
        let r = spectrum(&DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, -0.25]))).unwrap();
        assert!((r.largest_norm - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rotation() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let r = spectrum(&m).unwrap();
        assert!((r.largest_norm - 1.0).abs() < 1e-14);
        assert!((r.operator_norm - 1.0).abs() < 1e-14);
        assert!(r.eigenvalues.iter().all(|&(re, im)| re.abs() < 1e-14 && (im.abs() - 1.0).abs() < 1e-14));
        assert!(conjugate_pair_defect(&r) < 1e-12);
    }

    #[test]
    fn rejects_non_square() {
        assert!(spectrum(&DMatrix::zeros(2, 3)).is_err());
    }

    proptest::proptest! {
        #[test]
        fn eigen_norm_bounded_by_operator_norm(v in proptest::collection::vec(-3.0f64..3.0, 25)) {
            let m = DMatrix::from_vec(5, 5, v);
            let r = spectrum(&m).unwrap();
            proptest::prop_assert!(r.largest_norm <= r.operator_norm + 1e-8);
            proptest::prop_assert!(conjugate_pair_defect(&r) < 1e-8);
        }
    }
}
