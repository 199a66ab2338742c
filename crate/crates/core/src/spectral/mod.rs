//! Eigen-analysis of kernel matrices and the kernel-regression bounds built on it.

mod bounds;
mod dynamics;
pub mod report;

pub use bounds::{
    activation_constant, generalization_bound, thm2_rate_bound, thm3_bounds, ConstantTable,
    Thm3Point,
};
pub use dynamics::{gradient_flow, kernel_dynamics, Dynamics, KernelFlow};
pub use report::{base_spectrum, condition_landscape, LandscapeRow};

use nalgebra::{DMatrix, DVector};

use crate::kernels::KernelMatrix;
use crate::{Error, Result};

/// Eigendecomposition of a symmetric kernel, eigenvalues in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    pub eigenvalues: Vec<f64>,
    /// Column `i` pairs with `eigenvalues[i]`.
    pub eigenvectors: DMatrix<f64>,
    /// `lambda_max / lambda_min`, infinite unless `lambda_min > 0`.
    pub condition_number: f64,
    pub trace: f64,
    /// `(v_i . y)^2` per eigenpair when labels were supplied.
    pub alignment: Option<Vec<f64>>,
}

impl SpectralReport {
    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_min(&self) -> f64 {
        *self.eigenvalues.last().unwrap()
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V^T y`.
    pub fn project(&self, y: &[f64]) -> Result<DVector<f64>> {
        if y.len() != self.dim() {
            return Err(Error::invalid(format!(
                "label vector of length {} for a {}-dimensional kernel",
                y.len(),
                self.dim()
            )));
        }
        Ok(self.eigenvectors.tr_mul(&DVector::from_column_slice(y)))
    }
}

/// Decomposes `(H + H^T) / 2`.
pub fn eig_sym(h: &KernelMatrix, y: Option<&[f64]>) -> Result<SpectralReport> {
    let a = h.entries();
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("kernel has non-finite entries"));
    }
    if let Some(y) = y {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("labels must be finite"));
        }
    }
    let sym = (a + a.transpose()) * 0.5;
    let trace = sym.trace();
    let eig = sym.symmetric_eigen();
    let m = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = DMatrix::from_fn(m, m, |r, c| eig.eigenvectors[(r, order[c])]);
    let (max, min) = (eigenvalues[0], eigenvalues[m - 1]);
    let condition_number = if min > 0.0 { max / min } else { f64::INFINITY };
    let mut report = SpectralReport {
        eigenvalues,
        eigenvectors,
        condition_number,
        trace,
        alignment: None,
    };
    if let Some(y) = y {
        let c = report.project(y)?;
        report.alignment = Some(c.iter().map(|v| v * v).collect());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Provenance;
    use crate::rng::{domain, stream};
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    pub(crate) fn random_psd(m: usize, rank: usize, seed: u64) -> KernelMatrix {
        let mut rng = stream(seed, domain::MISC, 0);
        let b: DMatrix<f64> = DMatrix::from_fn(m, rank, |_, _| StandardNormal.sample(&mut rng));
        KernelMatrix::new(&b * b.transpose(), Provenance::Imported).unwrap()
    }

    fn kernel(a: DMatrix<f64>) -> KernelMatrix {
        KernelMatrix::new(a, Provenance::Imported).unwrap()
    }

    #[test]
    fn identity_and_diagonal() {
        let r = eig_sym(&kernel(DMatrix::identity(5, 5)), None).unwrap();
        assert!(r.eigenvalues.iter().all(|&l| (l - 1.0).abs() < 1e-15));
        assert_eq!(r.condition_number, 1.0);
        let r = eig_sym(&kernel(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]))), None).unwrap();
        assert_eq!(r.eigenvalues, vec![4.0, 1.0]);
        assert_eq!(r.condition_number, 4.0);
    }

    #[test]
    fn singular_kernel_has_infinite_condition() {
        let r = eig_sym(&random_psd(6, 3, 1), None).unwrap();
        assert!(r.condition_number.is_infinite());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn decomposition_contract(m in 1usize..30, seed in 0u64..1000) {
            let h = random_psd(m, m + 2, seed);
            let y: Vec<f64> = (0..m).map(|i| (i as f64 + seed as f64).sin()).collect();
            let r = eig_sym(&h, Some(&y)).unwrap();
            let v = &r.eigenvectors;
            let lam = DMatrix::from_diagonal(&DVector::from_vec(r.eigenvalues.clone()));
            let rec = v * lam * v.transpose();
            prop_assert!((rec - h.entries()).norm() <= 1e-8 * h.entries().norm());
            prop_assert!((v.tr_mul(v) - DMatrix::identity(m, m)).norm() <= 1e-8);
            let total: f64 = r.alignment.unwrap().iter().sum();
            let yy: f64 = y.iter().map(|v| v * v).sum();
            prop_assert!((total - yy).abs() <= 1e-8 * yy.max(1e-300));
            prop_assert!(r.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn rejects_label_length_mismatch() {
        assert!(eig_sym(&random_psd(4, 4, 0), Some(&[1.0, 2.0])).is_err());
    }
}
