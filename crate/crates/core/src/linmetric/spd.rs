use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::eigen::{sym_eigen, sym_eigenvalues, symmetrize};
use super::check_symmetric;
use crate::error::check_dim;
use crate::{Error, Result};

#[derive(Debug)]
struct Inner {
    matrix: DMatrix<f64>,
    // lower Cholesky factor, M = L Lᵀ
    lower: DMatrix<f64>,
}

/// Symmetric positive-definite matrix with its Cholesky factor.
///
/// The factor is computed eagerly, so a successfully constructed value is
/// certified PD and clones share storage.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    inner: Arc<Inner>,
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || self.inner.matrix == other.inner.matrix
    }
}

impl SpdMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&m)?;
        if m.nrows() == 0 {
            return Err(Error::InvalidParameter("empty matrix".into()));
        }
        let matrix = symmetrize(m);
        let chol = Cholesky::<f64, Dyn>::new(matrix.clone()).ok_or(Error::NotPositiveDefinite)?;
        let lower = chol.unpack();
        if lower.diagonal().iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self {
            inner: Arc::new(Inner { matrix, lower }),
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0).expect("identity is PD")
    }

    pub fn scaled_identity(n: usize, s: f64) -> Result<Self> {
        Self::new(DMatrix::identity(n, n) * s)
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.inner.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.inner.matrix
    }

    /// Lower Cholesky factor `L` with `M = L Lᵀ`.
    pub fn cholesky_lower(&self) -> &DMatrix<f64> {
        &self.inner.lower
    }

    /// `M x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), b.len())?;
        let y = self.solve_lower(b)?;
        self.inner
            .lower
            .tr_solve_lower_triangular(&y)
            .ok_or(Error::NotPositiveDefinite)
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.dim(), b.nrows())?;
        let y = self
            .inner
            .lower
            .solve_lower_triangular(b)
            .ok_or(Error::NotPositiveDefinite)?;
        self.inner
            .lower
            .tr_solve_lower_triangular(&y)
            .ok_or(Error::NotPositiveDefinite)
    }

    /// `L⁻¹ b`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), b.len())?;
        self.inner
            .lower
            .solve_lower_triangular(b)
            .ok_or(Error::NotPositiveDefinite)
    }

    /// `L⁻¹ B`.
    pub fn solve_lower_matrix(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.dim(), b.nrows())?;
        self.inner
            .lower
            .solve_lower_triangular(b)
            .ok_or(Error::NotPositiveDefinite)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let inv = self
            .solve_matrix(&DMatrix::identity(n, n))
            .expect("factor is nonsingular");
        symmetrize(inv)
    }

    /// `vᵀ M v`.
    pub fn quad_form(&self, v: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), v.len())?;
        let lt_v = self.inner.lower.tr_mul(v);
        Ok(lt_v.norm_squared())
    }

    /// `vᵀ M⁻¹ v`.
    pub fn inv_quad_form(&self, v: &DVector<f64>) -> Result<f64> {
        Ok(self.solve_lower(v)?.norm_squared())
    }

    /// Symmetric inverse square root `M^{-1/2}`.
    pub fn inv_sqrt(&self) -> Result<DMatrix<f64>> {
        let e = sym_eigen(self.matrix())?;
        if e.eigenvalues.iter().any(|l| *l <= 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(e.map_spectrum(|l| 1.0 / l.sqrt()))
    }

    pub fn lambda_min(&self) -> Result<f64> {
        let v = sym_eigenvalues(self.matrix())?;
        Ok(v[v.len() - 1])
    }
}

/// Symmetric square root via the spectral decomposition.
pub fn spd_sqrt(s: &SpdMatrix) -> Result<SpdMatrix> {
    let e = sym_eigen(s.matrix())?;
    if e.eigenvalues.iter().any(|l| *l <= 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    SpdMatrix::new(e.map_spectrum(f64::sqrt))
}

pub fn cholesky_solve(s: &SpdMatrix, b: &DVector<f64>) -> Result<DVector<f64>> {
    s.solve(b)
}

/// Spectrum of `M⁻¹N` for symmetric `N`, via the congruence `L⁻¹ N L⁻ᵀ`
/// which is symmetric and similar to `M⁻¹N`. Sorted descending.
pub fn congruence_eigenvalues(m: &SpdMatrix, n: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_symmetric(n)?;
    check_dim(m.dim(), n.nrows())?;
    let y = m.solve_lower_matrix(n)?;
    let z = m.solve_lower_matrix(&y.transpose())?;
    sym_eigenvalues(&symmetrize(z))
}

/// `λ_max(M⁻¹N)`.
pub fn congruence_lambda_max(m: &SpdMatrix, n: &DMatrix<f64>) -> Result<f64> {
    Ok(congruence_eigenvalues(m, n)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> SpdMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = DMatrix::from_fn(n + 2, n, |_, _| rng.random_range(-1.0..1.0));
        SpdMatrix::new(w.transpose() * w + DMatrix::identity(n, n) * 0.05).unwrap()
    }

    #[test]
    fn rejects_bad_inputs() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(SpdMatrix::new(asym), Err(Error::NotSymmetric { .. })));
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(SpdMatrix::new(indef), Err(Error::NotPositiveDefinite)));
        let rect = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(SpdMatrix::new(rect), Err(Error::NotSquare { .. })));
    }

    #[test]
    fn sqrt_cases() {
        let r = spd_sqrt(&SpdMatrix::identity(2)).unwrap();
        assert!((r.matrix() - DMatrix::identity(2, 2)).norm() < 1e-15);
        let r = spd_sqrt(&SpdMatrix::from_diagonal(&[4.0, 9.0]).unwrap()).unwrap();
        assert_relative_eq!(r.matrix()[(0, 0)], 2.0, epsilon = 1e-14);
        assert_relative_eq!(r.matrix()[(1, 1)], 3.0, epsilon = 1e-14);
        assert_eq!(r.matrix()[(0, 1)], 0.0);
    }

    #[test]
    fn solve_cases() {
        let b = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        let x = cholesky_solve(&SpdMatrix::identity(3), &b).unwrap();
        assert_eq!(x, b);
        let d = SpdMatrix::from_diagonal(&[2.0, 4.0]).unwrap();
        let x = cholesky_solve(&d, &DVector::from_vec(vec![2.0, 4.0])).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(x[1], 1.0, epsilon = 1e-15);
        assert!(matches!(
            cholesky_solve(&d, &DVector::zeros(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn congruence_matches_direct_product() {
        let m = random_spd(6, 3);
        let n = random_spd(6, 4);
        let fast = congruence_lambda_max(&m, n.matrix()).unwrap();
        // oracle: power iteration on the nonsymmetric product
        let prod = m.inverse() * n.matrix();
        let mut v = DVector::from_element(6, 1.0);
        let mut lam = 0.0;
        for _ in 0..5000 {
            let w = &prod * &v;
            lam = w.norm() / v.norm();
            v = w.normalize();
        }
        assert_relative_eq!(fast, lam, max_relative = 1e-8);
    }

    proptest! {
        #[test]
        fn sqrt_squares_back(seed in 0u64..10_000, n in 1usize..9) {
            let s = random_spd(n, seed);
            let r = spd_sqrt(&s).unwrap();
            let back = r.matrix() * r.matrix();
            prop_assert!((back - s.matrix()).norm() <= 1e-10 * s.matrix().norm());
        }

        #[test]
        fn solve_residual(seed in 0u64..10_000, n in 1usize..12) {
            let s = random_spd(n, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let b = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
            let x = cholesky_solve(&s, &b).unwrap();
            prop_assert!((s.matrix() * x - &b).norm() <= 1e-10 * b.norm().max(1e-300));
        }

        #[test]
        fn inverse_sqrt_whitens(seed in 0u64..10_000, n in 1usize..7) {
            let s = random_spd(n, seed);
            let w = s.inv_sqrt().unwrap();
            let id = &w * s.matrix() * &w;
            prop_assert!((id - DMatrix::identity(n, n)).norm() <= 1e-9);
        }
    }
}
