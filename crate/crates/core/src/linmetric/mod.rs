//! Dense symmetric linear algebra, scalar special functions and metrics
//! between Gaussian measures.
//!
//! Everything here is a pure function of its inputs. [`SpdMatrix`] factors
//! eagerly at construction and is immutable afterwards, so values can be
//! shared freely across threads.

mod eigen;
mod measure;
mod spd;
mod special;

pub use eigen::{lambda_max, lambda_min, sym_eigen, sym_eigenvalues, SymEigen};
pub use measure::{gaussian_fisher_info, gaussian_w2, GaussianMeasure};
pub use spd::{cholesky_solve, congruence_lambda_max, spd_sqrt, SpdMatrix};
pub use special::{
    inverse_mills, normal_cdf, normal_pdf, pg_mean, pg_mean_deriv, truncated_normal_mean,
    PG_SERIES_THRESHOLD,
};

/// Relative tolerance for accepting a matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Relative tolerance promised for eigen reconstructions and square roots.
pub const RECONSTRUCTION_TOL: f64 = 1e-10;

/// Eigenvalues of PSD cross terms below this (relative to the largest) are
/// treated as exact zeros.
pub const EIGEN_CLAMP: f64 = 1e-14;

pub(crate) fn max_abs(m: &nalgebra::DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub(crate) fn check_symmetric(m: &nalgebra::DMatrix<f64>) -> crate::Result<()> {
    if !m.is_square() {
        return Err(crate::Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let scale = max_abs(m);
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    let asymmetry = if scale > 0.0 { worst / scale } else { worst };
    if asymmetry > SYMMETRY_TOL || !asymmetry.is_finite() {
        return Err(crate::Error::NotSymmetric { asymmetry });
    }
    Ok(())
}
