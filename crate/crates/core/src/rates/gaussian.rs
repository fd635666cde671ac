use nalgebra::DVector;

use super::{RateFormula, RateReport};
use crate::linmetric::{congruence_lambda_max, sym_eigen};
use crate::targets::GaussianTarget;
use crate::Result;

// Q21 Q11⁻¹ Q12 as the Gram matrix of L11⁻¹ Q12
fn cross_gram(target: &GaussianTarget) -> Result<nalgebra::DMatrix<f64>> {
    let y = target.q11().solve_lower_matrix(target.q12())?;
    let g = y.tr_mul(&y);
    Ok((&g + g.transpose()) * 0.5)
}

/// Spectral radius of the composed mean map, `λ_max(AᵀA)`.
pub fn gaussian_rate(target: &GaussianTarget) -> Result<RateReport> {
    let rate = congruence_lambda_max(target.q22(), &cross_gram(target)?)?;
    Ok(RateReport::exact(rate, RateFormula::GaussianCorrelation))
}

/// ν-mean direction that realises the rate at every sweep: the top
/// eigenvector of the composed map, normalised to unit `Q22` length.
pub fn gaussian_top_direction(target: &GaussianTarget) -> Result<DVector<f64>> {
    let q22 = target.q22();
    let n = cross_gram(target)?;
    let y = q22.solve_lower_matrix(&n)?;
    let c = q22.solve_lower_matrix(&y.transpose())?;
    let e = sym_eigen(&((&c + c.transpose()) * 0.5))?;
    let w = e.eigenvectors.column(0).into_owned();
    let lt = q22.cholesky_lower().transpose();
    let delta = lt
        .solve_upper_triangular(&w)
        .ok_or(crate::Error::NotPositiveDefinite)?;
    let norm = q22.quad_form(&delta)?.sqrt();
    Ok(delta / norm)
}
