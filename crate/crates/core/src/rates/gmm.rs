use nalgebra::{DMatrix, DVector};

use super::{RateFormula, RateReport};
use crate::engine::gmm_arguments;
use crate::error::check_dim;
use crate::linmetric::lambda_max;
use crate::targets::GmmModel;
use crate::{Error, Result};

fn weighted_scatter(model: &GmmModel, w: &DVector<f64>) -> DMatrix<f64> {
    let mut yw = model.data().clone();
    for (i, mut row) in yw.row_iter_mut().enumerate() {
        row *= w[i];
    }
    let s = model.data().tr_mul(&yw);
    (&s + s.transpose()) * 0.5
}

fn gain(model: &GmmModel) -> f64 {
    model.tau() * model.tau() / model.nu_precision()
}

/// Global rate `τ²/(τ₀+nτ) λ_max(Σ yᵢyᵢᵀ)`.
pub fn gmm_rate_global(model: &GmmModel) -> Result<RateReport> {
    let scatter = weighted_scatter(model, &DVector::from_element(model.n(), 1.0));
    let l = lambda_max(&scatter)?;
    Ok(RateReport::exact(gain(model) * l, RateFormula::GmmGlobal).with("lambda_max_scatter", l))
}

/// Certified bound on the worst local rate over the Euclidean ball of
/// radius `eps` around `center`.
///
/// Each `sech²(uᵢ)` factor is replaced by its maximum over the interval its
/// argument can reach; PSD monotonicity of the weighted scatter makes the
/// result an upper bound. At `eps = 0` it is the exact rate at `center`.
pub fn gmm_rate_local(model: &GmmModel, center: &DVector<f64>, eps: f64) -> Result<RateReport> {
    check_dim(model.d(), center.len())?;
    if !(eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("radius must be nonnegative, got {eps}")));
    }
    let u = gmm_arguments(model, center);
    let mut intervals = Vec::with_capacity(model.n());
    let weights = DVector::from_fn(model.n(), |i, _| {
        let reach = model.tau() * model.data().row(i).norm() * eps;
        let (lo, hi) = (u[i] - reach, u[i] + reach);
        intervals.push((lo, hi));
        if lo <= 0.0 && hi >= 0.0 {
            1.0
        } else {
            let nearest = lo.abs().min(hi.abs());
            let s = 1.0 / nearest.cosh();
            s * s
        }
    });
    let l = lambda_max(&weighted_scatter(model, &weights))?;
    let mut report = RateReport::exact(gain(model) * l, RateFormula::GmmLocal)
        .with("lambda_max_weighted_scatter", l)
        .with("eps", eps);
    report.intervals = intervals;
    report.conservative = eps > 0.0;
    Ok(report)
}

/// Hessian of the balanced-mixture log posterior of β at zero,
/// `−(nτ+τ₀) I + τ² Σ yᵢyᵢᵀ`.
pub fn gmm_hessian_at_zero(model: &GmmModel) -> DMatrix<f64> {
    let scatter = weighted_scatter(model, &DVector::from_element(model.n(), 1.0));
    let d = model.d();
    scatter * (model.tau() * model.tau()) - DMatrix::identity(d, d) * model.nu_precision()
}

/// Law-of-large-numbers limit of the global rate, `1 + τ‖β₀‖²`.
pub fn gmm_lln_limit(beta0: &DVector<f64>, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    Ok(1.0 + tau * beta0.norm_squared())
}
