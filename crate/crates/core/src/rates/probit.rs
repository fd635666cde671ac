use super::{bai_yin_edge, PriorFamily, RateFormula, RateReport};
use crate::linmetric::congruence_lambda_max;
use crate::targets::ProbitModel;
use crate::{Error, Result};

/// Fraction of missing information, `λ_max((Q₀+XᵀX)⁻¹XᵀX)`.
pub fn probit_rate(model: &ProbitModel) -> Result<RateReport> {
    let rate = congruence_lambda_max(model.posterior_precision(), model.gram())?;
    Ok(RateReport::exact(rate, RateFormula::ProbitMissingInformation))
}

/// Probit rate for a standard prior from `λ_max(XᵀX)` alone. Both priors
/// commute with `XᵀX`, so the rate is `h(λ_max)` for the increasing map
/// `h(t) = t / (t + q₀(t))` with `q₀` the prior eigenvalue paired with `t`.
pub fn probit_rate_from_spectrum(prior: PriorFamily, lambda_max: f64, p: usize) -> Result<f64> {
    if !(lambda_max >= 0.0) || p == 0 {
        return Err(Error::InvalidParameter(format!(
            "need lambda_max >= 0 and p >= 1, got {lambda_max} and {p}"
        )));
    }
    let t = lambda_max;
    Ok(match prior.validate()? {
        PriorFamily::Scaled { c } => t / (p as f64 / c + t),
        PriorFamily::GPrior { g, c } => t / (t * (1.0 + 1.0 / g) + c),
    })
}

/// Limit of the probit rate as `n, p → ∞` with `n/p → a`.
pub fn probit_rate_limits(prior: PriorFamily, a: f64) -> Result<f64> {
    match prior.validate()? {
        PriorFamily::Scaled { c } => {
            let t = c * bai_yin_edge(a)?;
            Ok(t / (1.0 + t))
        }
        PriorFamily::GPrior { g, .. } => Ok(1.0 / (1.0 + 1.0 / g)),
    }
}
