//! Closed-form contraction rates, certified local bounds and their
//! high-dimensional limits.
//!
//! Every rate bounds the per-sweep contraction of the squared ν-distance in
//! the engine's family metric. For the linear families (Gaussian, GMM at a
//! point, probit) that is the same as the contraction of the distance
//! itself, because the linearised sweep is self-adjoint and its spectral
//! radius is what the formulas compute.

mod gaussian;
mod gmm;
mod logit;
mod probit;
#[cfg(test)]
mod tests;

pub use gaussian::{gaussian_rate, gaussian_top_direction};
pub use gmm::{gmm_hessian_at_zero, gmm_lln_limit, gmm_rate_global, gmm_rate_local};
pub use logit::{logit_rate_asymptotic, logit_rate_bounds, logit_rate_local, sup_abs_pg_deriv_sq};
pub use probit::{probit_rate, probit_rate_from_spectrum, probit_rate_limits};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateFormula {
    /// `λ_max(AᵀA)`, `A = Q11^{-1/2} Q12 Q22^{-1/2}`.
    GaussianCorrelation,
    /// `τ²/(τ₀+nτ) · λ_max(Σ yᵢyᵢᵀ)`.
    GmmGlobal,
    /// Ball bound with per-datum `sech²` factors.
    GmmLocal,
    /// `λ_max((Q₀+XᵀX)⁻¹XᵀX)`.
    ProbitMissingInformation,
    /// Rate at the logit fixed point, from `φ′(c)²c²/φ(c)` weights.
    LogitAsymptotic,
    /// Ball bound over the tilt intervals.
    LogitLocal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub rate: f64,
    pub formula: RateFormula,
    /// Named scalar by-products, e.g. the eigenvalue the rate came from.
    pub side: Vec<(&'static str, f64)>,
    /// Per-datum intervals used by the ball bounds.
    pub intervals: Vec<(f64, f64)>,
    /// True when `rate` is an upper bound on the exact supremum.
    pub conservative: bool,
}

impl RateReport {
    pub(crate) fn exact(rate: f64, formula: RateFormula) -> Self {
        Self {
            rate,
            formula,
            side: Vec::new(),
            intervals: Vec::new(),
            conservative: false,
        }
    }

    pub(crate) fn with(mut self, name: &'static str, value: f64) -> Self {
        self.side.push((name, value));
        self
    }

    pub fn side_value(&self, name: &str) -> Option<f64> {
        self.side.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

/// Prior precision families with closed-form rate limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorFamily {
    /// `Q₀ = (p/c) I`.
    Scaled { c: f64 },
    /// `Q₀ = XᵀX/g + c I`.
    GPrior { g: f64, c: f64 },
}

impl PriorFamily {
    pub(crate) fn validate(self) -> Result<Self> {
        match self {
            PriorFamily::Scaled { c } if c > 0.0 && c.is_finite() => Ok(self),
            PriorFamily::GPrior { g, c } if g > 0.0 && g.is_finite() && c >= 0.0 => Ok(self),
            other => Err(Error::InvalidParameter(format!("invalid prior family {other:?}"))),
        }
    }
}

/// What the bound is evaluated on: an actual design, or the limit
/// `n, p → ∞` with `n/p → a`.
#[derive(Debug, Clone, Copy)]
pub enum SpectrumSource<'a> {
    Design(&'a nalgebra::DMatrix<f64>),
    /// `λ_max(XᵀX)` of a design with `p` columns, already computed.
    Gram { lambda_max: f64, p: usize },
    AspectRatio(f64),
}

/// `(1 + √a)²`, the limit of `λ_max(XᵀX)/p` for unit-variance designs.
pub fn bai_yin_edge(a: f64) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidParameter(format!("aspect ratio must be positive, got {a}")));
    }
    Ok((1.0 + a.sqrt()).powi(2))
}
