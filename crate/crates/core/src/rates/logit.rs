use nalgebra::{DMatrix, DVector};

use super::{bai_yin_edge, PriorFamily, RateFormula, RateReport, SpectrumSource};
use crate::engine::{FixedPoint, LogitState};
use crate::error::check_dim;
use crate::linmetric::{congruence_lambda_max, lambda_max, pg_mean, pg_mean_deriv};
use crate::targets::LogitModel;
use crate::{Error, Result};

const SUP_GRID: usize = 64;
const SUP_TOL: f64 = 1e-10;

fn deriv_sq(c: f64) -> f64 {
    let d = pg_mean_deriv(c.max(0.0)).expect("nonnegative argument");
    d * d
}

/// `sup |φ′|²` over `[lo, hi] ⊂ [0, ∞)`: a 64-point grid, then golden-section
/// refinement around the best grid cell.
pub fn sup_abs_pg_deriv_sq(lo: f64, hi: f64) -> Result<f64> {
    if !(lo >= 0.0 && hi >= lo) {
        return Err(Error::InvalidParameter(format!("bad interval [{lo}, {hi}]")));
    }
    if hi == lo {
        return Ok(deriv_sq(lo));
    }
    let h = (hi - lo) / (SUP_GRID - 1) as f64;
    let grid = |k: usize| if k + 1 == SUP_GRID { hi } else { lo + k as f64 * h };
    let (mut best_k, mut best) = (0, deriv_sq(lo));
    for k in 1..SUP_GRID {
        let v = deriv_sq(grid(k));
        if v > best {
            best = v;
            best_k = k;
        }
    }
    let mut a = grid(best_k.saturating_sub(1));
    let mut b = grid((best_k + 1).min(SUP_GRID - 1));
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let (mut f1, mut f2) = (deriv_sq(x1), deriv_sq(x2));
    while b - a > SUP_TOL * (1.0 + b) {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = deriv_sq(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = deriv_sq(x1);
        }
    }
    Ok(best.max(f1).max(f2).max(deriv_sq(0.5 * (a + b))))
}

fn check_fixed(model: &LogitModel, fixed: &FixedPoint<LogitState>) -> Result<()> {
    if !fixed.converged {
        return Err(Error::Unconverged);
    }
    check_dim(model.n(), fixed.state.c.len())?;
    check_dim(model.p(), fixed.state.nu.dim())
}

fn weighted_gram(x: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut xw = x.clone();
    for (i, mut row) in xw.row_iter_mut().enumerate() {
        row *= w[i];
    }
    let g = x.tr_mul(&xw);
    (&g + g.transpose()) * 0.5
}

/// Rate at the fixed point,
/// `λ_max(Q⋆^{-1/2} Xᵀ diag(φ′(c⋆)² c⋆² / φ(c⋆)) X Q⋆^{-1/2})`.
pub fn logit_rate_asymptotic(
    model: &LogitModel,
    fixed: &FixedPoint<LogitState>,
) -> Result<RateReport> {
    check_fixed(model, fixed)?;
    let c = &fixed.state.c;
    let w = DVector::from_iterator(
        c.len(),
        c.iter().map(|&ci| {
            let d = pg_mean_deriv(ci).expect("tilts are nonnegative");
            d * d * ci * ci / pg_mean(ci).expect("tilts are nonnegative")
        }),
    );
    let gram_w = weighted_gram(model.design(), &w);
    let rate = congruence_lambda_max(&fixed.state.nu.precision, &gram_w)?;
    let pg = DVector::from_iterator(c.len(), c.iter().map(|&ci| pg_mean(ci).unwrap()));
    let upper = congruence_lambda_max(&fixed.state.nu.precision, &weighted_gram(model.design(), &pg))?;
    Ok(RateReport::exact(rate, RateFormula::LogitAsymptotic).with("pg_weighted_bound", upper))
}

/// Certified bound on the local rate over the ball of radius `eps` (in the
/// `Q⋆` metric) around the fixed point.
///
/// Each tilt can move inside `Jᵢ = [(c⋆ᵢ − sᵢε)₊, c⋆ᵢ + sᵢε]` with
/// `sᵢ = ‖xᵢ‖_{Q⋆⁻¹}`. On that box:
///
/// * `sup |φ′|²` is found per interval numerically;
/// * `Q(c) ⪰ Q_low = Xᵀ diag(φ(right ends)) X + Q₀` since φ decreases;
/// * `|xᵢᵀ m(c)| ≤ |xᵢᵀ m⋆| + ‖xᵢ‖_{Q_low⁻¹} σ_max(X) ‖δφ ∘ X m⋆‖ / λ_min(Q_low)^{1/2}`,
///   from `m(c) − m⋆ = Q(c)⁻¹ Xᵀ diag(φ⋆ − φ(c)) X m⋆`, with `δφⱼ` the
///   largest deviation of φ from `φ(c⋆ⱼ)` on `Jⱼ`.
///
/// These bound `xᵢᵀ S(c) xᵢ` above; at `eps = 0` every bound is attained.
pub fn logit_rate_local(
    model: &LogitModel,
    fixed: &FixedPoint<LogitState>,
    eps: f64,
) -> Result<RateReport> {
    check_fixed(model, fixed)?;
    if !(eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("radius must be nonnegative, got {eps}")));
    }
    let x = model.design();
    let n = model.n();
    let star = &fixed.state;
    let c = &star.c;
    let q_star = &star.nu.precision;

    let whitened = q_star.solve_lower_matrix(&x.transpose())?;
    let mut intervals = Vec::with_capacity(n);
    for i in 0..n {
        let reach = whitened.column(i).norm() * eps;
        intervals.push(((c[i] - reach).max(0.0), c[i] + reach));
    }
    let phi_star: Vec<f64> = c.iter().map(|&ci| pg_mean(ci)).collect::<Result<_>>()?;

    let right = DVector::from_iterator(n, intervals.iter().map(|&(_, hi)| pg_mean(hi).unwrap()));
    let q_low = model.weighted_precision(&right)?;
    let lam_min_low = q_low.lambda_min()?;
    let whitened_low = q_low.solve_lower_matrix(&x.transpose())?;

    let fitted = x * &star.nu.mean;
    let drift = DVector::from_fn(n, |j, _| {
        let (lo, hi) = intervals[j];
        let up = pg_mean(lo).unwrap() - phi_star[j];
        let down = phi_star[j] - pg_mean(hi).unwrap();
        up.max(down).max(0.0) * fitted[j]
    });
    let drift_norm = drift.norm();
    let sigma_max = if drift_norm > 0.0 {
        lambda_max(&x.tr_mul(x))?.max(0.0).sqrt()
    } else {
        0.0
    };

    let mut a = DVector::zeros(n);
    for i in 0..n {
        let t = whitened_low.column(i).norm_squared();
        let mean_bound = fitted[i].abs() + (t / lam_min_low).sqrt() * sigma_max * drift_norm;
        let second_moment = t + mean_bound * mean_bound;
        let (lo, hi) = intervals[i];
        a[i] = sup_abs_pg_deriv_sq(lo, hi)? * second_moment / phi_star[i];
    }
    let rate = congruence_lambda_max(q_star, &weighted_gram(x, &a))?;
    let mut report = RateReport::exact(rate, RateFormula::LogitLocal)
        .with("eps", eps)
        .with("lambda_min_lower_precision", lam_min_low);
    report.intervals = intervals;
    report.conservative = eps > 0.0;
    Ok(report)
}

/// Closed-form upper bound on the asymptotic logit rate for the standard
/// prior families, on a given design or in the proportional limit.
pub fn logit_rate_bounds(prior: PriorFamily, source: SpectrumSource<'_>) -> Result<f64> {
    let prior = prior.validate()?;
    let spectrum = match source {
        SpectrumSource::Design(x) => Some((lambda_max(&x.tr_mul(x))?, x.ncols())),
        SpectrumSource::Gram { lambda_max, p } => Some((lambda_max, p)),
        SpectrumSource::AspectRatio(_) => None,
    };
    match (source, spectrum) {
        (_, Some((l, p))) => {
            let p = p as f64;
            Ok(match prior {
                PriorFamily::Scaled { c } => {
                    let t = c / p * l;
                    t / (4.0 + t)
                }
                PriorFamily::GPrior { g, c } => l / ((1.0 + 4.0 / g) * l + 4.0 * c),
            })
        }
        (SpectrumSource::AspectRatio(a), _) => Ok(match prior {
            PriorFamily::Scaled { c } => {
                let t = c * bai_yin_edge(a)?;
                t / (4.0 + t)
            }
            PriorFamily::GPrior { g, .. } => 1.0 / (1.0 + 4.0 / g),
        }),
        _ => unreachable!("spectrum is present for design sources"),
    }
}
