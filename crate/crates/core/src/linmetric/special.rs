use std::f64::consts::PI;

use crate::{Error, Result};

/// Below this argument the Pólya–Gamma mean and its derivative use their
/// Taylor series.
pub const PG_SERIES_THRESHOLD: f64 = 1e-4;

// switch point for the continued-fraction branch of pdf/Φ
const MILLS_SWITCH: f64 = -6.0;
const MILLS_TERMS: usize = 80;

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF from the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `pdf(a) / Φ(a)`, finite and accurate far into the lower tail.
pub fn inverse_mills(a: f64) -> f64 {
    if a >= MILLS_SWITCH {
        return normal_pdf(a) / normal_cdf(a);
    }
    // Φ(a)/pdf(a) = R(t), t = -a, with R(t) = 1/(t + 1/(t + 2/(t + ...)))
    let t = -a;
    let mut f = t;
    for k in (1..=MILLS_TERMS).rev() {
        f = t + k as f64 / f;
    }
    f
}

/// Mean of `N(a, 1)` truncated to the positive half-line (`positive`) or
/// the negative half-line.
pub fn truncated_normal_mean(a: f64, positive: bool) -> f64 {
    if positive {
        a + inverse_mills(a)
    } else {
        a - inverse_mills(-a)
    }
}

fn check_nonnegative(c: f64) -> Result<()> {
    if c >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "Pólya–Gamma tilt must be nonnegative, got {c}"
        )))
    }
}

/// `φ(c) = tanh(c/2) / (2c)`, the mean of PG(1, c).
pub fn pg_mean(c: f64) -> Result<f64> {
    check_nonnegative(c)?;
    if c < PG_SERIES_THRESHOLD {
        let c2 = c * c;
        return Ok(0.25 - c2 / 48.0 + c2 * c2 / 480.0);
    }
    Ok((0.5 * c).tanh() / (2.0 * c))
}

// sinh(c) - c without cancellation, for c < 1
fn sinh_minus_identity(c: f64) -> f64 {
    let c2 = c * c;
    let mut term = c * c2 / 6.0;
    let mut sum = term;
    let mut k = 1.0;
    while term > 1e-18 * sum {
        term *= c2 / ((2.0 * k + 2.0) * (2.0 * k + 3.0));
        sum += term;
        k += 1.0;
    }
    sum
}

/// `φ'(c)`.
pub fn pg_mean_deriv(c: f64) -> Result<f64> {
    check_nonnegative(c)?;
    if c < PG_SERIES_THRESHOLD {
        let c2 = c * c;
        return Ok(-c / 24.0 + c * c2 / 120.0 - 17.0 * c * c2 * c2 / 13440.0);
    }
    if c < 1.0 {
        return Ok(-sinh_minus_identity(c) / (2.0 * c * c * (1.0 + c.cosh())));
    }
    let h = 0.5 * c;
    let sech = 1.0 / h.cosh();
    Ok((h * sech * sech - h.tanh()) / (2.0 * c * c))
}
