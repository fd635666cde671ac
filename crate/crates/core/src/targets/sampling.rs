use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use super::models::GaussianTarget;
use crate::error::check_dim;
use crate::linmetric::{normal_cdf, SpdMatrix};
use crate::{Error, Result};

/// Seeded random stream: ChaCha20 keyed by `seed` on stream `stream`.
///
/// Distinct stream ids give independent sequences for the same seed.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }
}

pub fn standard_normal(rng: &mut RngStream) -> f64 {
    rng.rng().sample(StandardNormal)
}

/// Observation link for binary responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Probit,
    Logit,
}

impl Link {
    pub fn probability(self, eta: f64) -> f64 {
        match self {
            Link::Probit => normal_cdf(eta),
            Link::Logit => {
                if eta >= 0.0 {
                    1.0 / (1.0 + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (1.0 + e)
                }
            }
        }
    }
}

impl FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "probit" => Ok(Link::Probit),
            "logit" => Ok(Link::Logit),
            other => Err(Error::InvalidParameter(format!("unknown link `{other}`"))),
        }
    }
}

/// `n` rows from `p N(β₀, τ⁻¹I) + (1−p) N(−β₀, τ⁻¹I)`.
///
/// `p` may sit on the closed interval here, which degenerates to a single
/// component.
pub fn sample_gmm_data(
    n: usize,
    d: usize,
    beta0: &DVector<f64>,
    tau: f64,
    p: f64,
    rng: &mut RngStream,
) -> Result<DMatrix<f64>> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidParameter("n and d must be positive".into()));
    }
    check_dim(d, beta0.len())?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("weight must lie in [0,1], got {p}")));
    }
    let sd = tau.sqrt().recip();
    let mut y = DMatrix::zeros(n, d);
    for i in 0..n {
        let sign = if rng.rng().random::<f64>() < p { 1.0 } else { -1.0 };
        for j in 0..d {
            y[(i, j)] = sign * beta0[j] + sd * standard_normal(rng);
        }
    }
    Ok(y)
}

/// i.i.d. standard normal design, filled row by row.
pub fn sample_design(n: usize, p: usize, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    if n == 0 || p == 0 {
        return Err(Error::InvalidParameter("design sizes must be positive".into()));
    }
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            x[(i, j)] = standard_normal(rng);
        }
    }
    Ok(x)
}

pub fn sample_uniforms(n: usize, rng: &mut RngStream) -> Vec<f64> {
    (0..n).map(|_| rng.rng().random::<f64>()).collect()
}

/// `yᵢ = 1{uᵢ < link(xᵢᵀβ₀)}`; sharing `u` between links pairs the draws.
pub fn responses_from_uniforms(
    x: &DMatrix<f64>,
    beta0: &DVector<f64>,
    link: Link,
    uniforms: &[f64],
) -> Result<Vec<bool>> {
    check_dim(x.ncols(), beta0.len())?;
    check_dim(x.nrows(), uniforms.len())?;
    let eta = x * beta0;
    Ok(eta
        .iter()
        .zip(uniforms)
        .map(|(&e, &u)| u < link.probability(e))
        .collect())
}

pub fn sample_binary_responses(
    x: &DMatrix<f64>,
    beta0: &DVector<f64>,
    link: Link,
    rng: &mut RngStream,
) -> Result<Vec<bool>> {
    let u = sample_uniforms(x.nrows(), rng);
    responses_from_uniforms(x, beta0, link, &u)
}

/// `(p/c) I`.
pub fn build_scaled_prior(p: usize, c: f64) -> Result<SpdMatrix> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("prior scale must be positive, got {c}")));
    }
    SpdMatrix::scaled_identity(p, p as f64 / c)
}

/// `XᵀX/g + c I`.
pub fn build_g_prior(x: &DMatrix<f64>, g: f64, c: f64) -> Result<SpdMatrix> {
    if !(g > 0.0) || !(c >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "g-prior needs g > 0 and c ≥ 0, got g={g} c={c}"
        )));
    }
    let gram = x.tr_mul(x);
    let p = x.ncols();
    let m = (&gram + gram.transpose()) * (0.5 / g) + DMatrix::identity(p, p) * c;
    SpdMatrix::new(m)
}

/// Random Gaussian target with `Q = WᵀW/k + δI` split into `dz + db`,
/// where `W` is a `k×(dz+db)` standard normal matrix.
pub fn random_gaussian_target(
    dz: usize,
    db: usize,
    ridge: f64,
    rng: &mut RngStream,
) -> Result<GaussianTarget> {
    let d = dz + db;
    let k = d + 4;
    let w = sample_design(k, d, rng)?;
    let q = w.tr_mul(&w) / k as f64 + DMatrix::identity(d, d) * ridge;
    GaussianTarget::from_precision(&((&q + q.transpose()) * 0.5), dz)
}
