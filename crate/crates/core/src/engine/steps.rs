use nalgebra::{DMatrix, DVector};

use crate::error::check_dim;
use crate::linmetric::{gaussian_w2, pg_mean, truncated_normal_mean, GaussianMeasure, SpdMatrix};
use crate::targets::{GaussianTarget, GmmModel, LogitModel, ModelSpec, ProbitModel};
use crate::{Error, Result};

use super::CaviModel;

/// Means of the two Gaussian factors; their covariances never change.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mu_mean: DVector<f64>,
    pub nu_mean: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmState {
    /// Allocation probabilities of the positive component.
    pub r: DVector<f64>,
    pub nu: GaussianMeasure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbitState {
    /// Means of the truncated-normal latent utilities.
    pub z_mean: DVector<f64>,
    pub nu: GaussianMeasure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogitState {
    /// Pólya–Gamma tilts that produced `nu`.
    pub c: DVector<f64>,
    pub nu: GaussianMeasure,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CaviState {
    Gaussian(GaussianState),
    Gmm(GmmState),
    Probit(ProbitState),
    Logit(LogitState),
}

fn conditional_mu(target: &GaussianTarget, nu_mean: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(-target.q11().solve(&(target.q12() * nu_mean))?)
}

pub fn gaussian_step(target: &GaussianTarget, state: &GaussianState) -> Result<GaussianState> {
    check_dim(target.dim_beta(), state.nu_mean.len())?;
    let mu_mean = conditional_mu(target, &state.nu_mean)?;
    let nu_mean = -target.q22().solve(&target.q12().tr_mul(&mu_mean))?;
    Ok(GaussianState { mu_mean, nu_mean })
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `½ log(p/(1−p)) + τ yᵢᵀ m` for every datum.
pub(crate) fn gmm_arguments(model: &GmmModel, mean: &DVector<f64>) -> DVector<f64> {
    let mut u = model.data() * mean * model.tau();
    u.add_scalar_mut(model.half_log_odds());
    u
}

pub fn gmm_step(model: &GmmModel, state: &GmmState) -> Result<GmmState> {
    check_dim(model.d(), state.nu.dim())?;
    let u = gmm_arguments(model, &state.nu.mean);
    let r = u.map(|v| stable_sigmoid(2.0 * v));
    // 2r − 1 = tanh(u) keeps full relative precision near r = 1/2
    let signed = u.map(f64::tanh);
    let prec = model.nu_precision();
    let mean = model.data().tr_mul(&signed) * (model.tau() / prec);
    let nu = GaussianMeasure::new(mean, SpdMatrix::scaled_identity(model.d(), prec)?)?;
    Ok(GmmState { r, nu })
}

pub fn probit_step(model: &ProbitModel, state: &ProbitState) -> Result<ProbitState> {
    check_dim(model.p(), state.nu.dim())?;
    let a = model.design() * &state.nu.mean;
    let z_mean = DVector::from_iterator(
        a.len(),
        a.iter()
            .zip(model.responses())
            .map(|(&ai, &yi)| truncated_normal_mean(ai, yi)),
    );
    let rhs = model.prior_shift() + model.design().tr_mul(&z_mean);
    let q = model.posterior_precision();
    let nu = GaussianMeasure::new(q.solve(&rhs)?, q.clone())?;
    Ok(ProbitState { z_mean, nu })
}

/// `cᵢ = (E_ν[(xᵢᵀβ)²])^{1/2}`.
pub fn logit_tilts(model: &LogitModel, nu: &GaussianMeasure) -> Result<DVector<f64>> {
    check_dim(model.p(), nu.dim())?;
    let a = model.design() * &nu.mean;
    let whitened = nu.precision.solve_lower_matrix(&model.design().transpose())?;
    Ok(DVector::from_fn(model.n(), |i, _| {
        (a[i] * a[i] + whitened.column(i).norm_squared()).sqrt()
    }))
}

/// Gaussian factor produced by tilts `c`.
pub fn logit_nu(model: &LogitModel, c: &DVector<f64>) -> Result<GaussianMeasure> {
    let w = c.iter().map(|&ci| pg_mean(ci)).collect::<Result<Vec<f64>>>()?;
    let q = model.weighted_precision(&DVector::from_vec(w))?;
    GaussianMeasure::new(q.solve(model.shift())?, q)
}

pub fn logit_step(model: &LogitModel, state: &LogitState) -> Result<LogitState> {
    let c = logit_tilts(model, &state.nu)?;
    let nu = logit_nu(model, &c)?;
    Ok(LogitState { c, nu })
}

impl CaviModel for GaussianTarget {
    type State = GaussianState;

    fn step(&self, s: &GaussianState) -> Result<GaussianState> {
        gaussian_step(self, s)
    }

    fn nu_distance(&self, a: &GaussianState, b: &GaussianState) -> Result<f64> {
        Ok(self.q22().quad_form(&(&a.nu_mean - &b.nu_mean))?.sqrt())
    }

    fn nu_mean<'a>(&self, s: &'a GaussianState) -> &'a DVector<f64> {
        &s.nu_mean
    }

    fn metric(&self, _reference: &GaussianState) -> SpdMatrix {
        self.q22().clone()
    }

    fn state_from_mean(&self, nu_mean: &DVector<f64>) -> Result<GaussianState> {
        check_dim(self.dim_beta(), nu_mean.len())?;
        Ok(GaussianState {
            mu_mean: conditional_mu(self, nu_mean)?,
            nu_mean: nu_mean.clone(),
        })
    }

    fn displaced(&self, reference: &GaussianState, delta: &DVector<f64>) -> Result<GaussianState> {
        self.state_from_mean(&(&reference.nu_mean + delta))
    }
}

impl CaviModel for GmmModel {
    type State = GmmState;

    fn step(&self, s: &GmmState) -> Result<GmmState> {
        gmm_step(self, s)
    }

    // equal covariances: the distance is the Euclidean mean gap
    fn nu_distance(&self, a: &GmmState, b: &GmmState) -> Result<f64> {
        check_dim(a.nu.dim(), b.nu.dim())?;
        Ok((&a.nu.mean - &b.nu.mean).norm())
    }

    fn nu_mean<'a>(&self, s: &'a GmmState) -> &'a DVector<f64> {
        &s.nu.mean
    }

    fn metric(&self, _reference: &GmmState) -> SpdMatrix {
        SpdMatrix::identity(self.d())
    }

    fn state_from_mean(&self, nu_mean: &DVector<f64>) -> Result<GmmState> {
        check_dim(self.d(), nu_mean.len())?;
        let u = gmm_arguments(self, nu_mean);
        Ok(GmmState {
            r: u.map(|v| stable_sigmoid(2.0 * v)),
            nu: GaussianMeasure::new(
                nu_mean.clone(),
                SpdMatrix::scaled_identity(self.d(), self.nu_precision())?,
            )?,
        })
    }

    fn displaced(&self, reference: &GmmState, delta: &DVector<f64>) -> Result<GmmState> {
        self.state_from_mean(&(&reference.nu.mean + delta))
    }
}

impl CaviModel for ProbitModel {
    type State = ProbitState;

    fn step(&self, s: &ProbitState) -> Result<ProbitState> {
        probit_step(self, s)
    }

    fn nu_distance(&self, a: &ProbitState, b: &ProbitState) -> Result<f64> {
        Ok(self
            .posterior_precision()
            .quad_form(&(&a.nu.mean - &b.nu.mean))?
            .sqrt())
    }

    fn nu_mean<'a>(&self, s: &'a ProbitState) -> &'a DVector<f64> {
        &s.nu.mean
    }

    fn metric(&self, _reference: &ProbitState) -> SpdMatrix {
        self.posterior_precision().clone()
    }

    fn state_from_mean(&self, nu_mean: &DVector<f64>) -> Result<ProbitState> {
        check_dim(self.p(), nu_mean.len())?;
        let a = self.design() * nu_mean;
        let z_mean = DVector::from_iterator(
            a.len(),
            a.iter()
                .zip(self.responses())
                .map(|(&ai, &yi)| truncated_normal_mean(ai, yi)),
        );
        Ok(ProbitState {
            z_mean,
            nu: GaussianMeasure::new(nu_mean.clone(), self.posterior_precision().clone())?,
        })
    }

    fn displaced(&self, reference: &ProbitState, delta: &DVector<f64>) -> Result<ProbitState> {
        self.state_from_mean(&(&reference.nu.mean + delta))
    }
}

impl CaviModel for LogitModel {
    type State = LogitState;

    fn step(&self, s: &LogitState) -> Result<LogitState> {
        logit_step(self, s)
    }

    /// Bures distance measured in the reference factor's precision.
    fn nu_distance(&self, a: &LogitState, b: &LogitState) -> Result<f64> {
        gaussian_w2(&a.nu, &b.nu, &b.nu.precision)
    }

    fn nu_mean<'a>(&self, s: &'a LogitState) -> &'a DVector<f64> {
        &s.nu.mean
    }

    fn metric(&self, reference: &LogitState) -> SpdMatrix {
        reference.nu.precision.clone()
    }

    /// Starts from the precision at zero tilt, `XᵀX/4 + Q₀`.
    fn state_from_mean(&self, nu_mean: &DVector<f64>) -> Result<LogitState> {
        check_dim(self.p(), nu_mean.len())?;
        let c = DVector::zeros(self.n());
        let base = logit_nu(self, &c)?;
        Ok(LogitState {
            c,
            nu: GaussianMeasure::new(nu_mean.clone(), base.precision)?,
        })
    }

    fn displaced(&self, reference: &LogitState, delta: &DVector<f64>) -> Result<LogitState> {
        Ok(LogitState {
            c: reference.c.clone(),
            nu: GaussianMeasure::new(&reference.nu.mean + delta, reference.nu.precision.clone())?,
        })
    }
}

macro_rules! dispatch {
    ($model:expr, $state:expr, |$m:ident, $s:ident| $body:expr) => {
        match ($model, $state) {
            (ModelSpec::Gaussian($m), CaviState::Gaussian($s)) => $body,
            (ModelSpec::Gmm($m), CaviState::Gmm($s)) => $body,
            (ModelSpec::Probit($m), CaviState::Probit($s)) => $body,
            (ModelSpec::Logit($m), CaviState::Logit($s)) => $body,
            _ => Err(Error::StateMismatch),
        }
    };
}

impl CaviModel for ModelSpec {
    type State = CaviState;

    fn step(&self, s: &CaviState) -> Result<CaviState> {
        dispatch!(self, s, |m, s| m.step(s).map(Wrap::wrap))
    }

    fn nu_distance(&self, a: &CaviState, b: &CaviState) -> Result<f64> {
        match (self, a, b) {
            (ModelSpec::Gaussian(m), CaviState::Gaussian(a), CaviState::Gaussian(b)) => {
                m.nu_distance(a, b)
            }
            (ModelSpec::Gmm(m), CaviState::Gmm(a), CaviState::Gmm(b)) => m.nu_distance(a, b),
            (ModelSpec::Probit(m), CaviState::Probit(a), CaviState::Probit(b)) => {
                m.nu_distance(a, b)
            }
            (ModelSpec::Logit(m), CaviState::Logit(a), CaviState::Logit(b)) => m.nu_distance(a, b),
            _ => Err(Error::StateMismatch),
        }
    }

    fn nu_mean<'a>(&self, s: &'a CaviState) -> &'a DVector<f64> {
        match s {
            CaviState::Gaussian(s) => &s.nu_mean,
            CaviState::Gmm(s) => &s.nu.mean,
            CaviState::Probit(s) => &s.nu.mean,
            CaviState::Logit(s) => &s.nu.mean,
        }
    }

    fn metric(&self, reference: &CaviState) -> SpdMatrix {
        match (self, reference) {
            (ModelSpec::Gaussian(m), CaviState::Gaussian(s)) => m.metric(s),
            (ModelSpec::Gmm(m), CaviState::Gmm(s)) => m.metric(s),
            (ModelSpec::Probit(m), CaviState::Probit(s)) => m.metric(s),
            (ModelSpec::Logit(m), CaviState::Logit(s)) => m.metric(s),
            // mismatches surface as errors from the other methods
            (_, s) => SpdMatrix::identity(self.nu_mean(s).len()),
        }
    }

    fn state_from_mean(&self, nu_mean: &DVector<f64>) -> Result<CaviState> {
        match self {
            ModelSpec::Gaussian(m) => m.state_from_mean(nu_mean).map(CaviState::Gaussian),
            ModelSpec::Gmm(m) => m.state_from_mean(nu_mean).map(CaviState::Gmm),
            ModelSpec::Probit(m) => m.state_from_mean(nu_mean).map(CaviState::Probit),
            ModelSpec::Logit(m) => m.state_from_mean(nu_mean).map(CaviState::Logit),
        }
    }

    fn displaced(&self, reference: &CaviState, delta: &DVector<f64>) -> Result<CaviState> {
        dispatch!(self, reference, |m, s| m.displaced(s, delta).map(Wrap::wrap))
    }
}

trait Wrap {
    fn wrap(self) -> CaviState;
}

impl Wrap for GaussianState {
    fn wrap(self) -> CaviState {
        CaviState::Gaussian(self)
    }
}

impl Wrap for GmmState {
    fn wrap(self) -> CaviState {
        CaviState::Gmm(self)
    }
}

impl Wrap for ProbitState {
    fn wrap(self) -> CaviState {
        CaviState::Probit(self)
    }
}

impl Wrap for LogitState {
    fn wrap(self) -> CaviState {
        CaviState::Logit(self)
    }
}

/// Composed per-sweep map on the β-mean, `Q22⁻¹ Q21 Q11⁻¹ Q12`.
pub fn gaussian_composed_map(target: &GaussianTarget) -> Result<DMatrix<f64>> {
    let inner = target.q11().solve_matrix(target.q12())?;
    target.q22().solve_matrix(&target.q12().tr_mul(&inner))
}
