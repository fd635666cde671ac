use nalgebra::{DMatrix, DVector};

use crate::error::check_dim;
use crate::linmetric::SpdMatrix;
use crate::{Error, Result};

/// Zero-mean Gaussian target on `(z, β)` with block precision
/// `[[Q11, Q12], [Q12ᵀ, Q22]]`.
#[derive(Debug, Clone)]
pub struct GaussianTarget {
    q11: SpdMatrix,
    q22: SpdMatrix,
    q12: DMatrix<f64>,
}

impl GaussianTarget {
    pub fn new(q11: SpdMatrix, q12: DMatrix<f64>, q22: SpdMatrix) -> Result<Self> {
        check_dim(q11.dim(), q12.nrows())?;
        check_dim(q22.dim(), q12.ncols())?;
        let target = Self { q11, q22, q12 };
        // the full precision must be PD: its Schur complement is
        target.schur_complement()?;
        Ok(target)
    }

    /// Splits a full precision after the first `dz` coordinates.
    pub fn from_precision(q: &DMatrix<f64>, dz: usize) -> Result<Self> {
        let n = q.nrows();
        if dz == 0 || dz >= n {
            return Err(Error::InvalidParameter(format!(
                "block split {dz} must lie strictly inside 0..{n}"
            )));
        }
        let q11 = SpdMatrix::new(q.view((0, 0), (dz, dz)).into_owned())?;
        let q22 = SpdMatrix::new(q.view((dz, dz), (n - dz, n - dz)).into_owned())?;
        let q12 = q.view((0, dz), (dz, n - dz)).into_owned();
        Self::new(q11, q12, q22)
    }

    pub fn q11(&self) -> &SpdMatrix {
        &self.q11
    }

    pub fn q22(&self) -> &SpdMatrix {
        &self.q22
    }

    pub fn q12(&self) -> &DMatrix<f64> {
        &self.q12
    }

    pub fn dim_z(&self) -> usize {
        self.q11.dim()
    }

    pub fn dim_beta(&self) -> usize {
        self.q22.dim()
    }

    fn schur_complement(&self) -> Result<SpdMatrix> {
        let y = self.q11.solve_lower_matrix(&self.q12)?;
        let s = self.q22.matrix() - y.transpose() * y;
        SpdMatrix::new((&s + s.transpose()) * 0.5)
    }

    pub fn full_precision(&self) -> DMatrix<f64> {
        let (dz, db) = (self.dim_z(), self.dim_beta());
        let mut q = DMatrix::zeros(dz + db, dz + db);
        q.view_mut((0, 0), (dz, dz)).copy_from(self.q11.matrix());
        q.view_mut((dz, dz), (db, db)).copy_from(self.q22.matrix());
        q.view_mut((0, dz), (dz, db)).copy_from(&self.q12);
        q.view_mut((dz, 0), (db, dz)).copy_from(&self.q12.transpose());
        q
    }
}

/// Two-component mixture `p N(β, τ⁻¹I) + (1−p) N(−β, τ⁻¹I)` with prior
/// `β ~ N(0, τ₀⁻¹I)`.
#[derive(Debug, Clone)]
pub struct GmmModel {
    weight: f64,
    tau: f64,
    tau0: f64,
    y: DMatrix<f64>,
}

impl GmmModel {
    pub fn new(weight: f64, tau: f64, tau0: f64, y: DMatrix<f64>) -> Result<Self> {
        if !(weight > 0.0 && weight < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "mixture weight must lie in (0,1), got {weight}"
            )));
        }
        if !(tau > 0.0 && tau.is_finite()) || !(tau0 > 0.0 && tau0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "precisions must be positive, got tau={tau} tau0={tau0}"
            )));
        }
        if y.nrows() == 0 || y.ncols() == 0 {
            return Err(Error::InvalidParameter("empty data matrix".into()));
        }
        Ok(Self {
            weight,
            tau,
            tau0,
            y,
        })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn tau0(&self) -> f64 {
        self.tau0
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn d(&self) -> usize {
        self.y.ncols()
    }

    /// `½ log(p/(1−p))`.
    pub fn half_log_odds(&self) -> f64 {
        0.5 * (self.weight / (1.0 - self.weight)).ln()
    }

    /// Posterior precision of β under every CAVI iterate, `τ₀ + nτ`.
    pub fn nu_precision(&self) -> f64 {
        self.tau0 + self.n() as f64 * self.tau
    }
}

fn check_binary_design(x: &DMatrix<f64>, y: &[bool], m0: &DVector<f64>, q0: &SpdMatrix) -> Result<()> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::InvalidParameter("empty design".into()));
    }
    check_dim(x.nrows(), y.len())?;
    check_dim(x.ncols(), m0.len())?;
    check_dim(x.ncols(), q0.dim())
}

fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    let g = x.tr_mul(x);
    (&g + g.transpose()) * 0.5
}

/// Bayesian probit regression with prior `β ~ N(m₀, Q₀⁻¹)`.
#[derive(Debug, Clone)]
pub struct ProbitModel {
    x: DMatrix<f64>,
    y: Vec<bool>,
    m0: DVector<f64>,
    q0: SpdMatrix,
    gram: DMatrix<f64>,
    q: SpdMatrix,
    prior_shift: DVector<f64>,
}

impl ProbitModel {
    pub fn new(x: DMatrix<f64>, y: Vec<bool>, m0: DVector<f64>, q0: SpdMatrix) -> Result<Self> {
        check_binary_design(&x, &y, &m0, &q0)?;
        let gram = gram(&x);
        let q = SpdMatrix::new(q0.matrix() + &gram)?;
        let prior_shift = q0.matrix() * &m0;
        Ok(Self {
            x,
            y,
            m0,
            q0,
            gram,
            q,
            prior_shift,
        })
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn responses(&self) -> &[bool] {
        &self.y
    }

    pub fn prior_mean(&self) -> &DVector<f64> {
        &self.m0
    }

    pub fn prior_precision(&self) -> &SpdMatrix {
        &self.q0
    }

    /// `XᵀX`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `Q₀ + XᵀX`, the fixed precision of every ν iterate.
    pub fn posterior_precision(&self) -> &SpdMatrix {
        &self.q
    }

    /// `Q₀ m₀`.
    pub fn prior_shift(&self) -> &DVector<f64> {
        &self.prior_shift
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// Bayesian logistic regression under Pólya–Gamma augmentation.
#[derive(Debug, Clone)]
pub struct LogitModel {
    x: DMatrix<f64>,
    y: Vec<bool>,
    m0: DVector<f64>,
    q0: SpdMatrix,
    shift: DVector<f64>,
}

impl LogitModel {
    pub fn new(x: DMatrix<f64>, y: Vec<bool>, m0: DVector<f64>, q0: SpdMatrix) -> Result<Self> {
        check_binary_design(&x, &y, &m0, &q0)?;
        let centred = DVector::from_iterator(y.len(), y.iter().map(|&v| if v { 0.5 } else { -0.5 }));
        let shift = x.tr_mul(&centred) + q0.matrix() * &m0;
        Ok(Self {
            x,
            y,
            m0,
            q0,
            shift,
        })
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn responses(&self) -> &[bool] {
        &self.y
    }

    pub fn prior_mean(&self) -> &DVector<f64> {
        &self.m0
    }

    pub fn prior_precision(&self) -> &SpdMatrix {
        &self.q0
    }

    /// `Xᵀ(y − ½) + Q₀m₀`, the right-hand side of every mean update.
    pub fn shift(&self) -> &DVector<f64> {
        &self.shift
    }

    /// `Xᵀ diag(w) X + Q₀`.
    pub fn weighted_precision(&self, w: &DVector<f64>) -> Result<SpdMatrix> {
        check_dim(self.n(), w.len())?;
        let mut xw = self.x.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= w[i];
        }
        let g = self.x.tr_mul(&xw);
        SpdMatrix::new((&g + g.transpose()) * 0.5 + self.q0.matrix())
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// Any of the supported target families.
#[derive(Debug, Clone)]
pub enum ModelSpec {
    Gaussian(GaussianTarget),
    Gmm(GmmModel),
    Probit(ProbitModel),
    Logit(LogitModel),
}

impl ModelSpec {
    pub fn family(&self) -> &'static str {
        match self {
            ModelSpec::Gaussian(_) => "gaussian",
            ModelSpec::Gmm(_) => "gmm",
            ModelSpec::Probit(_) => "probit",
            ModelSpec::Logit(_) => "logit",
        }
    }
}
