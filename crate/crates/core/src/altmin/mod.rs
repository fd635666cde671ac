//! Alternating minimisation on two-block objectives.
//!
//! `x_k = argmin_x f(x, y_{k−1})`, `y_k = argmin_y f(x_k, y)`. Quadratics
//! are the instances where the cross-smoothness / gradient-growth rate is
//! attained, and they reproduce the CAVI mean trajectories of the Gaussian
//! target with the same precision blocks. Only Euclidean blocks are
//! supported.

#[cfg(test)]
mod tests;

use nalgebra::{DMatrix, DVector};

use crate::error::check_dim;
use crate::linmetric::{lambda_max, sym_eigen, SpdMatrix};
use crate::targets::{GaussianTarget, RngStream};
use crate::{Error, Result};

/// Two-block objective with exact block minimisers.
pub trait BiObjective {
    fn value(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64;
    fn grad_x(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64>;
    fn grad_y(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64>;
    fn argmin_x(&self, y: &DVector<f64>) -> Result<DVector<f64>>;
    fn argmin_y(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
}

type Scalar2 = Box<dyn Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync>;
type Vector2 = Box<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
type Oracle = Box<dyn Fn(&DVector<f64>) -> Result<DVector<f64>> + Send + Sync>;

/// Objective assembled from caller-supplied closures.
pub struct FnBiObjective {
    pub value: Scalar2,
    pub grad_x: Vector2,
    pub grad_y: Vector2,
    pub argmin_x: Oracle,
    pub argmin_y: Oracle,
}

impl BiObjective for FnBiObjective {
    fn value(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        (self.value)(x, y)
    }
    fn grad_x(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        (self.grad_x)(x, y)
    }
    fn grad_y(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        (self.grad_y)(x, y)
    }
    fn argmin_x(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        (self.argmin_x)(y)
    }
    fn argmin_y(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        (self.argmin_y)(x)
    }
}

/// `f(x, y) = ½ xᵀQ11x + xᵀQ12y + ½ yᵀQ22y − b₁ᵀx − b₂ᵀy`.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    q11: SpdMatrix,
    q22: SpdMatrix,
    q12: DMatrix<f64>,
    b1: DVector<f64>,
    b2: DVector<f64>,
}

impl QuadraticObjective {
    pub fn new(
        q11: SpdMatrix,
        q12: DMatrix<f64>,
        q22: SpdMatrix,
        b1: Option<DVector<f64>>,
        b2: Option<DVector<f64>>,
    ) -> Result<Self> {
        // validates dimensions and joint positive definiteness
        GaussianTarget::new(q11.clone(), q12.clone(), q22.clone())?;
        let b1 = b1.unwrap_or_else(|| DVector::zeros(q11.dim()));
        let b2 = b2.unwrap_or_else(|| DVector::zeros(q22.dim()));
        check_dim(q11.dim(), b1.len())?;
        check_dim(q22.dim(), b2.len())?;
        Ok(Self {
            q11,
            q22,
            q12,
            b1,
            b2,
        })
    }

    pub fn from_target(target: &GaussianTarget) -> Self {
        Self {
            q11: target.q11().clone(),
            q22: target.q22().clone(),
            q12: target.q12().clone(),
            b1: DVector::zeros(target.dim_z()),
            b2: DVector::zeros(target.dim_beta()),
        }
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

    /// Joint minimiser `(x⋆, y⋆)`.
    pub fn optimum(&self) -> Result<(DVector<f64>, DVector<f64>)> {
        let target = GaussianTarget::new(self.q11.clone(), self.q12.clone(), self.q22.clone())?;
        let full = SpdMatrix::new(target.full_precision())?;
        let (dx, dy) = (self.q11.dim(), self.q22.dim());
        let mut rhs = DVector::zeros(dx + dy);
        rhs.rows_mut(0, dx).copy_from(&self.b1);
        rhs.rows_mut(dx, dy).copy_from(&self.b2);
        let sol = full.solve(&rhs)?;
        Ok((sol.rows(0, dx).into_owned(), sol.rows(dx, dy).into_owned()))
    }

    /// Composed per-sweep map on the y-error, `Q22⁻¹ Q12ᵀ Q11⁻¹ Q12`.
    pub fn composed_map(&self) -> Result<DMatrix<f64>> {
        let inner = self.q11.solve_matrix(&self.q12)?;
        self.q22.solve_matrix(&self.q12.tr_mul(&inner))
    }
}

impl BiObjective for QuadraticObjective {
    fn value(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        0.5 * (x.dot(&(self.q11.matrix() * x)) + y.dot(&(self.q22.matrix() * y)))
            + x.dot(&(&self.q12 * y))
            - self.b1.dot(x)
            - self.b2.dot(y)
    }

    fn grad_x(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        self.q11.matrix() * x + &self.q12 * y - &self.b1
    }

    fn grad_y(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        self.q22.matrix() * y + self.q12.tr_mul(x) - &self.b2
    }

    fn argmin_x(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.q22.dim(), y.len())?;
        self.q11.solve(&(&self.b1 - &self.q12 * y))
    }

    fn argmin_y(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.q11.dim(), x.len())?;
        self.q22.solve(&(&self.b2 - self.q12.tr_mul(x)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AltminRecord {
    pub iter: usize,
    pub x: Option<DVector<f64>>,
    pub y: DVector<f64>,
    /// `‖x_k − x⋆‖`, absent at the start where only `y₀` exists.
    pub dist_x: Option<f64>,
    pub dist_y: f64,
    pub ratio_x: Option<f64>,
    pub ratio_y: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AltminTrace {
    pub records: Vec<AltminRecord>,
    /// Objective after every half-step, starting with `f(x₁, y₀)`.
    pub half_step_values: Vec<f64>,
}

// distances below this are round-off; ratios stop there
const DISTANCE_FLOOR: f64 = 1e-13;

fn ratio(curr: f64, prev: f64, floor: f64) -> Option<f64> {
    (prev > floor).then(|| curr / prev)
}

/// Runs `sweeps` sweeps from `y0`, measuring Euclidean block distances to
/// `optimum`.
pub fn altmin_run<O: BiObjective + ?Sized>(
    obj: &O,
    y0: &DVector<f64>,
    sweeps: usize,
    optimum: &(DVector<f64>, DVector<f64>),
) -> Result<AltminTrace> {
    let (xs, ys) = optimum;
    check_dim(ys.len(), y0.len())?;
    let d0 = (y0 - ys).norm();
    let floor = DISTANCE_FLOOR * (1.0 + d0);
    let mut records = vec![AltminRecord {
        iter: 0,
        x: None,
        y: y0.clone(),
        dist_x: None,
        dist_y: d0,
        ratio_x: None,
        ratio_y: None,
    }];
    let mut values = Vec::with_capacity(2 * sweeps);
    let mut y = y0.clone();
    for k in 1..=sweeps {
        let x = obj.argmin_x(&y)?;
        check_dim(xs.len(), x.len())?;
        values.push(obj.value(&x, &y));
        y = obj.argmin_y(&x)?;
        values.push(obj.value(&x, &y));
        let prev = &records[k - 1];
        let dist_x = (&x - xs).norm();
        let dist_y = (&y - ys).norm();
        let ratio_x = prev.dist_x.and_then(|p| ratio(dist_x, p, floor));
        let ratio_y = ratio(dist_y, prev.dist_y, floor);
        records.push(AltminRecord {
            iter: k,
            x: Some(x),
            y: y.clone(),
            dist_x: Some(dist_x),
            dist_y,
            ratio_x,
            ratio_y,
        });
    }
    Ok(AltminTrace {
        records,
        half_step_values: values,
    })
}

impl AltminTrace {
    /// Largest defined per-sweep ratio over both blocks.
    pub fn max_ratio(&self) -> Option<f64> {
        self.max_ratio_above(0.0)
    }

    /// Largest per-sweep ratio whose previous distance exceeds `min_prev`.
    /// Ratios from tiny distances carry round-off of order `ε‖optimum‖/d`.
    pub fn max_ratio_above(&self, min_prev: f64) -> Option<f64> {
        self.records
            .windows(2)
            .flat_map(|w| {
                let x = w[0].dist_x.filter(|&d| d > min_prev).and(w[1].ratio_x);
                let y = (w[0].dist_y > min_prev).then_some(w[1].ratio_y).flatten();
                [x, y]
            })
            .flatten()
            .reduce(f64::max)
    }

    /// True when no half-step increases the objective beyond round-off.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.half_step_values
            .windows(2)
            .all(|w| w[1] <= w[0] + slack * (1.0 + w[0].abs()))
    }
}

/// Cross-smoothness and gradient-growth constants of a quadratic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticConstants {
    /// `σ_max(Q12)`; the two cross constants coincide for quadratics.
    pub l12: f64,
    pub l21: f64,
    /// `λ_min(Q11)`.
    pub lam12: f64,
    /// `λ_min(Q22)`.
    pub lam21: f64,
}

impl QuadraticConstants {
    pub fn rate(&self) -> f64 {
        self.l12 * self.l21 / (self.lam12 * self.lam21)
    }
}

pub fn quadratic_constants(obj: &QuadraticObjective) -> Result<QuadraticConstants> {
    let s = lambda_max(&obj.q12.tr_mul(&obj.q12))?.max(0.0).sqrt();
    Ok(QuadraticConstants {
        l12: s,
        l21: s,
        lam12: obj.q11.lambda_min()?,
        lam21: obj.q22.lambda_min()?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub label: String,
    /// Starting point of the run.
    pub y0: DVector<f64>,
    /// Largest per-sweep ratio over both blocks along the run.
    pub max_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharpnessReport {
    pub theory: f64,
    /// Worst probe ratio.
    pub empirical: f64,
    pub probes: Vec<ProbeResult>,
    /// Ratio of the run started at the caller's `y0`.
    pub user_ratio: f64,
    /// Every probe stays at or below the theorem rate.
    pub bounded: bool,
    /// The worst probe attains the theorem rate to 1e-8.
    pub sharp: bool,
}

pub const SHARPNESS_TOL: f64 = 1e-8;
const PROBE_SWEEPS: usize = 6;
// ratios count only while the distance is well above round-off
const PROBE_RELATIVE_FLOOR: f64 = 1e-6;
const RANDOM_PROBES: usize = 8;

/// Runs the probe set (top and bottom right-singular directions of the
/// composed map and 8 seeded random unit vectors, offset from `y⋆`, plus the
/// caller's `y0` as given) and compares the worst per-sweep ratio with the
/// theorem rate.
pub fn verify_sharpness(
    obj: &QuadraticObjective,
    y0: &DVector<f64>,
    seed: u64,
) -> Result<SharpnessReport> {
    let theory = quadratic_constants(obj)?.rate();
    if theory >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "theorem rate {theory} is not a contraction"
        )));
    }
    let optimum = obj.optimum()?;
    let map = obj.composed_map()?;
    let gram = map.tr_mul(&map);
    let e = sym_eigen(&((&gram + gram.transpose()) * 0.5))?;
    let dy = obj.q22.dim();
    let mut directions = vec![
        ("top".to_string(), e.eigenvectors.column(0).into_owned()),
        ("bottom".to_string(), e.eigenvectors.column(dy - 1).into_owned()),
    ];
    let mut rng = RngStream::new(seed, 0);
    for k in 0..RANDOM_PROBES {
        directions.push((format!("random{k}"), crate::engine::unit_direction(dy, &mut rng)));
    }
    directions.push(("user".to_string(), y0.clone()));

    let scale = optimum.1.norm().max(1.0);
    let mut probes = Vec::with_capacity(directions.len());
    for (label, dir) in directions {
        let start = if label == "user" {
            dir
        } else {
            &optimum.1 + dir * scale
        };
        let trace = altmin_run(obj, &start, PROBE_SWEEPS, &optimum)?;
        let min_prev = PROBE_RELATIVE_FLOOR * trace.records[0].dist_y;
        let max_ratio = trace.max_ratio_above(min_prev).unwrap_or(0.0);
        probes.push(ProbeResult {
            label,
            y0: start,
            max_ratio,
        });
    }
    let empirical = probes.iter().map(|p| p.max_ratio).fold(0.0, f64::max);
    let user_ratio = probes.last().map_or(0.0, |p| p.max_ratio);
    Ok(SharpnessReport {
        user_ratio,
        theory,
        empirical,
        bounded: probes.iter().all(|p| p.max_ratio <= theory + SHARPNESS_TOL),
        sharp: (empirical - theory).abs() <= SHARPNESS_TOL,
        probes,
    })
}
