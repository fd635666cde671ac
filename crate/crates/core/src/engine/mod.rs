//! CAVI sweeps, fixed points, convergence traces and empirical rates.
//!
//! A sweep updates the latent factor μ and then the parameter factor ν.
//! Distances are always between ν-marginals, in a geometry chosen per
//! family so that the linearised sweep is self-adjoint there:
//!
//! | family   | metric on the β-mean                 |
//! |----------|--------------------------------------|
//! | Gaussian | `Q22`                                |
//! | GMM      | Euclidean (ν covariances coincide)   |
//! | probit   | `Q₀ + XᵀX`                           |
//! | logit    | precision of the reference factor    |

mod steps;

use nalgebra::DVector;
use rand::Rng;

use crate::linmetric::SpdMatrix;
use crate::targets::{standard_normal, RngStream};
use crate::{Error, Result};

pub use steps::{
    gaussian_composed_map, gaussian_step, gmm_step, logit_nu, logit_step, logit_tilts,
    probit_step, CaviState, GaussianState, GmmState, LogitState, ProbitState,
};

pub(crate) use steps::gmm_arguments;

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 100_000;
pub const DEFAULT_BURN_IN: usize = 10;

/// Records below `RATIO_FLOOR · (1 + W2₀)` are round-off.
pub const RATIO_FLOOR: f64 = 1e-13;

/// Minimum number of usable records for a slope fit.
pub const MIN_RATE_POINTS: usize = 5;

// extra sweeps allowed once the tolerance is met, while the change keeps
// shrinking; this pushes the reference well below trace resolution
const POLISH_SWEEPS: usize = 200;

/// A two-block coordinate ascent scheme on a fixed target.
pub trait CaviModel {
    type State: Clone;

    /// One full sweep: μ-update followed by ν-update.
    fn step(&self, state: &Self::State) -> Result<Self::State>;

    /// W2 between the ν-marginals of `a` and `b`, in the family metric
    /// (anchored at `b` where it depends on the state).
    fn nu_distance(&self, a: &Self::State, b: &Self::State) -> Result<f64>;

    fn nu_mean<'a>(&self, state: &'a Self::State) -> &'a DVector<f64>;

    /// The metric `nu_distance` uses for mean displacements around
    /// `reference`.
    fn metric(&self, reference: &Self::State) -> SpdMatrix;

    /// A state whose ν-factor has the given mean and the family's default
    /// covariance.
    fn state_from_mean(&self, nu_mean: &DVector<f64>) -> Result<Self::State>;

    /// `reference` with its ν-mean shifted by `delta`, covariance unchanged.
    fn displaced(&self, reference: &Self::State, delta: &DVector<f64>) -> Result<Self::State>;
}

#[derive(Debug, Clone)]
pub struct FixedPoint<S> {
    pub state: S,
    pub converged: bool,
    pub iterations: usize,
    /// Last accepted successive ν-distance.
    pub change: f64,
}

/// Iterates sweeps until the successive ν-distance drops below `tol`.
///
/// After reaching the tolerance it keeps sweeping while the successive
/// change strictly decreases, capped at a few hundred sweeps, so the
/// returned state is as accurate as round-off allows.
pub fn find_fixed_point<M: CaviModel>(
    model: &M,
    init: &M::State,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPoint<M::State>> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let mut state = init.clone();
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let next = model.step(&state)?;
        change = model.nu_distance(&next, &state)?;
        state = next;
        iterations += 1;
        if change < tol {
            converged = true;
            break;
        }
    }
    if converged {
        for _ in 0..POLISH_SWEEPS {
            if change == 0.0 {
                break;
            }
            let next = model.step(&state)?;
            let c = model.nu_distance(&next, &state)?;
            if c >= change {
                break;
            }
            state = next;
            change = c;
            iterations += 1;
        }
    }
    Ok(FixedPoint {
        state,
        converged,
        iterations,
        change,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub w2: f64,
    pub log_w2: f64,
    /// `w2 / previous w2`, defined while the previous value is above the floor.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub floor: f64,
}

impl Trace {
    /// Builds a trace from raw distances, record `k` being sweep `k`.
    pub fn from_distances(w2: &[f64]) -> Self {
        let floor = RATIO_FLOOR * (1.0 + w2.first().copied().unwrap_or(0.0));
        let mut records = Vec::with_capacity(w2.len());
        for (k, &w) in w2.iter().enumerate() {
            let ratio = if k > 0 && w2[k - 1] > floor {
                Some(w / w2[k - 1])
            } else {
                None
            };
            records.push(TraceRecord {
                iter: k,
                w2: w,
                log_w2: w.ln(),
                ratio,
            });
        }
        Self { records, floor }
    }

    /// Defined per-step ratios of records strictly after `burn_in`.
    pub fn ratios_after(&self, burn_in: usize) -> impl Iterator<Item = f64> + '_ {
        self.records
            .iter()
            .filter(move |r| r.iter > burn_in)
            .filter_map(|r| r.ratio)
    }
}

/// Records `K + 1` distances to the fixed point: the initial state and the
/// state after each of `K` sweeps.
pub fn run_trace<M: CaviModel>(
    model: &M,
    init: &M::State,
    fixed: &FixedPoint<M::State>,
    sweeps: usize,
) -> Result<Trace> {
    if !fixed.converged {
        return Err(Error::Unconverged);
    }
    let mut w2 = Vec::with_capacity(sweeps + 1);
    let mut state = init.clone();
    w2.push(model.nu_distance(&state, &fixed.state)?);
    for _ in 0..sweeps {
        state = model.step(&state)?;
        w2.push(model.nu_distance(&state, &fixed.state)?);
    }
    Ok(Trace::from_distances(&w2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    /// `exp` of the least-squares slope of `log W2` against the sweep index.
    pub rate: f64,
    /// Largest per-step ratio inside the fitted window.
    pub max_ratio: f64,
    pub points: usize,
    /// Coefficient of determination of the log-linear fit.
    pub r_squared: f64,
}

/// Fits the geometric rate over the contiguous above-floor records from
/// sweep `burn_in` on.
pub fn estimate_rate(trace: &Trace, burn_in: usize) -> Result<RateEstimate> {
    let window: Vec<&TraceRecord> = trace
        .records
        .iter()
        .filter(|r| r.iter >= burn_in)
        .take_while(|r| r.w2 > trace.floor)
        .collect();
    if window.len() < MIN_RATE_POINTS {
        return Err(Error::InsufficientRecords {
            usable: window.len(),
            required: MIN_RATE_POINTS,
        });
    }
    let n = window.len() as f64;
    let mx = window.iter().map(|r| r.iter as f64).sum::<f64>() / n;
    let my = window.iter().map(|r| r.log_w2).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for r in &window {
        let dx = r.iter as f64 - mx;
        let dy = r.log_w2 - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    let max_ratio = window
        .iter()
        .skip(1)
        .filter_map(|r| r.ratio)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(RateEstimate {
        rate: slope.exp(),
        max_ratio,
        points: window.len(),
        r_squared,
    })
}

/// Uniform point on the unit sphere of `ℝᵈ`.
pub fn unit_direction(d: usize, rng: &mut RngStream) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| standard_normal(rng));
        let norm = v.norm();
        if norm > 1e-8 {
            return v / norm;
        }
        // practically unreachable; consume a draw so the loop progresses
        let _ = rng.rng().random::<u64>();
    }
}

/// Displacement `δ` with `‖δ‖_M = radius` along the whitened direction `u`.
pub fn metric_displacement(metric: &SpdMatrix, u: &DVector<f64>, radius: f64) -> Result<DVector<f64>> {
    let lt = metric.cholesky_lower().transpose();
    let delta = lt
        .solve_upper_triangular(u)
        .ok_or(Error::NotPositiveDefinite)?;
    Ok(delta * (radius / u.norm()))
}

/// Initial state on the sphere of the given radius around the fixed point,
/// uniform in the whitened coordinates of the family metric.
pub fn sphere_init<M: CaviModel>(
    model: &M,
    fixed: &M::State,
    radius: f64,
    rng: &mut RngStream,
) -> Result<M::State> {
    let metric = model.metric(fixed);
    let u = unit_direction(metric.dim(), rng);
    let delta = metric_displacement(&metric, &u, radius)?;
    model.displaced(fixed, &delta)
}
