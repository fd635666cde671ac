use cavi::altmin::{altmin_run, quadratic_constants, verify_sharpness, QuadraticObjective};
use cavi::engine::Trace;
use cavi::linmetric::{lambda_max, SpdMatrix};
use cavi::targets::{random_gaussian_target, sample_design, RngStream};
use nalgebra::DMatrix;

use super::{stream, CellFiles, Purpose};
use crate::config::{at_least, positive, Common, Params};
use crate::error::{CliError, Result};
use crate::output::num;
use crate::summary::{CellSummary, RunSummary};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Scalar { rho: f64 },
    Separable,
    /// `aI` and `bI` blocks, so the theorem rate is attained.
    Isotropic { a: f64, b: f64 },
    General { ridge: f64 },
}

fn objective(kind: Kind, dx: usize, dy: usize, rate: f64, rng: &mut RngStream) -> Result<QuadraticObjective> {
    let rescaled = |q11: SpdMatrix, q22: SpdMatrix, raw: DMatrix<f64>| -> Result<QuadraticObjective> {
        let s = lambda_max(&raw.tr_mul(&raw))?.sqrt();
        let lam = q11.lambda_min()? * q22.lambda_min()?;
        let q12 = if s > 0.0 { raw * ((rate * lam).sqrt() / s) } else { raw };
        Ok(QuadraticObjective::new(q11, q12, q22, None, None)?)
    };
    Ok(match kind {
        Kind::Scalar { rho } => {
            let one = SpdMatrix::identity(1);
            QuadraticObjective::new(one.clone(), DMatrix::from_element(1, 1, rho), one, None, None)?
        }
        Kind::Separable => {
            let t = random_gaussian_target(dx, dy, 0.5, rng)?;
            QuadraticObjective::new(t.q11().clone(), DMatrix::zeros(dx, dy), t.q22().clone(), None, None)?
        }
        Kind::Isotropic { a, b } => {
            let raw = sample_design(dx, dy, rng)?;
            rescaled(SpdMatrix::scaled_identity(dx, a)?, SpdMatrix::scaled_identity(dy, b)?, raw)?
        }
        Kind::General { ridge } => {
            let t = random_gaussian_target(dx, dy, ridge, rng)?;
            rescaled(t.q11().clone(), t.q22().clone(), t.q12().clone())?
        }
    })
}

/// Sharpness of the alternating-minimisation rate on quadratics. Each
/// replication draws an objective and runs the probe set; the trace files
/// follow the top probe with `w2` holding the y-block distance.
pub(crate) fn run(p: &Params<'_>) -> Result<RunSummary> {
    let common = Common::read(p, 30, 0, 100)?;
    let kind_name = p.choice("kind", "isotropic", &["scalar", "separable", "isotropic", "general"])?;
    let rho: f64 = p.get("rho", 0.3)?;
    let dx = at_least("dim_x", p.get("dim_x", 4usize)?, 1)?;
    let dy = at_least("dim_y", p.get("dim_y", 3usize)?, 1)?;
    let a = positive("a", p.get("a", 1.0)?)?;
    let b = positive("b", p.get("b", 1.0)?)?;
    let rate = p.get("rate", 0.5)?;
    let ridge = positive("ridge", p.get("ridge", 0.5)?)?;
    let sharp_tol = positive("sharp_tol", p.get("sharp_tol", cavi::altmin::SHARPNESS_TOL)?)?;
    p.finish()?;
    if !(0.0..1.0).contains(&rate) {
        return Err(CliError::value("rate", "must lie in [0, 1)"));
    }
    let kind = match kind_name.as_str() {
        "scalar" => Kind::Scalar { rho },
        "separable" => Kind::Separable,
        "isotropic" => Kind::Isotropic { a, b },
        _ => Kind::General { ridge },
    };
    // attained only when both blocks are multiples of the identity
    let expect_sharp = !matches!(kind, Kind::General { .. });

    let echo = p.echo();
    let mut summary = RunSummary::new("altmin", echo.clone());
    let mut cell = CellSummary::new(&kind_name);
    let mut files = CellFiles::new("altmin", &kind_name, &echo);
    let (mut sharp_fail, mut bound_fail, mut monotone_fail, mut one_sweep_fail) = (0, 0, 0, 0);
    let mut worst_gap = 0.0f64;

    for rep in 0..common.replications {
        let mut rng = RngStream::new(common.seed, stream(0, rep, Purpose::Data));
        let obj = objective(kind, dx, dy, rate, &mut rng)?;
        let theory = quadratic_constants(&obj)?.rate();
        let optimum = obj.optimum()?;
        let mut init = RngStream::new(common.seed, stream(0, rep, Purpose::Init));
        let y0 = &optimum.1 + cavi::engine::unit_direction(obj.q22().dim(), &mut init);
        let probe_seed = stream(0, rep, Purpose::Probe) ^ common.seed;
        let report = verify_sharpness(&obj, &y0, probe_seed)?;
        if rep == 0 {
            cell.theory("theorem_rate", theory, false);
            files.theory_from(&cell);
            for probe in &report.probes {
                cell.value(&format!("probe_{}_ratio", probe.label), probe.max_ratio);
            }
        }
        worst_gap = worst_gap.max((report.empirical - report.theory).abs());
        if !report.sharp {
            sharp_fail += 1;
        }
        if !report.bounded {
            bound_fail += 1;
        }
        let mut top_trace = None;
        for probe in &report.probes {
            let run = altmin_run(&obj, &probe.y0, common.sweeps, &optimum)?;
            if !run.is_monotone(1e-12) {
                monotone_fail += 1;
            }
            if theory == 0.0 && run.records.get(1).is_some_and(|r| r.dist_y > 1e-12 * (1.0 + probe.y0.norm())) {
                one_sweep_fail += 1;
            }
            if probe.label == "top" {
                let d: Vec<f64> = run.records.iter().map(|r| r.dist_y).collect();
                top_trace = Some(Trace::from_distances(&d));
            }
        }
        cell.empirical.push(report.empirical);
        if let Some(t) = top_trace {
            files.push(t, vec![("theory.theorem_rate.replication".into(), num(theory))]);
        }
    }

    let detail = format!("max |worst probe ratio - theorem rate| = {} (tol {})", num(worst_gap), num(sharp_tol));
    let sharp_ok = sharp_fail == 0 && worst_gap <= sharp_tol;
    if expect_sharp {
        summary.check("sharpness", sharp_ok, detail);
    } else {
        summary.inform("sharpness", sharp_ok, detail);
    }
    summary.check("bounded_by_theorem", bound_fail == 0, format!("{bound_fail} replications with a probe above the rate"));
    summary.check("objective_monotone", monotone_fail == 0, format!("{monotone_fail} probe runs increased the objective"));
    if matches!(kind, Kind::Separable) {
        summary.check("one_sweep_convergence", one_sweep_fail == 0, format!("{one_sweep_fail} probe runs not solved in one sweep"));
    }
    files.finish(&cell, &mut summary);
    summary.cells.push(cell);
    Ok(summary)
}
