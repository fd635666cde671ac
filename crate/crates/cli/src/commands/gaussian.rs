use std::io::BufReader;

use cavi::engine::{find_fixed_point, run_trace, sphere_init, CaviModel};
use cavi::linmetric::SpdMatrix;
use cavi::rates::{gaussian_rate, gaussian_top_direction};
use cavi::targets::{random_gaussian_target, read_model, GaussianTarget, ModelSpec, RngStream};
use nalgebra::{DMatrix, DVector};

use super::{empirical_rate, max_ratio_after, stream, CellFiles, Purpose};
use crate::config::{at_least, positive, Common, Params};
use crate::error::{CliError, Result};
use crate::output::num;
use crate::summary::{CellSummary, RunSummary};

enum Source {
    Scalar(f64),
    File(GaussianTarget),
    Random { dz: usize, db: usize, ridge: f64, block_diagonal: bool },
}

impl Source {
    fn target(&self, seed: u64, rep: usize) -> Result<GaussianTarget> {
        Ok(match self {
            Source::Scalar(rho) => {
                let one = SpdMatrix::identity(1);
                GaussianTarget::new(one.clone(), DMatrix::from_element(1, 1, *rho), one)?
            }
            Source::File(t) => t.clone(),
            Source::Random { dz, db, ridge, block_diagonal } => {
                let mut rng = RngStream::new(seed, stream(0, rep, Purpose::Data));
                let t = random_gaussian_target(*dz, *db, *ridge, &mut rng)?;
                if *block_diagonal {
                    GaussianTarget::new(t.q11().clone(), DMatrix::zeros(*dz, *db), t.q22().clone())?
                } else {
                    t
                }
            }
        })
    }
}

/// Randomly generated (or given) Gaussian targets. Each replication runs
/// one trace from the top direction of the composed map, where the rate is
/// attained, and one from a random point of the unit sphere.
pub(crate) fn run(p: &Params<'_>) -> Result<RunSummary> {
    let common = Common::read(p, 40, 10, 100)?;
    let rho: Option<f64> = p.opt("rho")?;
    let model: Option<String> = p.opt("model")?;
    let dz = at_least("dim_z", p.get("dim_z", 4usize)?, 1)?;
    let db = at_least("dim_beta", p.get("dim_beta", 4usize)?, 1)?;
    let ridge = positive("ridge", p.get("ridge", 0.5)?)?;
    let block_diagonal: bool = p.get("block_diagonal", false)?;
    let sharp_tol = positive("sharp_tol", p.get("sharp_tol", 1e-6)?)?;
    let radius = positive("radius", p.get("radius", 1.0)?)?;
    p.finish()?;

    let source = match (rho, model) {
        (Some(_), Some(_)) => return Err(CliError::value("rho", "cannot be combined with `model`")),
        (Some(r), None) => Source::Scalar(r),
        (None, Some(path)) => {
            let file = std::fs::File::open(&path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            match read_model(BufReader::new(file))? {
                ModelSpec::Gaussian(t) => Source::File(t),
                other => {
                    return Err(CliError::value(
                        "model",
                        format!("expected a gaussian model, found {}", other.family()),
                    ))
                }
            }
        }
        (None, None) => Source::Random { dz, db, ridge, block_diagonal },
    };

    let echo = p.echo();
    let mut summary = RunSummary::new("gaussian", echo.clone());
    let mut cell = CellSummary::new("gaussian");
    let mut files = CellFiles::new("gaussian", "gaussian", &echo);
    let (mut worst_sharp, mut worst_excess, mut one_sweep) = (0.0f64, f64::NEG_INFINITY, true);

    for rep in 0..common.replications {
        let target = source.target(common.seed, rep)?;
        let rate = gaussian_rate(&target)?.rate;
        if rep == 0 {
            cell.theory("lambda_max_AtA", rate, false);
            files.theory_from(&cell);
        }
        let zero = target.state_from_mean(&DVector::zeros(target.dim_beta()))?;
        let fixed = find_fixed_point(&target, &zero, common.tol, common.max_iter)?;

        let top = gaussian_top_direction(&target)? * radius;
        let sharp = run_trace(&target, &target.state_from_mean(&top)?, &fixed, common.sweeps)?;
        let mut rng = RngStream::new(common.seed, stream(0, rep, Purpose::Init));
        let start = sphere_init(&target, &fixed.state, radius, &mut rng)?;
        let random = run_trace(&target, &start, &fixed, common.sweeps)?;

        if rate == 0.0 {
            one_sweep &= sharp.records[1].w2 == 0.0 && random.records[1].w2 == 0.0;
            cell.empirical.push(0.0);
        } else {
            for r in sharp.ratios_after(common.burn_in) {
                worst_sharp = worst_sharp.max((r - rate).abs());
            }
            cell.empirical.push(empirical_rate(&sharp, common.burn_in));
        }
        worst_excess = worst_excess.max(max_ratio_after(&random, common.burn_in) - rate);
        files.extra_file(
            &format!("top_{rep:03}.csv"),
            crate::output::trace_csv(&files.header, &[("replication".into(), rep.to_string())], &sharp),
        );
        files.push(random, vec![("theory.rate.replication".into(), num(rate))]);
    }

    let rate0 = cell.theory[0].value;
    if rate0 == 0.0 {
        cell.notes.push(("convergence".into(), "one sweep".into()));
        summary.check("one_sweep_convergence", one_sweep, "independent blocks reach the fixed point after one sweep");
    } else {
        summary.check(
            "sharp_top_direction",
            worst_sharp < sharp_tol,
            format!("max |ratio - rate| after burn-in = {} (tol {})", num(worst_sharp), num(sharp_tol)),
        );
    }
    summary.check(
        "monotone_contraction",
        worst_excess <= 1e-6,
        format!("max (ratio - rate) from random starts = {}", num(worst_excess)),
    );
    cell.value("max_abs_sharp_deviation", worst_sharp);
    files.finish(&cell, &mut summary);
    summary.cells.push(cell);
    Ok(summary)
}
