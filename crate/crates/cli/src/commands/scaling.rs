use std::fmt::Write as _;

use cavi::linmetric::lambda_max;
use cavi::rates::{
    bai_yin_edge, logit_rate_bounds, probit_rate, probit_rate_from_spectrum, probit_rate_limits,
    PriorFamily, SpectrumSource,
};
use cavi::targets::{build_g_prior, sample_design, ProbitModel, RngStream};
use nalgebra::DVector;

use super::{stream, Purpose};
use crate::config::{positive, Common, Params};
use crate::error::{CliError, Result};
use crate::output::{num, OutputFile};
use crate::summary::{CellSummary, RunSummary};

// direct and spectral probit rates must agree to this relative accuracy
const MAPPING_TOL: f64 = 1e-10;

/// Spectral edge and rate limits along growing `p` at fixed `a = n/p`.
///
/// Finite-`p` rates come from `λ_max(XᵀX)` through the spectral mapping,
/// which is exact for these priors; the direct computation is run on the
/// smallest size as a cross-check.
pub(crate) fn run(p: &Params<'_>) -> Result<RunSummary> {
    let common = Common::read(p, 1, 0, 1)?;
    let a_grid: Vec<f64> = p.list("a_grid", &[1.0, 2.0])?;
    let p_grid: Vec<usize> = p.list("p_grid", &[250, 500, 1000])?;
    let g_grid: Vec<f64> = p.list("g_grid", &[1.0, 2.0, 5.0])?;
    let c: f64 = p.get("c", 1.0)?;
    let edge_tol = positive("edge_tol", p.get("edge_tol", 0.05)?)?;
    let rate_tol = positive("rate_tol", p.get("rate_tol", 0.02)?)?;
    let default_min = p_grid.iter().copied().max().unwrap_or(0);
    let assert_min_p: usize = p.get("assert_min_p", default_min)?;
    p.finish()?;
    if a_grid.iter().any(|a| !(*a >= 1.0)) {
        return Err(CliError::value("a_grid", "aspect ratios n/p must be at least 1"));
    }
    if p_grid.is_empty() || p_grid.contains(&0) || g_grid.iter().any(|g| !(*g > 0.0)) || !(c >= 0.0) {
        return Err(CliError::value("p_grid", "need positive sizes, g > 0 and c >= 0"));
    }

    let mut summary = RunSummary::new("scaling", p.echo());
    let mut table = String::new();
    for (k, v) in p.echo() {
        let _ = writeln!(table, "# config.{k}={v}");
    }
    table.push_str("a,p,n,replication,lambda_ratio,edge,g,probit_rate,probit_limit,logit_bound,logit_limit\n");
    let (mut edge_worst, mut rate_worst, mut logit_excess) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    let mut mapping_gap = 0.0f64;
    let smallest = p_grid.iter().copied().min().unwrap_or(0);

    for (ai, &a) in a_grid.iter().enumerate() {
        for (pi, &dim) in p_grid.iter().enumerate() {
            let n = (a * dim as f64).round() as usize;
            let mut cell = CellSummary::new(format!("a{}_p{dim}", super::tag(a)));
            let edge = bai_yin_edge(a)?;
            cell.theory("edge", edge, false);
            let checked = dim >= assert_min_p;
            for rep in 0..common.replications {
                let id = ai * p_grid.len() + pi;
                let mut rng = RngStream::new(common.seed, stream(id, rep, Purpose::Data));
                let x = sample_design(n, dim, &mut rng)?;
                let top = lambda_max(&x.tr_mul(&x))?;
                let ratio = top / dim as f64;
                cell.empirical.push(ratio);
                if checked {
                    edge_worst = edge_worst.max((ratio - edge).abs() / edge);
                }
                for &g in &g_grid {
                    let prior = PriorFamily::GPrior { g, c };
                    let rate = probit_rate_from_spectrum(prior, top, dim)?;
                    if dim == smallest && rep == 0 {
                        let q0 = build_g_prior(&x, g, c)?;
                        let model = ProbitModel::new(x.clone(), vec![false; n], DVector::zeros(dim), q0)?;
                        let direct = probit_rate(&model)?.rate;
                        mapping_gap = mapping_gap.max((direct - rate).abs() / direct);
                    }
                    let limit = probit_rate_limits(prior, a)?;
                    let bound = logit_rate_bounds(prior, SpectrumSource::Gram { lambda_max: top, p: dim })?;
                    let bound_limit = logit_rate_bounds(prior, SpectrumSource::AspectRatio(a))?;
                    if checked {
                        rate_worst = rate_worst.max((rate - limit).abs() / limit);
                    }
                    logit_excess = logit_excess.max(bound - 1.0);
                    if rep == 0 {
                        cell.value(&format!("probit_rate_g{}", super::tag(g)), rate);
                        cell.value(&format!("probit_limit_g{}", super::tag(g)), limit);
                        cell.value(&format!("logit_bound_g{}", super::tag(g)), bound);
                        cell.value(&format!("logit_limit_g{}", super::tag(g)), bound_limit);
                    }
                    let _ = writeln!(
                        table,
                        "{},{dim},{n},{rep},{},{},{},{},{},{},{}",
                        num(a),
                        num(ratio),
                        num(edge),
                        num(g),
                        num(rate),
                        num(limit),
                        num(bound),
                        num(bound_limit)
                    );
                }
            }
            summary.cells.push(cell);
        }
    }
    summary.files.push(OutputFile {
        path: "scaling.csv".to_string(),
        contents: table,
    });
    summary.check(
        "bai_yin_edge",
        edge_worst <= edge_tol,
        format!("max relative gap of lambda_max/p to (1+sqrt a)^2 for p >= {assert_min_p} = {}", num(edge_worst)),
    );
    summary.check(
        "probit_rate_limit",
        rate_worst <= rate_tol,
        format!("max relative gap of the probit rate to its limit for p >= {assert_min_p} = {}", num(rate_worst)),
    );
    summary.check(
        "spectral_mapping",
        mapping_gap <= MAPPING_TOL,
        format!("max relative gap of direct and spectral probit rates at p = {smallest} = {}", num(mapping_gap)),
    );
    summary.check("logit_bound_below_one", logit_excess < 0.0, format!("max (bound - 1) = {}", num(logit_excess)));
    Ok(summary)
}
