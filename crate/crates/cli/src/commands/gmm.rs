use cavi::engine::{find_fixed_point, run_trace, sphere_init, unit_direction, CaviModel};
use cavi::rates::{gmm_lln_limit, gmm_rate_global, gmm_rate_local};
use cavi::targets::{sample_gmm_data, standard_normal, GmmModel, RngStream};
use nalgebra::DVector;

use super::{empirical_rate, max_ratio_after, stream, tag, CellFiles, Purpose};
use crate::config::{at_least, positive, Common, Params};
use crate::error::{CliError, Result};
use crate::output::num;
use crate::summary::{CellSummary, RunSummary};

// fixed points from different starts count as equal below this distance
const AGREEMENT_TOL: f64 = 1e-6;

/// Mixture experiments over a grid of mean separations `‖β₀‖`. Data are
/// redrawn per replication along a random direction; the fixed point is
/// located from the true mean, then traced from the sphere of radius
/// `0.9·eps` around it.
pub(crate) fn run(p: &Params<'_>) -> Result<RunSummary> {
    let common = Common::read(p, 100, 10, 100)?;
    let n = at_least("n", p.get("n", 200usize)?, 1)?;
    let d = at_least("d", p.get("d", 10usize)?, 1)?;
    let tau = positive("tau", p.get("tau", 0.1)?)?;
    let tau0 = positive("tau0", p.get("tau0", 0.1)?)?;
    let weight: f64 = p.get("weight", 0.5)?;
    if !(weight > 0.0 && weight < 1.0) {
        return Err(CliError::value("weight", "must lie in (0, 1)"));
    }
    let separations: Vec<f64> = p.list("separations", &[3.0, 4.0, 5.0])?;
    if separations.is_empty() || separations.iter().any(|s| !(*s >= 0.0)) {
        return Err(CliError::value("separations", "need nonnegative values"));
    }
    let eps = positive("eps", p.get("eps", 0.3)?)?;
    let global_inits = p.get("global_inits", 20usize)?;
    let check_lln: bool = p.get("check_lln", false)?;
    let lln_tol = positive("lln_tol", p.get("lln_tol", 0.05)?)?;
    let slack = p.get("slack", 0.02)?;
    let assert_order: bool = p.get("assert_order", true)?;
    p.finish()?;

    let echo = p.echo();
    let mut summary = RunSummary::new("gmm", echo.clone());
    let (mut excess, mut over_slack, mut local_cases) = (f64::NEG_INFINITY, 0usize, 0usize);
    let (mut global_fail, mut global_cases) = (0usize, 0usize);
    let mut lln_worst = 0.0f64;
    let mut lln_subcritical = 0usize;

    for (ci, &sep) in separations.iter().enumerate() {
        let label = format!("sep_{}", tag(sep));
        let mut cell = CellSummary::new(&label);
        let mut files = CellFiles::new("gmm", &label, &echo);
        let mut phases = Vec::with_capacity(common.replications);
        let mut local_rates = Vec::new();
        for rep in 0..common.replications {
            let mut rng = RngStream::new(common.seed, stream(ci, rep, Purpose::Data));
            let beta = unit_direction(d, &mut rng) * sep;
            let y = sample_gmm_data(n, d, &beta, tau, weight, &mut rng)?;
            let model = GmmModel::new(weight, tau, tau0, y)?;
            let global = gmm_rate_global(&model)?.rate;
            let fixed = find_fixed_point(&model, &model.state_from_mean(&beta)?, common.tol, common.max_iter)?;
            if !fixed.converged {
                return Err(cavi::Error::Unconverged.into());
            }
            let center = model.nu_mean(&fixed.state).clone();
            let local = gmm_rate_local(&model, &center, eps)?;
            if rep == 0 {
                cell.theory("r_global", global, false);
                cell.theory("r_eps", local.rate, local.conservative);
                files.theory_from(&cell);
            }
            local_rates.push(local.rate);
            let phase = if global < 1.0 {
                "global"
            } else if local.rate < 1.0 {
                "local"
            } else {
                "supercritical"
            };
            phases.push(phase);

            let mut init_rng = RngStream::new(common.seed, stream(ci, rep, Purpose::Init));
            let start = sphere_init(&model, &fixed.state, 0.9 * eps, &mut init_rng)?;
            let trace = run_trace(&model, &start, &fixed, common.sweeps)?;
            let rate = empirical_rate(&trace, common.burn_in);
            if local.rate < 1.0 {
                local_cases += 1;
                excess = excess.max(max_ratio_after(&trace, common.burn_in) - local.rate);
                if rate > local.rate * (1.0 + slack) {
                    over_slack += 1;
                }
            }

            if global < 1.0 {
                let mut probe = RngStream::new(common.seed, stream(ci, rep, Purpose::Probe));
                let scale = sep.max(1.0);
                for _ in 0..global_inits {
                    let m0 = DVector::from_fn(d, |_, _| scale * standard_normal(&mut probe));
                    let fp = find_fixed_point(&model, &model.state_from_mean(&m0)?, common.tol, common.max_iter)?;
                    global_cases += 1;
                    if !fp.converged || (model.nu_mean(&fp.state) - &center).norm() > AGREEMENT_TOL {
                        global_fail += 1;
                    }
                }
            }

            if check_lln {
                let target = gmm_lln_limit(&beta, tau)?;
                lln_worst = lln_worst.max((global - target).abs() / target);
                if global <= 1.0 {
                    lln_subcritical += 1;
                }
                if rep == 0 {
                    cell.theory("lln_limit", target, false);
                }
            }

            cell.empirical.push(rate);
            files.push(
                trace,
                vec![
                    ("theory.r_global.replication".into(), num(global)),
                    ("theory.r_eps.replication".into(), num(local.rate)),
                    ("phase".into(), phase.into()),
                ],
            );
        }
        for name in ["global", "local", "supercritical"] {
            let count = phases.iter().filter(|&&ph| ph == name).count();
            cell.notes.push((format!("phase_{name}_count"), count.to_string()));
        }
        cell.value("r_eps_max", local_rates.iter().copied().fold(0.0, f64::max));
        files.finish(&cell, &mut summary);
        summary.cells.push(cell);
    }

    if local_cases > 0 {
        summary.check(
            "local_monotone_contraction",
            excess <= 1e-6,
            format!("max (ratio - r_eps) after burn-in over {local_cases} runs = {}", num(excess)),
        );
        summary.check(
            "empirical_le_r_eps",
            over_slack == 0,
            format!("{over_slack} of {local_cases} runs exceed r_eps by more than {}", num(slack)),
        );
    }
    if global_cases > 0 {
        summary.check(
            "global_convergence",
            global_fail == 0,
            format!("{global_fail} of {global_cases} random starts missed the fixed point"),
        );
    }
    if check_lln {
        summary.check(
            "lln_limit",
            lln_worst <= lln_tol && lln_subcritical == 0,
            format!("max relative gap to 1 + tau |beta0|^2 = {}; {lln_subcritical} runs with r <= 1", num(lln_worst)),
        );
    }
    if assert_order && separations.len() > 1 {
        let mut order: Vec<(f64, f64)> = separations
            .iter()
            .zip(&summary.cells)
            .map(|(&s, c)| (s, c.mean_empirical()))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let decreasing = order.windows(2).all(|w| w[1].1 < w[0].1);
        let listing: Vec<String> = order.iter().map(|(s, r)| format!("{s}:{}", num(*r))).collect();
        summary.check("separation_order", decreasing, format!("mean empirical rate by separation {}", listing.join(" ")));
    }
    Ok(summary)
}
