use cavi::engine::{find_fixed_point, run_trace, sphere_init, CaviModel, Trace};
use cavi::linmetric::SpdMatrix;
use cavi::rates::{
    logit_rate_asymptotic, logit_rate_bounds, logit_rate_local, probit_rate, probit_rate_limits,
    PriorFamily, SpectrumSource,
};
use cavi::targets::{
    build_g_prior, build_scaled_prior, responses_from_uniforms, sample_design, sample_uniforms,
    standard_normal, Link, LogitModel, ProbitModel, RngStream,
};
use nalgebra::{DMatrix, DVector};

use super::{empirical_rate, max_ratio_after, stream, tag, CellFiles, Purpose};
use crate::config::{at_least, positive, Common, Params};
use crate::error::{CliError, Result};
use crate::output::num;
use crate::summary::{CellSummary, RunSummary};

// round-off allowance when comparing rates that coincide at eps = 0
const ORDER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Prior {
    Scaled { c: f64 },
    GPrior { g: f64, c: f64 },
    /// `Q₀ = XᵀX`, the closed-form one-half case.
    Gram,
}

impl Prior {
    fn family(self) -> PriorFamily {
        match self {
            Prior::Scaled { c } => PriorFamily::Scaled { c },
            Prior::GPrior { g, c } => PriorFamily::GPrior { g, c },
            Prior::Gram => PriorFamily::GPrior { g: 1.0, c: 0.0 },
        }
    }

    fn build(self, x: &DMatrix<f64>) -> Result<SpdMatrix> {
        Ok(match self {
            Prior::Scaled { c } => build_scaled_prior(x.ncols(), c)?,
            Prior::GPrior { g, c } => build_g_prior(x, g, c)?,
            Prior::Gram => build_g_prior(x, 1.0, 0.0)?,
        })
    }

    fn with_g(self, g: f64) -> Self {
        match self {
            Prior::GPrior { c, .. } => Prior::GPrior { g, c },
            other => other,
        }
    }
}

#[derive(Debug, Clone)]
struct Cell {
    label: String,
    n: usize,
    p: usize,
    prior: Prior,
    group: Group,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Group {
    Base,
    Size,
    G(f64),
}

#[derive(Clone)]
struct Setup {
    common: Common,
    cells: Vec<Cell>,
    signal: f64,
    eps: f64,
    slack: f64,
    size_spread: f64,
    assert_sizes: bool,
    assert_g_order: bool,
}

fn read_setup(p: &Params<'_>, sweeps: usize, burn_in: usize, eps: f64) -> Result<Setup> {
    let common = Common::read(p, sweeps, burn_in, 100)?;
    let n = at_least("n", p.get("n", 400usize)?, 1)?;
    let dim = at_least("p", p.get("p", 200usize)?, 1)?;
    let kind = p.choice("prior", "gprior", &["gprior", "scaled", "gram"])?;
    let g = positive("g", p.get("g", 2.0)?)?;
    let c: f64 = p.get("c", 1.0)?;
    let prior = match kind.as_str() {
        "gprior" if c >= 0.0 => Prior::GPrior { g, c },
        "scaled" if c > 0.0 => Prior::Scaled { c },
        "gram" => Prior::Gram,
        _ => return Err(CliError::value("c", format!("invalid for prior `{kind}`: {c}"))),
    };
    let sizes: Vec<String> = p.list("sizes", &[])?;
    let g_grid: Vec<f64> = p.list("g_grid", &[])?;
    let signal: f64 = p.get("signal", 1.0)?;
    let eps = positive("eps", p.get("eps", eps)?)?;
    let slack: f64 = p.get("slack", 0.02)?;
    let size_spread: f64 = p.get("size_spread", 0.02)?;
    let assert_sizes: bool = p.get("assert_size_invariance", false)?;
    let assert_g_order: bool = p.get("assert_g_order", true)?;

    let mut cells = Vec::new();
    for s in &sizes {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| CliError::value("sizes", format!("expected n:p, got `{s}`")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .ok()
                .filter(|&v| v > 0)
                .ok_or_else(|| CliError::value("sizes", format!("bad size `{t}`")))
        };
        let (cn, cp) = (parse(a)?, parse(b)?);
        cells.push(Cell {
            label: format!("n{cn}_p{cp}"),
            n: cn,
            p: cp,
            prior,
            group: Group::Size,
        });
    }
    if !g_grid.is_empty() && !matches!(prior, Prior::GPrior { .. }) {
        return Err(CliError::value("g_grid", "requires prior = gprior"));
    }
    for &gv in &g_grid {
        positive("g_grid", gv)?;
        cells.push(Cell {
            label: format!("g{}", tag(gv)),
            n,
            p: dim,
            prior: prior.with_g(gv),
            group: Group::G(gv),
        });
    }
    if cells.is_empty() {
        cells.push(Cell {
            label: format!("n{n}_p{dim}"),
            n,
            p: dim,
            prior,
            group: Group::Base,
        });
    }
    Ok(Setup {
        common,
        cells,
        signal,
        eps,
        slack,
        size_spread,
        assert_sizes,
        assert_g_order,
    })
}

/// Design, true coefficients `β₀ ~ N(0, signal²/p)` and the uniforms that
/// generate responses; shared by the paired probit and logit runs.
struct Instance {
    x: DMatrix<f64>,
    beta: DVector<f64>,
    u: Vec<f64>,
}

fn instance(setup: &Setup, ci: usize, rep: usize, cell: &Cell) -> Result<Instance> {
    let seed = setup.common.seed;
    let mut rng = RngStream::new(seed, stream(ci, rep, Purpose::Data));
    let x = sample_design(cell.n, cell.p, &mut rng)?;
    let sd = setup.signal / (cell.p as f64).sqrt();
    let beta = DVector::from_fn(cell.p, |_, _| sd * standard_normal(&mut rng));
    let u = sample_uniforms(cell.n, &mut RngStream::new(seed, stream(ci, rep, Purpose::Responses)));
    Ok(Instance { x, beta, u })
}

struct ProbitRun {
    theory: f64,
    trace: Trace,
    empirical: f64,
    max_ratio: f64,
}

fn probit_run(setup: &Setup, ci: usize, rep: usize, cell: &Cell, inst: &Instance, eps: f64) -> Result<ProbitRun> {
    let y = responses_from_uniforms(&inst.x, &inst.beta, Link::Probit, &inst.u)?;
    let model = ProbitModel::new(inst.x.clone(), y, DVector::zeros(cell.p), cell.prior.build(&inst.x)?)?;
    let theory = probit_rate(&model)?.rate;
    let c = &setup.common;
    let fixed = find_fixed_point(&model, &model.state_from_mean(&DVector::zeros(cell.p))?, c.tol, c.max_iter)?;
    let mut rng = RngStream::new(c.seed, stream(ci, rep, Purpose::Init));
    let start = sphere_init(&model, &fixed.state, 0.9 * eps, &mut rng)?;
    let trace = run_trace(&model, &start, &fixed, c.sweeps)?;
    Ok(ProbitRun {
        theory,
        empirical: empirical_rate(&trace, c.burn_in),
        max_ratio: max_ratio_after(&trace, c.burn_in),
        trace,
    })
}

/// Tallies for the per-run checks.
#[derive(Default)]
struct Tally {
    runs: usize,
    excess: f64,
    over: usize,
}

impl Tally {
    fn add(&mut self, max_ratio: f64, empirical: f64, bound: f64, slack: f64) {
        if self.runs == 0 {
            self.excess = f64::NEG_INFINITY;
        }
        self.runs += 1;
        self.excess = self.excess.max(max_ratio - bound);
        if empirical > bound * (1.0 + slack) {
            self.over += 1;
        }
    }
}

fn limit_line(prior: Prior, n: usize, p: usize, f: impl Fn(PriorFamily, f64) -> cavi::Result<f64>) -> Option<f64> {
    match prior {
        Prior::Gram => None,
        other => f(other.family(), n as f64 / p as f64).ok(),
    }
}

fn grid_checks(setup: &Setup, summary: &mut RunSummary) {
    let pick = |summary: &RunSummary, want: fn(&Group) -> bool| -> Vec<(f64, f64)> {
        setup
            .cells
            .iter()
            .zip(&summary.cells)
            .filter(|(c, _)| want(&c.group))
            .map(|(c, s)| (if let Group::G(g) = c.group { g } else { 0.0 }, s.mean_empirical()))
            .collect()
    };
    let sizes = pick(summary, |g| *g == Group::Size);
    if sizes.len() > 1 {
        let hi = sizes.iter().map(|s| s.1).fold(f64::MIN, f64::max);
        let lo = sizes.iter().map(|s| s.1).fold(f64::MAX, f64::min);
        let spread = (hi - lo) / hi;
        let detail = format!("relative spread of mean empirical rates across sizes = {}", num(spread));
        if setup.assert_sizes {
            summary.check("size_invariance", spread <= setup.size_spread, detail);
        } else {
            summary.inform("size_invariance", spread <= setup.size_spread, detail);
        }
    }
    let mut gs = pick(summary, |g| matches!(g, Group::G(_)));
    if gs.len() > 1 {
        gs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let increasing = gs.windows(2).all(|w| w[1].1 > w[0].1);
        let listing: Vec<String> = gs.iter().map(|(g, r)| format!("{g}:{}", num(*r))).collect();
        let detail = format!("mean empirical rate by g {}", listing.join(" "));
        if setup.assert_g_order {
            summary.check("g_order", increasing, detail);
        } else {
            summary.inform("g_order", increasing, detail);
        }
    }
}

fn probit_checks(summary: &mut RunSummary, t: &Tally, slack: f64) {
    summary.check(
        "monotone_contraction",
        t.excess <= 1e-6,
        format!("max (ratio - rate) after burn-in over {} runs = {}", t.runs, num(t.excess)),
    );
    summary.check(
        "empirical_le_theory",
        t.over == 0,
        format!("{} of {} runs exceed the rate by more than {}", t.over, t.runs, num(slack)),
    );
}

/// Probit regression with the fraction of missing information as theory.
pub(crate) fn run_probit(p: &Params<'_>) -> Result<RunSummary> {
    let setup = read_setup(p, 60, 10, 1.0)?;
    p.finish()?;
    let echo = p.echo();
    let mut summary = RunSummary::new("probit", echo.clone());
    let mut tally = Tally::default();
    for (ci, cell) in setup.cells.iter().enumerate() {
        let mut out = CellSummary::new(&cell.label);
        let mut files = CellFiles::new("probit", &cell.label, &echo);
        let mut theories = Vec::new();
        for rep in 0..setup.common.replications {
            let inst = instance(&setup, ci, rep, cell)?;
            let run = probit_run(&setup, ci, rep, cell, &inst, setup.eps)?;
            if rep == 0 {
                out.theory("probit_rate", run.theory, false);
                if let Some(l) = limit_line(cell.prior, cell.n, cell.p, probit_rate_limits) {
                    out.theory("probit_limit", l, false);
                }
                files.theory_from(&out);
            }
            tally.add(run.max_ratio, run.empirical, run.theory, setup.slack);
            theories.push(run.theory);
            out.empirical.push(run.empirical);
            files.push(run.trace, vec![("theory.probit_rate.replication".into(), num(run.theory))]);
        }
        out.value("probit_rate_mean", theories.iter().sum::<f64>() / theories.len() as f64);
        files.finish(&out, &mut summary);
        summary.cells.push(out);
    }
    probit_checks(&mut summary, &tally, setup.slack);
    grid_checks(&setup, &mut summary);
    Ok(summary)
}

/// Logistic regression plus a probit run on the same design and the same
/// response-generating uniforms.
///
/// The rate expressions for the logit model bound the ratio of squared
/// distances, so per-step W2 ratios are compared with their square roots;
/// `bound = literal` asserts against the unrooted rates instead.
pub(crate) fn run_logit(p: &Params<'_>) -> Result<RunSummary> {
    let setup = read_setup(p, 12, 2, 0.5)?;
    let probit_eps = positive("probit_eps", p.get("probit_eps", 1.0)?)?;
    let probit_burn_in = p.get("probit_burn_in", 10usize)?;
    let probit_sweeps = p.get("probit_sweeps", 60usize)?;
    let paired: bool = p.get("paired", true)?;
    let min_fraction: f64 = p.get("paired_min_fraction", 0.95)?;
    let eps_grid: Vec<f64> = p.list("eps_grid", &[0.0, 0.1, 0.25, 0.5])?;
    if eps_grid.iter().any(|e| !(*e >= 0.0)) {
        return Err(CliError::value("eps_grid", "radii must be nonnegative"));
    }
    let literal = p.choice("bound", "squared", &["squared", "literal"])? == "literal";
    p.finish()?;
    let echo = p.echo();
    let probit_setup = Setup {
        common: Common {
            burn_in: probit_burn_in,
            sweeps: probit_sweeps,
            ..setup.common.clone()
        },
        ..setup.clone()
    };
    if probit_setup.common.sweeps <= probit_setup.common.burn_in {
        return Err(CliError::value("probit_sweeps", "must exceed probit_burn_in"));
    }
    let c = &setup.common;

    let mut summary = RunSummary::new("logit", echo.clone());
    let (mut plain, mut ptally) = (Tally::default(), Tally::default());
    let (mut rooted_excess, mut runs) = (f64::NEG_INFINITY, 0usize);
    let (mut wins, mut pairs) = (0usize, 0usize);
    let (mut order_runs, mut order_fail, mut zero_gap, mut closed_gap) = (0usize, 0usize, 0.0f64, f64::NEG_INFINITY);

    for (ci, cell) in setup.cells.iter().enumerate() {
        let mut out = CellSummary::new(&cell.label);
        let mut files = CellFiles::new("logit", &cell.label, &echo);
        let mut probit_rates = Vec::new();
        for rep in 0..c.replications {
            let inst = instance(&setup, ci, rep, cell)?;
            let y = responses_from_uniforms(&inst.x, &inst.beta, Link::Logit, &inst.u)?;
            let model = LogitModel::new(inst.x.clone(), y, DVector::zeros(cell.p), cell.prior.build(&inst.x)?)?;
            let fixed = find_fixed_point(&model, &model.state_from_mean(&DVector::zeros(cell.p))?, c.tol, c.max_iter)?;
            if !fixed.converged {
                return Err(cavi::Error::Unconverged.into());
            }
            let star = logit_rate_asymptotic(&model, &fixed)?.rate;
            let local = logit_rate_local(&model, &fixed, setup.eps)?;
            let closed = logit_rate_bounds(cell.prior.family(), SpectrumSource::Design(&inst.x))?;

            order_runs += 1;
            for &e in &eps_grid {
                let r = logit_rate_local(&model, &fixed, e)?.rate;
                if e == 0.0 {
                    zero_gap = zero_gap.max((r - star).abs());
                }
                if r < star - ORDER_TOL {
                    order_fail += 1;
                }
                closed_gap = closed_gap.max(r - closed);
            }
            closed_gap = closed_gap.max(star - closed);

            let mut rng = RngStream::new(c.seed, stream(ci, rep, Purpose::Init));
            let start = sphere_init(&model, &fixed.state, 0.9 * setup.eps, &mut rng)?;
            let trace = run_trace(&model, &start, &fixed, c.sweeps)?;
            let empirical = empirical_rate(&trace, c.burn_in);
            let max_ratio = max_ratio_after(&trace, c.burn_in);
            runs += 1;
            rooted_excess = rooted_excess.max(max_ratio - local.rate.sqrt());
            plain.add(max_ratio, empirical, star, setup.slack);
            ptally.add(max_ratio, empirical, star.sqrt(), setup.slack);

            if rep == 0 {
                out.theory("r_star", star, false);
                out.theory("r_eps", local.rate, local.conservative);
                out.theory("sqrt_r_star", star.sqrt(), false);
                out.theory("closed_form_bound", closed, false);
                if let Some(l) = limit_line(cell.prior, cell.n, cell.p, |f, a| {
                    logit_rate_bounds(f, SpectrumSource::AspectRatio(a))
                }) {
                    out.theory("limit_bound", l, false);
                }
                files.theory_from(&out);
            }
            if paired {
                let run = probit_run(&probit_setup, ci, rep, cell, &inst, probit_eps)?;
                pairs += 1;
                if empirical < run.empirical {
                    wins += 1;
                }
                probit_rates.push(run.empirical);
            }
            out.empirical.push(empirical);
            files.push(
                trace,
                vec![
                    ("theory.r_star.replication".into(), num(star)),
                    ("theory.r_eps.replication".into(), num(local.rate)),
                ],
            );
        }
        if paired {
            out.value("probit_empirical_mean", probit_rates.iter().sum::<f64>() / probit_rates.len() as f64);
        }
        files.finish(&out, &mut summary);
        summary.cells.push(out);
    }

    summary.check(
        "monotone_contraction",
        rooted_excess <= 1e-6,
        format!("max (ratio - sqrt r_eps) after burn-in over {runs} runs = {}", num(rooted_excess)),
    );
    let literal_detail = format!(
        "{} of {} runs have empirical rate above r_star by more than {}",
        plain.over,
        plain.runs,
        num(setup.slack)
    );
    let rooted_detail = format!(
        "{} of {} runs have empirical rate above sqrt r_star by more than {}",
        ptally.over,
        ptally.runs,
        num(setup.slack)
    );
    if literal {
        summary.check("empirical_le_r_star", plain.over == 0, literal_detail);
        summary.inform("empirical_le_sqrt_r_star", ptally.over == 0, rooted_detail);
    } else {
        summary.inform("empirical_le_r_star", plain.over == 0, literal_detail);
        summary.check("empirical_le_sqrt_r_star", ptally.over == 0, rooted_detail);
    }
    summary.check(
        "bound_ordering",
        order_fail == 0 && zero_gap <= ORDER_TOL && closed_gap <= ORDER_TOL,
        format!(
            "{order_fail} r_eps < r_star over {order_runs} runs; max |r_eps(0) - r_star| = {}; max (rate - closed form) = {}",
            num(zero_gap),
            num(closed_gap)
        ),
    );
    if paired {
        let fraction = wins as f64 / pairs.max(1) as f64;
        summary.check(
            "logit_faster_than_probit",
            fraction >= min_fraction,
            format!("logit rate below probit rate in {wins} of {pairs} paired runs"),
        );
    }
    grid_checks(&setup, &mut summary);
    Ok(summary)
}
