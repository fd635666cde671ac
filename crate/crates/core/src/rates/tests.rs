use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use super::*;
use crate::engine::{find_fixed_point, CaviModel, FixedPoint, LogitState};
use crate::linmetric::{lambda_max, pg_mean, pg_mean_deriv, GaussianMeasure, SpdMatrix};
use crate::targets::{
    build_g_prior, build_scaled_prior, random_gaussian_target, sample_binary_responses,
    sample_design, sample_gmm_data, standard_normal, GaussianTarget, GmmModel, Link, LogitModel,
    ProbitModel, RngStream,
};

fn logit_fixed(n: usize, p: usize, seed: u64, prior: PriorFamily) -> (LogitModel, FixedPoint<LogitState>) {
    let mut rng = RngStream::new(seed, 0);
    let x = sample_design(n, p, &mut rng).unwrap();
    let beta = DVector::from_fn(p, |_, _| 2.0 * standard_normal(&mut rng) / (p as f64).sqrt());
    let y = sample_binary_responses(&x, &beta, Link::Logit, &mut rng).unwrap();
    let q0 = match prior {
        PriorFamily::Scaled { c } => build_scaled_prior(p, c).unwrap(),
        PriorFamily::GPrior { g, c } => build_g_prior(&x, g, c).unwrap(),
    };
    let model = LogitModel::new(x, y, DVector::zeros(p), q0).unwrap();
    let init = model.state_from_mean(&DVector::zeros(p)).unwrap();
    let fp = find_fixed_point(&model, &init, 1e-12, 10_000).unwrap();
    assert!(fp.converged);
    (model, fp)
}

#[test]
fn gaussian_rate_examples() {
    let sep = GaussianTarget::new(SpdMatrix::identity(2), DMatrix::zeros(2, 2), SpdMatrix::identity(2)).unwrap();
    assert_eq!(gaussian_rate(&sep).unwrap().rate, 0.0);
    let one = SpdMatrix::identity(1);
    let t = GaussianTarget::new(one.clone(), DMatrix::from_element(1, 1, 0.7), one).unwrap();
    assert_relative_eq!(gaussian_rate(&t).unwrap().rate, 0.49, epsilon = 1e-15);

    // oracle: SVD of the explicitly formed correlation matrix
    let t = random_gaussian_target(2, 2, 0.1, &mut RngStream::new(4, 0)).unwrap();
    let a = t.q11().inv_sqrt().unwrap() * t.q12() * t.q22().inv_sqrt().unwrap();
    let s = a.svd(false, false).singular_values.max();
    let r = gaussian_rate(&t).unwrap();
    assert!(!r.conservative);
    assert_relative_eq!(r.rate, s * s, max_relative = 1e-10);
}

#[test]
fn gaussian_top_direction_is_sharp() {
    let t = random_gaussian_target(4, 4, 0.1, &mut RngStream::new(5, 0)).unwrap();
    let rate = gaussian_rate(&t).unwrap().rate;
    let v = gaussian_top_direction(&t).unwrap();
    let s = t.state_from_mean(&v).unwrap();
    let next = t.step(&s).unwrap();
    let zero = t.state_from_mean(&DVector::zeros(4)).unwrap();
    let ratio = t.nu_distance(&next, &zero).unwrap() / t.nu_distance(&s, &zero).unwrap();
    assert_relative_eq!(ratio, rate, max_relative = 1e-12);
}

#[test]
fn gmm_rate_examples() {
    let y = DMatrix::from_element(1, 1, 3.0);
    let m = GmmModel::new(0.5, 0.5, 2.0, y).unwrap();
    assert_relative_eq!(gmm_rate_global(&m).unwrap().rate, 0.25 * 9.0 / 2.5, epsilon = 1e-15);
    assert_relative_eq!(gmm_hessian_at_zero(&m)[(0, 0)], -2.5 + 0.25 * 9.0, epsilon = 1e-15);
    let zeros = GmmModel::new(0.5, 0.5, 2.0, DMatrix::zeros(4, 3)).unwrap();
    assert_eq!(gmm_rate_global(&zeros).unwrap().rate, 0.0);
    assert_eq!(gmm_hessian_at_zero(&zeros), DMatrix::identity(3, 3) * -4.0);

    assert_eq!(gmm_lln_limit(&DVector::zeros(3), 0.4).unwrap(), 1.0);
    let b = DVector::from_element(10, 1.0);
    assert_relative_eq!(gmm_lln_limit(&b, 0.1).unwrap(), 2.0, epsilon = 1e-15);
    assert!(gmm_lln_limit(&b, 0.0).is_err());
}

#[test]
fn gmm_lln_is_approached() {
    let beta = DVector::from_element(4, 1.5);
    let y = sample_gmm_data(40_000, 4, &beta, 0.2, 0.5, &mut RngStream::new(6, 0)).unwrap();
    let m = GmmModel::new(0.5, 0.2, 1e-3, y).unwrap();
    let r = gmm_rate_global(&m).unwrap().rate;
    let lim = gmm_lln_limit(&beta, 0.2).unwrap();
    assert!((r - lim).abs() / lim < 0.05, "{r} vs {lim}");
    assert!(r > 1.0);
}

#[test]
fn gmm_local_bound_properties() {
    let beta = DVector::from_vec(vec![2.0, -1.0, 0.5]);
    let y = sample_gmm_data(100, 3, &beta, 0.5, 0.3, &mut RngStream::new(7, 0)).unwrap();
    let m = GmmModel::new(0.3, 0.5, 0.2, y).unwrap();
    let center = beta.clone();
    let exact = gmm_rate_local(&m, &center, 0.0).unwrap();
    assert!(!exact.conservative);
    // oracle: explicit sech² Jacobian at the centre
    let mut jac = DMatrix::zeros(3, 3);
    for i in 0..100 {
        let yi = m.data().row(i).transpose();
        let u = m.half_log_odds() + m.tau() * yi.dot(&center);
        let s = 1.0 / u.cosh();
        jac += &yi * yi.transpose() * (s * s);
    }
    let direct = m.tau() * m.tau() / m.nu_precision() * lambda_max(&jac).unwrap();
    assert_relative_eq!(exact.rate, direct, max_relative = 1e-12);

    let global = gmm_rate_global(&m).unwrap().rate;
    let huge = gmm_rate_local(&m, &center, 1e9).unwrap();
    assert!(huge.conservative);
    assert!((huge.rate - global).abs() <= 1e-12 * global.max(1.0));

    let mut prev = 0.0;
    for k in 0..30 {
        let eps = 0.05 * k as f64;
        let r = gmm_rate_local(&m, &center, eps).unwrap().rate;
        assert!(r >= prev);
        prev = r;
    }
    assert!(gmm_rate_local(&m, &center, -1.0).is_err());
}

#[test]
fn gmm_hessian_sign_matches_global_rate() {
    for seed in 0..20 {
        let mut rng = RngStream::new(seed, 1);
        let scale = 0.3 + 0.1 * seed as f64;
        let beta = DVector::from_element(2, scale);
        let y = sample_gmm_data(60, 2, &beta, 1.0, 0.5, &mut rng).unwrap();
        let m = GmmModel::new(0.5, 1.0, 1.0, y).unwrap();
        let h = gmm_hessian_at_zero(&m);
        let negative = lambda_max(&h).unwrap() < 0.0;
        assert_eq!(negative, gmm_rate_global(&m).unwrap().rate < 1.0);
    }
}

fn probit_with_prior(q0: impl Fn(&DMatrix<f64>) -> SpdMatrix) -> (ProbitModel, DMatrix<f64>) {
    let mut rng = RngStream::new(8, 0);
    let x = sample_design(60, 8, &mut rng).unwrap();
    let y = sample_binary_responses(&x, &DVector::zeros(8), Link::Probit, &mut rng).unwrap();
    let prior = q0(&x);
    (ProbitModel::new(x.clone(), y, DVector::zeros(8), prior).unwrap(), x)
}

#[test]
fn probit_rate_examples() {
    let (m, _) = probit_with_prior(|x| build_g_prior(x, 1.0, 0.0).unwrap());
    assert_relative_eq!(probit_rate(&m).unwrap().rate, 0.5, max_relative = 1e-10);

    let c = 2.0;
    let (m, x) = probit_with_prior(|_| build_scaled_prior(8, c).unwrap());
    let l = lambda_max(&x.tr_mul(&x)).unwrap();
    let t = c / 8.0 * l;
    assert_relative_eq!(probit_rate(&m).unwrap().rate, t / (1.0 + t), max_relative = 1e-10);
    // spectral mapping h(λ) = λ/((p/c) + λ)
    assert_relative_eq!(probit_rate(&m).unwrap().rate, l / (8.0 / c + l), max_relative = 1e-10);

    let (m, _) = probit_with_prior(|_| SpdMatrix::scaled_identity(8, 1e8).unwrap());
    assert!(probit_rate(&m).unwrap().rate < 1e-5);
    let (m, _) = probit_with_prior(|_| SpdMatrix::scaled_identity(8, 1e-8).unwrap());
    let r = probit_rate(&m).unwrap().rate;
    assert!(r < 1.0 && r > 1.0 - 1e-6);
}

#[test]
fn spectral_shortcuts_match_direct_rates() {
    for (prior, build) in [
        (PriorFamily::Scaled { c: 0.7 }, 0),
        (PriorFamily::GPrior { g: 3.0, c: 0.5 }, 1),
        (PriorFamily::GPrior { g: 1.0, c: 0.0 }, 1),
    ] {
        let (m, x) = probit_with_prior(|x| match (build, prior) {
            (0, PriorFamily::Scaled { c }) => build_scaled_prior(8, c).unwrap(),
            (_, PriorFamily::GPrior { g, c }) => build_g_prior(x, g, c).unwrap(),
            _ => unreachable!(),
        });
        let l = lambda_max(&x.tr_mul(&x)).unwrap();
        let short = probit_rate_from_spectrum(prior, l, 8).unwrap();
        assert_relative_eq!(short, probit_rate(&m).unwrap().rate, max_relative = 1e-10);
        let gram = logit_rate_bounds(prior, SpectrumSource::Gram { lambda_max: l, p: 8 }).unwrap();
        let design = logit_rate_bounds(prior, SpectrumSource::Design(&x)).unwrap();
        assert_relative_eq!(gram, design, max_relative = 1e-14);
    }
    assert!(probit_rate_from_spectrum(PriorFamily::Scaled { c: 1.0 }, -1.0, 3).is_err());
    assert!(probit_rate_from_spectrum(PriorFamily::Scaled { c: 1.0 }, 1.0, 0).is_err());
}

#[test]
fn limit_formulas() {
    assert_relative_eq!(probit_rate_limits(PriorFamily::Scaled { c: 1.0 }, 1.0).unwrap(), 0.8, epsilon = 1e-15);
    assert_relative_eq!(probit_rate_limits(PriorFamily::GPrior { g: 1.0, c: 1.0 }, 1.0).unwrap(), 0.5, epsilon = 1e-15);
    for a in [0.5, 1.0, 3.0] {
        assert_eq!(
            probit_rate_limits(PriorFamily::GPrior { g: 3.0, c: 1.0 }, a).unwrap(),
            probit_rate_limits(PriorFamily::GPrior { g: 3.0, c: 1.0 }, 1.0).unwrap()
        );
    }
    let g4 = logit_rate_bounds(PriorFamily::GPrior { g: 4.0, c: 1.0 }, SpectrumSource::AspectRatio(2.0)).unwrap();
    assert_relative_eq!(g4, 0.5, epsilon = 1e-15);
    let s1 = logit_rate_bounds(PriorFamily::Scaled { c: 1.0 }, SpectrumSource::AspectRatio(1.0)).unwrap();
    assert_relative_eq!(s1, 0.5, epsilon = 1e-15);
    for g in [0.5, 1.0, 2.0, 10.0] {
        let prior = PriorFamily::GPrior { g, c: 1.0 };
        let logit = logit_rate_bounds(prior, SpectrumSource::AspectRatio(1.0)).unwrap();
        let probit = probit_rate_limits(prior, 1.0).unwrap();
        assert!(logit < probit);
    }
    assert!(probit_rate_limits(PriorFamily::Scaled { c: -1.0 }, 1.0).is_err());
    assert!(logit_rate_bounds(PriorFamily::GPrior { g: 0.0, c: 1.0 }, SpectrumSource::AspectRatio(1.0)).is_err());
    assert!(bai_yin_edge(0.0).is_err());
    assert_relative_eq!(bai_yin_edge(2.0).unwrap(), 5.828427124746190, epsilon = 1e-12);
}

#[test]
fn logit_zero_tilts_give_zero_rate() {
    let x = sample_design(20, 3, &mut RngStream::new(9, 0)).unwrap();
    let y = vec![true; 20];
    let model = LogitModel::new(x, y, DVector::zeros(3), SpdMatrix::identity(3)).unwrap();
    let q = model.weighted_precision(&DVector::from_element(20, 0.25)).unwrap();
    let fp = FixedPoint {
        state: LogitState {
            c: DVector::zeros(20),
            nu: GaussianMeasure::new(DVector::zeros(3), q).unwrap(),
        },
        converged: true,
        iterations: 1,
        change: 0.0,
    };
    assert_eq!(logit_rate_asymptotic(&model, &fp).unwrap().rate, 0.0);
    let mut unconverged = fp.clone();
    unconverged.converged = false;
    assert!(matches!(logit_rate_asymptotic(&model, &unconverged), Err(crate::Error::Unconverged)));
    assert!(logit_rate_local(&model, &unconverged, 0.1).is_err());
}

#[test]
fn logit_rate_ordering() {
    for (seed, prior) in [
        (10, PriorFamily::GPrior { g: 2.0, c: 1.0 }),
        (11, PriorFamily::Scaled { c: 1.0 }),
        (12, PriorFamily::GPrior { g: 5.0, c: 0.5 }),
    ] {
        let (model, fp) = logit_fixed(120, 12, seed, prior);
        let star = logit_rate_asymptotic(&model, &fp).unwrap();
        let pg = star.side_value("pg_weighted_bound").unwrap();
        let closed = logit_rate_bounds(prior, SpectrumSource::Design(model.design())).unwrap();
        assert!(star.rate <= pg && pg <= closed + 1e-12, "{} {} {}", star.rate, pg, closed);
        let at_zero = logit_rate_local(&model, &fp, 0.0).unwrap();
        assert!(!at_zero.conservative);
        assert!((at_zero.rate - star.rate).abs() <= 1e-12, "{} vs {}", at_zero.rate, star.rate);
        let mut prev = at_zero.rate;
        for k in 1..8 {
            let r = logit_rate_local(&model, &fp, 0.05 * k as f64).unwrap();
            assert!(r.conservative);
            assert!(r.rate >= prev - 1e-15);
            prev = r.rate;
        }
    }
}

#[test]
fn one_dimensional_sup_matches_brute_force() {
    // n = p = 1: the exact coupled supremum is a 1-D search, and the
    // decoupled bound must dominate it
    let x = DMatrix::from_element(1, 1, 1.3);
    let model = LogitModel::new(x, vec![true], DVector::zeros(1), SpdMatrix::identity(1)).unwrap();
    let init = model.state_from_mean(&DVector::zeros(1)).unwrap();
    let fp = find_fixed_point(&model, &init, 1e-13, 10_000).unwrap();
    let eps = 0.4;
    let report = logit_rate_local(&model, &fp, eps).unwrap();
    let (lo, hi) = report.intervals[0];
    let xs: f64 = 1.3;
    let shift = model.shift()[0];
    let phi_star = pg_mean(fp.state.c[0]).unwrap();
    let q_star = fp.state.nu.precision.matrix()[(0, 0)];
    let steps = 1_000_000;
    let (mut sup_d, mut coupled) = (0.0f64, 0.0f64);
    for k in 0..=steps {
        let c = lo + (hi - lo) * k as f64 / steps as f64;
        let d = pg_mean_deriv(c).unwrap().powi(2);
        let q = xs * xs * pg_mean(c).unwrap() + 1.0;
        let s = 1.0 / q + (shift / q).powi(2);
        sup_d = sup_d.max(d);
        coupled = coupled.max(d * xs * xs * s / phi_star);
    }
    assert_relative_eq!(sup_abs_pg_deriv_sq(lo, hi).unwrap(), sup_d, max_relative = 1e-6);
    let brute = xs * xs * coupled / q_star;
    assert!(report.rate >= brute * (1.0 - 1e-9));
}

proptest! {
    #[test]
    fn gaussian_rate_below_one(seed in 0u64..10_000, dz in 1usize..5, db in 1usize..5) {
        let t = random_gaussian_target(dz, db, 0.05, &mut RngStream::new(seed, 0)).unwrap();
        let r = gaussian_rate(&t).unwrap().rate;
        prop_assert!((0.0..1.0).contains(&r));
    }

    #[test]
    fn pg_sup_dominates_samples(lo in 0.0f64..8.0, width in 0.0f64..8.0, t in 0.0f64..1.0) {
        let hi = lo + width;
        let s = sup_abs_pg_deriv_sq(lo, hi).unwrap();
        let probe = pg_mean_deriv(lo + t * width).unwrap().powi(2);
        prop_assert!(s >= probe * (1.0 - 1e-12));
    }
}
