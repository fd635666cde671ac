use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use super::*;
use crate::engine::{gaussian_step, GaussianState};
use crate::rates::gaussian_rate;
use crate::targets::{random_gaussian_target, standard_normal};

fn scalar(rho: f64) -> QuadraticObjective {
    let one = SpdMatrix::identity(1);
    QuadraticObjective::new(one.clone(), DMatrix::from_element(1, 1, rho), one, None, None).unwrap()
}

// identity blocks, cross block U diag(s) Vᵀ with a fixed rotation pair
fn two_by_two(s: [f64; 2]) -> (QuadraticObjective, DVector<f64>, DVector<f64>) {
    let (c, t) = (0.6f64, 0.8f64);
    let u = DMatrix::from_row_slice(2, 2, &[c, -t, t, c]);
    let v = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]) / 2f64.sqrt();
    let q12 = &u * DMatrix::from_diagonal(&DVector::from_row_slice(&s)) * v.transpose();
    let obj =
        QuadraticObjective::new(SpdMatrix::identity(2), q12, SpdMatrix::identity(2), None, None)
            .unwrap();
    (obj, v.column(0).into_owned(), v.column(1).into_owned())
}

fn random_cross(dx: usize, dy: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = RngStream::new(seed, 3);
    DMatrix::from_fn(dx, dy, |_, _| standard_normal(&mut rng))
}

#[test]
fn separable_objective_is_solved_in_one_sweep() {
    let q11 = SpdMatrix::from_diagonal(&[2.0, 3.0]).unwrap();
    let q22 = SpdMatrix::from_diagonal(&[1.0, 5.0, 0.5]).unwrap();
    let b1 = DVector::from_row_slice(&[1.0, -1.0]);
    let b2 = DVector::from_row_slice(&[0.5, 2.0, -3.0]);
    let obj = QuadraticObjective::new(q11, DMatrix::zeros(2, 3), q22, Some(b1), Some(b2)).unwrap();
    let opt = obj.optimum().unwrap();
    let trace = altmin_run(&obj, &DVector::from_element(3, 7.0), 3, &opt).unwrap();
    assert!(trace.records[1].dist_y < 1e-15);
    assert!(trace.records[1].dist_x.unwrap() < 1e-15);
    assert_eq!(quadratic_constants(&obj).unwrap().rate(), 0.0);
}

#[test]
fn scalar_ratio_is_rho_squared() {
    let rho = 0.7;
    let obj = scalar(rho);
    let opt = obj.optimum().unwrap();
    let trace = altmin_run(&obj, &DVector::from_element(1, 1.0), 20, &opt).unwrap();
    for r in &trace.records[1..] {
        assert_relative_eq!(r.ratio_y.unwrap(), rho * rho, epsilon = 1e-12);
    }
    for r in &trace.records[2..] {
        assert_relative_eq!(r.ratio_x.unwrap(), rho * rho, epsilon = 1e-12);
    }
    assert_relative_eq!(quadratic_constants(&obj).unwrap().rate(), rho * rho, epsilon = 1e-15);
}

#[test]
fn scalar_sharpness_report() {
    let report = verify_sharpness(&scalar(0.3), &DVector::from_element(1, 2.0), 1).unwrap();
    assert_relative_eq!(report.theory, 0.09, epsilon = 1e-15);
    assert_relative_eq!(report.empirical, 0.09, epsilon = 1e-12);
    assert!(report.sharp && report.bounded);
}

#[test]
fn trajectory_matches_gaussian_cavi_means() {
    let mut rng = RngStream::new(11, 0);
    let target = random_gaussian_target(4, 3, 0.5, &mut rng).unwrap();
    let obj = QuadraticObjective::from_target(&target);
    let opt = obj.optimum().unwrap();
    let y0 = DVector::from_row_slice(&[1.0, -2.0, 0.5]);
    let trace = altmin_run(&obj, &y0, 15, &opt).unwrap();
    let mut state = GaussianState {
        mu_mean: DVector::zeros(4),
        nu_mean: y0,
    };
    for r in &trace.records[1..] {
        state = gaussian_step(&target, &state).unwrap();
        assert!((r.x.as_ref().unwrap() - &state.mu_mean).amax() < 1e-12);
        assert!((&r.y - &state.nu_mean).amax() < 1e-12);
    }
}

#[test]
fn identity_blocks_rate_matches_gaussian_rate() {
    let q12 = random_cross(4, 3, 5) * 0.2;
    let obj =
        QuadraticObjective::new(SpdMatrix::identity(4), q12.clone(), SpdMatrix::identity(3), None, None)
            .unwrap();
    let target =
        GaussianTarget::new(SpdMatrix::identity(4), q12, SpdMatrix::identity(3)).unwrap();
    let theory = quadratic_constants(&obj).unwrap().rate();
    assert_relative_eq!(theory, gaussian_rate(&target).unwrap().rate, max_relative = 1e-12);
}

#[test]
fn top_and_bottom_singular_directions() {
    let (obj, top, bottom) = two_by_two([0.8, 0.2]);
    let report = verify_sharpness(&obj, &top, 2).unwrap();
    assert_relative_eq!(report.theory, 0.64, epsilon = 1e-12);
    assert_relative_eq!(report.user_ratio, 0.64, epsilon = 1e-10);
    assert!(report.sharp && report.bounded);

    let report = verify_sharpness(&obj, &bottom, 2).unwrap();
    assert_relative_eq!(report.user_ratio, 0.04, epsilon = 1e-10);
    assert!(report.user_ratio <= report.theory);
    let probe = report.probes.iter().find(|p| p.label == "bottom").unwrap();
    assert_relative_eq!(probe.max_ratio, 0.04, epsilon = 1e-10);
}

#[test]
fn non_contraction_is_rejected() {
    // PD jointly, but the blockwise rate exceeds one
    let q11 = SpdMatrix::from_diagonal(&[1.0, 100.0]).unwrap();
    let q22 = SpdMatrix::from_diagonal(&[100.0, 1.0]).unwrap();
    let q12 = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 5.0]);
    let obj = QuadraticObjective::new(q11, q12, q22, None, None).unwrap();
    assert!(quadratic_constants(&obj).unwrap().rate() >= 1.0);
    assert!(matches!(
        verify_sharpness(&obj, &DVector::zeros(2), 0),
        Err(Error::InvalidParameter(_))
    ));
}

#[test]
fn anisotropic_blocks_stay_bounded() {
    let q11 = SpdMatrix::from_diagonal(&[1.0, 3.0, 2.0]).unwrap();
    let q22 = SpdMatrix::from_diagonal(&[4.0, 1.5]).unwrap();
    let q12 = random_cross(3, 2, 9) * 0.3;
    let obj = QuadraticObjective::new(q11, q12, q22, None, None).unwrap();
    let report = verify_sharpness(&obj, &DVector::from_element(2, 1.0), 4).unwrap();
    assert!(report.theory < 1.0);
    assert!(report.bounded);
    assert_eq!(report.probes.len(), 11);
}

#[test]
fn closure_objective_drives_the_same_iteration() {
    let inner = scalar(0.5);
    let a = inner.clone();
    let b = inner.clone();
    let c = inner.clone();
    let d = inner.clone();
    let e = inner.clone();
    let obj = FnBiObjective {
        value: Box::new(move |x, y| a.value(x, y)),
        grad_x: Box::new(move |x, y| b.grad_x(x, y)),
        grad_y: Box::new(move |x, y| c.grad_y(x, y)),
        argmin_x: Box::new(move |y| d.argmin_x(y)),
        argmin_y: Box::new(move |x| e.argmin_y(x)),
    };
    let opt = inner.optimum().unwrap();
    let y0 = DVector::from_element(1, 3.0);
    let lhs = altmin_run(&obj, &y0, 5, &opt).unwrap();
    let rhs = altmin_run(&inner, &y0, 5, &opt).unwrap();
    assert_eq!(lhs, rhs);
}

#[test]
fn oracle_failure_propagates() {
    let obj = FnBiObjective {
        value: Box::new(|_, _| 0.0),
        grad_x: Box::new(|x, _| x.clone()),
        grad_y: Box::new(|_, y| y.clone()),
        argmin_x: Box::new(|_| Err(Error::InvalidParameter("off path".into()))),
        argmin_y: Box::new(|x| Ok(x.clone())),
    };
    let opt = (DVector::zeros(1), DVector::zeros(1));
    assert!(altmin_run(&obj, &DVector::zeros(1), 2, &opt).is_err());
}

fn quadratic_strategy() -> impl Strategy<Value = (QuadraticObjective, DVector<f64>)> {
    (1usize..5, 1usize..5, any::<u64>(), 0.05f64..3.0).prop_map(|(dx, dy, seed, ridge)| {
        let mut rng = RngStream::new(seed, 1);
        let target = random_gaussian_target(dx, dy, ridge, &mut rng).unwrap();
        let b = DVector::from_fn(dx + dy, |_, _| standard_normal(&mut rng));
        let obj = QuadraticObjective::new(
            target.q11().clone(),
            target.q12().clone(),
            target.q22().clone(),
            Some(b.rows(0, dx).into_owned()),
            Some(b.rows(dx, dy).into_owned()),
        )
        .unwrap();
        let y0 = DVector::from_fn(dy, |_, _| 3.0 * standard_normal(&mut rng));
        (obj, y0)
    })
}

proptest! {
    #[test]
    fn objective_never_increases((obj, y0) in quadratic_strategy()) {
        let opt = obj.optimum().unwrap();
        let trace = altmin_run(&obj, &y0, 25, &opt).unwrap();
        prop_assert!(trace.is_monotone(1e-12));
        let fstar = obj.value(&opt.0, &opt.1);
        for v in &trace.half_step_values {
            prop_assert!(*v >= fstar - 1e-10 * (1.0 + fstar.abs()));
        }
    }

    #[test]
    fn oracles_are_stationary((obj, y0) in quadratic_strategy()) {
        let x = obj.argmin_x(&y0).unwrap();
        prop_assert!(obj.grad_x(&x, &y0).norm() <= 1e-10 * (1.0 + y0.norm()));
        let y = obj.argmin_y(&x).unwrap();
        prop_assert!(obj.grad_y(&x, &y).norm() <= 1e-10 * (1.0 + x.norm()));
    }

    #[test]
    fn blocks_contract_within_theorem_rate((obj, y0) in quadratic_strategy()) {
        let rate = quadratic_constants(&obj).unwrap().rate();
        prop_assume!(rate < 1.0);
        let opt = obj.optimum().unwrap();
        let trace = altmin_run(&obj, &y0, 10, &opt).unwrap();
        let floor = 1e-6 * trace.records[0].dist_y;
        if let Some(r) = trace.max_ratio_above(floor) {
            prop_assert!(r <= rate + 1e-9, "ratio {} above rate {}", r, rate);
        }
    }

    #[test]
    fn isotropic_blocks_are_sharp(
        dx in 1usize..5, dy in 1usize..5, seed in any::<u64>(),
        a in 0.5f64..3.0, b in 0.5f64..3.0, target in 0.05f64..0.95,
    ) {
        let raw = random_cross(dx, dy, seed);
        let s = lambda_max(&raw.tr_mul(&raw)).unwrap().sqrt();
        prop_assume!(s > 1e-6);
        let q12 = raw * ((target * a * b).sqrt() / s);
        let obj = QuadraticObjective::new(
            SpdMatrix::scaled_identity(dx, a).unwrap(),
            q12,
            SpdMatrix::scaled_identity(dy, b).unwrap(),
            None,
            None,
        )
        .unwrap();
        let report = verify_sharpness(&obj, &DVector::from_element(dy, 1.0), seed).unwrap();
        prop_assert!((report.theory - target).abs() < 1e-12);
        prop_assert!(report.sharp, "empirical {} theory {}", report.empirical, report.theory);
        prop_assert!(report.bounded);
    }
}
