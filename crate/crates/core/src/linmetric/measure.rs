use nalgebra::{DMatrix, DVector};

use super::eigen::{sym_eigen, sym_eigenvalues, symmetrize};
use super::spd::SpdMatrix;
use super::EIGEN_CLAMP;
use crate::error::check_dim;
use crate::Result;

/// Gaussian measure in precision parametrisation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    pub mean: DVector<f64>,
    pub precision: SpdMatrix,
}

impl GaussianMeasure {
    pub fn new(mean: DVector<f64>, precision: SpdMatrix) -> Result<Self> {
        check_dim(precision.dim(), mean.len())?;
        Ok(Self { mean, precision })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.precision.inverse()
    }
}

/// Wasserstein-2 distance in the geometry `‖x‖_M = ‖M^{1/2}x‖`.
///
/// Equal precisions reduce exactly to the weighted mean distance. When the
/// metric coincides with one of the precisions the covariance term is taken
/// from the whitened spectrum, which avoids two matrix square roots.
pub fn gaussian_w2(g1: &GaussianMeasure, g2: &GaussianMeasure, m: &SpdMatrix) -> Result<f64> {
    check_dim(g1.dim(), g2.dim())?;
    check_dim(g1.dim(), m.dim())?;
    let delta = &g1.mean - &g2.mean;
    let mean_part = m.quad_form(&delta)?;
    let cov_part = if g1.precision == g2.precision {
        0.0
    } else if *m == g2.precision {
        whitened_bures(m, &g1.precision)?
    } else if *m == g1.precision {
        whitened_bures(m, &g2.precision)?
    } else {
        general_bures(m, &g1.covariance(), &g2.covariance())?
    };
    Ok((mean_part + cov_part).max(0.0).sqrt())
}

// covariance term when the metric equals the other precision: the whitened
// covariance M^{1/2} Σ M^{1/2} shares its spectrum with (L⁻¹ Q L⁻ᵀ)⁻¹
fn whitened_bures(m: &SpdMatrix, other_precision: &SpdMatrix) -> Result<f64> {
    let y = m.solve_lower_matrix(other_precision.matrix())?;
    let z = symmetrize(m.solve_lower_matrix(&y.transpose())?);
    let mu = sym_eigenvalues(&z)?;
    Ok(mu
        .iter()
        .map(|&u| {
            // (√(1/u) − 1)² = (1 − u)² / (u (1 + √u)²)
            let su = u.sqrt();
            (1.0 - u) * (1.0 - u) / (u * (1.0 + su) * (1.0 + su))
        })
        .sum())
}

fn psd_sqrt(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let e = sym_eigen(&symmetrize(s.clone()))?;
    let top = e.eigenvalues[0].abs().max(f64::MIN_POSITIVE);
    Ok(e.map_spectrum(|l| if l <= EIGEN_CLAMP * top { 0.0 } else { l.sqrt() }))
}

fn general_bures(m: &SpdMatrix, s1: &DMatrix<f64>, s2: &DMatrix<f64>) -> Result<f64> {
    let r = psd_sqrt(m.matrix())?;
    let a1 = symmetrize(&r * s1 * &r);
    let a2 = symmetrize(&r * s2 * &r);
    let root1 = psd_sqrt(&a1)?;
    let cross = psd_sqrt(&symmetrize(&root1 * &a2 * &root1))?;
    Ok(a1.trace() + a2.trace() - 2.0 * cross.trace())
}

/// Relative Fisher information of `g1` with respect to `g2`, with gradients
/// measured in the dual norm of `M`:
/// `tr(M⁻¹ D Σ₁ D) + Δᵀ Q₂ M⁻¹ Q₂ Δ`, `D = Q₂ − Q₁`, `Δ = m₁ − m₂`.
pub fn gaussian_fisher_info(
    g1: &GaussianMeasure,
    g2: &GaussianMeasure,
    m: &SpdMatrix,
) -> Result<f64> {
    check_dim(g1.dim(), g2.dim())?;
    check_dim(g1.dim(), m.dim())?;
    let delta = &g1.mean - &g2.mean;
    let d = g2.precision.matrix() - g1.precision.matrix();
    // ‖L_M⁻¹ D L₁⁻ᵀ‖_F² with Q₁ = L₁L₁ᵀ
    let y = m.solve_lower_matrix(&d)?;
    let bt = g1.precision.solve_lower_matrix(&y.transpose())?;
    let trace_part = bt.norm_squared();
    let grad = g2.precision.matrix() * delta;
    let mean_part = m.inv_quad_form(&grad)?;
    Ok(trace_part + mean_part)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> SpdMatrix {
        let w = DMatrix::from_fn(n + 2, n, |_, _| rng.random_range(-1.0..1.0));
        SpdMatrix::new(w.transpose() * w + DMatrix::identity(n, n) * 0.2).unwrap()
    }

    fn random_gaussian(n: usize, rng: &mut ChaCha8Rng) -> GaussianMeasure {
        let mean = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        GaussianMeasure::new(mean, random_spd(n, rng)).unwrap()
    }

    fn scalar(mean: f64, var: f64) -> GaussianMeasure {
        GaussianMeasure::new(
            DVector::from_element(1, mean),
            SpdMatrix::from_diagonal(&[1.0 / var]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn w2_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_gaussian(3, &mut rng);
        let m = random_spd(3, &mut rng);
        assert_eq!(gaussian_w2(&g, &g, &m).unwrap(), 0.0);

        let q = random_spd(3, &mut rng);
        let a = GaussianMeasure::new(DVector::from_vec(vec![1.0, 0.0, -1.0]), q.clone()).unwrap();
        let b = GaussianMeasure::new(DVector::from_vec(vec![0.5, 2.0, 0.0]), q.clone()).unwrap();
        let expected = (crate::linmetric::spd_sqrt(&q).unwrap().matrix() * (&a.mean - &b.mean)).norm();
        assert_relative_eq!(gaussian_w2(&a, &b, &q).unwrap(), expected, max_relative = 1e-12);

        let one = SpdMatrix::identity(1);
        assert_relative_eq!(
            gaussian_w2(&scalar(0.0, 1.0), &scalar(0.0, 4.0), &one).unwrap(),
            1.0,
            epsilon = 1e-14
        );
        // neither precision equals the metric
        let half = SpdMatrix::from_diagonal(&[0.5]).unwrap();
        assert_relative_eq!(
            gaussian_w2(&scalar(0.0, 2.0), &scalar(0.0, 8.0), &half).unwrap(),
            (0.5f64).sqrt() * (8f64.sqrt() - 2f64.sqrt()),
            max_relative = 1e-12
        );
    }

    #[test]
    fn w2_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let g1 = random_gaussian(4, &mut rng);
            let g2 = random_gaussian(4, &mut rng);
            let whitened = gaussian_w2(&g1, &g2, &g2.precision).unwrap();
            let general = general_bures(&g2.precision, &g1.covariance(), &g2.covariance()).unwrap()
                + g2.precision.quad_form(&(&g1.mean - &g2.mean)).unwrap();
            assert_relative_eq!(whitened, general.sqrt(), max_relative = 1e-8);
        }
    }

    #[test]
    fn w2_dimension_mismatch() {
        let a = scalar(0.0, 1.0);
        let b = GaussianMeasure::new(DVector::zeros(2), SpdMatrix::identity(2)).unwrap();
        assert!(gaussian_w2(&a, &b, &SpdMatrix::identity(1)).is_err());
        assert!(GaussianMeasure::new(DVector::zeros(3), SpdMatrix::identity(2)).is_err());
    }

    #[test]
    fn fisher_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = random_gaussian(3, &mut rng);
        let m = random_spd(3, &mut rng);
        assert_eq!(gaussian_fisher_info(&g, &g, &m).unwrap(), 0.0);

        let bq = random_spd(3, &mut rng);
        let a = GaussianMeasure::new(DVector::from_vec(vec![1.0, 2.0, 3.0]), bq.clone()).unwrap();
        let c = GaussianMeasure::new(DVector::from_vec(vec![0.0, -1.0, 1.0]), bq.clone()).unwrap();
        let expected = (bq.matrix() * (&a.mean - &c.mean)).norm_squared();
        assert_relative_eq!(
            gaussian_fisher_info(&a, &c, &SpdMatrix::identity(3)).unwrap(),
            expected,
            max_relative = 1e-12
        );

        let one = SpdMatrix::identity(1);
        assert_relative_eq!(
            gaussian_fisher_info(&scalar(0.0, 1.0), &scalar(0.0, 2.0), &one).unwrap(),
            0.25,
            epsilon = 1e-14
        );
    }

    proptest! {
        #[test]
        fn w2_is_a_metric(seed in 0u64..5000, n in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_gaussian(n, &mut rng);
            let b = random_gaussian(n, &mut rng);
            let c = random_gaussian(n, &mut rng);
            let m = random_spd(n, &mut rng);
            let ab = gaussian_w2(&a, &b, &m).unwrap();
            let ba = gaussian_w2(&b, &a, &m).unwrap();
            let bc = gaussian_w2(&b, &c, &m).unwrap();
            let ac = gaussian_w2(&a, &c, &m).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-10 * (1.0 + ab));
            prop_assert!(ac <= ab + bc + 1e-9);
            prop_assert!(ab > 0.0);
            prop_assert_eq!(gaussian_w2(&a, &a, &m).unwrap(), 0.0);
        }

        #[test]
        fn fisher_nonnegative(seed in 0u64..5000, n in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_gaussian(n, &mut rng);
            let b = random_gaussian(n, &mut rng);
            let m = random_spd(n, &mut rng);
            prop_assert!(gaussian_fisher_info(&a, &b, &m).unwrap() > 0.0);
        }

        #[test]
        fn transport_information(seed in 0u64..5000, n in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = random_spd(n, &mut rng);
            let gamma = GaussianMeasure::new(DVector::zeros(n), b.clone()).unwrap();
            let rho = random_gaussian(n, &mut rng);
            let w = gaussian_w2(&rho, &gamma, &b).unwrap();
            let i = gaussian_fisher_info(&rho, &gamma, &b).unwrap();
            prop_assert!(w * w <= i * (1.0 + 1e-12) + 1e-14);
        }
    }
}
