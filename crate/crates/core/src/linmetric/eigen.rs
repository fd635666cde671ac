use nalgebra::{DMatrix, DVector};

use super::check_symmetric;
use crate::{Error, Result};

const MAX_JACOBI_SWEEPS: usize = 100;
const MAX_QL_ITERATIONS: usize = 60;

/// Full spectral decomposition of a symmetric matrix.
///
/// `eigenvalues` are sorted in descending order and column `k` of
/// `eigenvectors` belongs to `eigenvalues[k]`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SymEigen {
    /// `V diag(f(λ)) Vᵀ`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.eigenvalues.len();
        let mut scaled = self.eigenvectors.clone();
        for k in 0..n {
            let w = f(self.eigenvalues[k]);
            scaled.column_mut(k).scale_mut(w);
        }
        let out = &scaled * self.eigenvectors.transpose();
        symmetrize(out)
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.map_spectrum(|l| l)
    }
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Cyclic Jacobi eigendecomposition.
///
/// Rotations sweep the strict upper triangle row by row, so the result is a
/// deterministic function of the input.
pub fn sym_eigen(s: &DMatrix<f64>) -> Result<SymEigen> {
    check_symmetric(s)?;
    let n = s.nrows();
    let mut a = symmetrize(s.clone());
    let mut v = DMatrix::<f64>::identity(n, n);
    let norm = a.norm();

    let mut converged = n < 2 || norm == 0.0;
    let mut sweep = 0;
    while !converged {
        if sweep == MAX_JACOBI_SWEEPS {
            return Err(Error::NoConvergence { sweeps: sweep });
        }
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= f64::EPSILON * norm * 1e-2 || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let g = 100.0 * apq.abs();
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                if apq == 0.0 {
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                rotate_columns(&mut a, p, q, c, sn);
                rotate_rows(&mut a, p, q, c, sn);
                rotate_columns(&mut v, p, q, c, sn);
                // exact zero for the annihilated pair
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
            }
        }
        sweep += 1;
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        converged = off == 0.0 || off.sqrt() <= f64::EPSILON * norm * 1e-2;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]).then(i.cmp(&j)));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| a[(i, i)]));
    let mut eigenvectors = DMatrix::<f64>::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        eigenvectors.set_column(k, &v.column(i));
    }
    Ok(SymEigen {
        eigenvalues,
        eigenvectors,
    })
}

fn rotate_columns(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..m.nrows() {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = c * mkp - s * mkq;
        m[(k, q)] = s * mkp + c * mkq;
    }
}

fn rotate_rows(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..m.ncols() {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = c * mpk - s * mqk;
        m[(q, k)] = s * mpk + c * mqk;
    }
}

/// Eigenvalues only, sorted descending.
///
/// Householder reduction to tridiagonal form followed by implicit QL with
/// Wilkinson-style shifts. Cubic cost with a much smaller constant than a
/// Jacobi sweep, which matters for the 10³-dimensional Gram matrices.
pub fn sym_eigenvalues(s: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_symmetric(s)?;
    let n = s.nrows();
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    // row-major lower triangle
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..=i {
            a[i * n + k] = 0.5 * (s[(i, k)] + s[(k, i)]);
        }
    }
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut a, n, &mut d, &mut e);
    tridiagonal_ql(&mut d, &mut e)?;
    d.sort_by(|x, y| y.total_cmp(x));
    Ok(DVector::from_vec(d))
}

fn tridiagonalize(a: &mut [f64], n: usize, d: &mut [f64], e: &mut [f64]) {
    for i in (1..n).rev() {
        let l = i - 1;
        let row = i * n;
        if l > 0 {
            let scale: f64 = a[row..=row + l].iter().map(|v| v.abs()).sum();
            if scale == 0.0 {
                e[i] = a[row + l];
            } else {
                let mut h = 0.0;
                for k in 0..=l {
                    a[row + k] /= scale;
                    h += a[row + k] * a[row + k];
                }
                let f = a[row + l];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a[row + l] = f - g;
                let mut f = 0.0;
                for j in 0..=l {
                    let mut g = 0.0;
                    let rj = j * n;
                    for k in 0..=j {
                        g += a[rj + k] * a[row + k];
                    }
                    for k in (j + 1)..=l {
                        g += a[k * n + j] * a[row + k];
                    }
                    e[j] = g / h;
                    f += e[j] * a[row + j];
                }
                let hh = f / (h + h);
                for j in 0..=l {
                    let f = a[row + j];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    let rj = j * n;
                    for k in 0..=j {
                        a[rj + k] -= f * e[k] + g * a[row + k];
                    }
                }
            }
        } else {
            e[i] = a[row + l];
        }
    }
    e[0] = 0.0;
    for i in 0..n {
        d[i] = a[i * n + i];
    }
}

fn tridiagonal_ql(d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iterations = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iterations += 1;
            if iterations > MAX_QL_ITERATIONS {
                return Err(Error::NoConvergence { sweeps: iterations });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

pub fn lambda_max(s: &DMatrix<f64>) -> Result<f64> {
    let values = sym_eigenvalues(s)?;
    values
        .iter()
        .next()
        .copied()
        .ok_or(Error::InvalidParameter("empty matrix".into()))
}

pub fn lambda_min(s: &DMatrix<f64>) -> Result<f64> {
    let values = sym_eigenvalues(s)?;
    values
        .iter()
        .last()
        .copied()
        .ok_or(Error::InvalidParameter("empty matrix".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        symmetrize(m)
    }

    fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = DMatrix::from_fn(n + 3, n, |_, _| rng.random_range(-1.0..1.0));
        symmetrize(w.transpose() * w + DMatrix::identity(n, n) * 0.1)
    }

    // independent oracle: plain power iteration on a shifted PSD matrix
    fn power_iteration(s: &DMatrix<f64>) -> f64 {
        let n = s.nrows();
        let mut v = DVector::from_fn(n, |i, _| 1.0 + i as f64 * 0.01);
        v.normalize_mut();
        let mut lam = 0.0;
        for _ in 0..20_000 {
            let w = s * &v;
            let next = v.dot(&w);
            v = w.normalize();
            if (next - lam).abs() <= 1e-15 * next.abs() {
                lam = next;
                break;
            }
            lam = next;
        }
        lam
    }

    #[test]
    fn identity_and_diagonal() {
        let e = sym_eigen(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(e.eigenvalues.as_slice(), &[1.0, 1.0, 1.0]);
        let e = sym_eigen(&DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 5.0]))).unwrap();
        assert_eq!(e.eigenvalues.as_slice(), &[5.0, 2.0, 1.0]);
        let e = sym_eigen(&DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        assert_relative_eq!(e.eigenvalues[0], 3.0, epsilon = 1e-14);
        assert_relative_eq!(e.eigenvalues[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_nonsymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(sym_eigen(&m), Err(Error::NotSymmetric { .. })));
        assert!(matches!(sym_eigenvalues(&m), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn reconstruction_and_orthogonality() {
        for (n, seed) in [(1, 1), (2, 2), (5, 3), (12, 4), (30, 5)] {
            let s = random_symmetric(n, seed);
            let e = sym_eigen(&s).unwrap();
            let scale = s.norm().max(1.0);
            assert!((e.reconstruct() - &s).norm() <= 1e-10 * scale);
            let vtv = e.eigenvectors.transpose() * &e.eigenvectors;
            assert!((vtv - DMatrix::identity(n, n)).norm() <= 1e-10);
            for w in e.eigenvalues.as_slice().windows(2) {
                assert!(w[0] >= w[1]);
            }
        }
    }

    #[test]
    fn deterministic() {
        let s = random_symmetric(9, 77);
        let a = sym_eigen(&s).unwrap();
        let b = sym_eigen(&s).unwrap();
        assert_eq!(a.eigenvalues, b.eigenvalues);
        assert_eq!(a.eigenvectors, b.eigenvectors);
    }

    #[test]
    fn tridiagonal_ql_matches_jacobi() {
        for (n, seed) in [(1, 9), (2, 10), (3, 11), (17, 12), (64, 13)] {
            let s = random_symmetric(n, seed);
            let jac = sym_eigen(&s).unwrap().eigenvalues;
            let ql = sym_eigenvalues(&s).unwrap();
            let scale = s.norm().max(1.0);
            for k in 0..n {
                assert!((jac[k] - ql[k]).abs() <= 1e-12 * scale, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn lambda_max_cases() {
        assert_eq!(lambda_max(&DMatrix::identity(4, 4)).unwrap(), 1.0);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.1, 0.9]));
        assert_relative_eq!(lambda_max(&d).unwrap(), 0.9, max_relative = 1e-14);
        assert_relative_eq!(lambda_min(&d).unwrap(), 0.1, max_relative = 1e-14);
    }

    #[test]
    fn lambda_max_against_power_iteration_and_jacobi() {
        for seed in 0..5 {
            let s = random_spd(5, 100 + seed);
            let fast = lambda_max(&s).unwrap();
            let jac = sym_eigen(&s).unwrap().eigenvalues[0];
            let pow = power_iteration(&s);
            assert_relative_eq!(fast, jac, max_relative = 1e-10);
            assert_relative_eq!(fast, pow, max_relative = 1e-8);
        }
    }
}
