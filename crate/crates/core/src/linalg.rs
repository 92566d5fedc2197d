//! Small dense symmetric linear algebra: cyclic Jacobi eigensolver,
//! Moore–Penrose pseudoinverse, PSD square root.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Eigen-decomposition `a = v diag(w) vᵀ` of a symmetric matrix.
/// Eigenvalues are returned in ascending order, columns of `v` matching.
pub fn sym_eigen(a: &Mat) -> (Vector, Mat) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "sym_eigen needs a square matrix");
    let mut m = (a + a.transpose()) * 0.5;
    let mut v = Mat::identity(n, n);
    let scale = m.iter().fold(0.0f64, |s, x| s.max(x.abs())).max(1e-300);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let w = Vector::from_iterator(n, idx.iter().map(|&i| m[(i, i)]));
    let vs = Mat::from_fn(n, n, |r, c| v[(r, idx[c])]);
    (w, vs)
}

pub fn min_eigenvalue(a: &Mat) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    sym_eigen(a).0[0]
}

fn rebuild(v: &Mat, w: impl Fn(f64) -> f64, vals: &Vector) -> Mat {
    let n = v.nrows();
    let mut out = Mat::zeros(n, n);
    for k in 0..vals.len() {
        let f = w(vals[k]);
        if f == 0.0 {
            continue;
        }
        let col = v.column(k);
        out += f * col * col.transpose();
    }
    out
}

/// Pseudoinverse of a symmetric matrix: eigenvalues with |λ| ≤ tol·max|λ| are dropped.
pub fn pinv(a: &Mat, tol: f64) -> Mat {
    let (w, v) = sym_eigen(a);
    let lmax = w.iter().fold(0.0f64, |s, x| s.max(x.abs()));
    if lmax == 0.0 {
        return Mat::zeros(a.nrows(), a.ncols());
    }
    rebuild(&v, |l| if l.abs() > tol * lmax { 1.0 / l } else { 0.0 }, &w)
}

/// Symmetric square root of a PSD matrix (tiny negative eigenvalues floored at 0).
pub fn sqrt_psd(a: &Mat) -> Result<Mat> {
    let (w, v) = sym_eigen(a);
    let lmax = w.iter().fold(0.0f64, |s, x| s.max(x.abs()));
    if w.len() > 0 && w[0] < -1e-9 * lmax.max(1.0) {
        return Err(Error::Domain(format!("matrix not PSD: min eigenvalue {:.3e}", w[0])));
    }
    Ok(rebuild(&v, |l| l.max(0.0).sqrt(), &w))
}

/// Orthogonal projector onto the range of a symmetric matrix.
pub fn range_projector(a: &Mat, tol: f64) -> Mat {
    let (w, v) = sym_eigen(a);
    let lmax = w.iter().fold(0.0f64, |s, x| s.max(x.abs()));
    if lmax == 0.0 {
        return Mat::zeros(a.nrows(), a.ncols());
    }
    rebuild(&v, |l| if l.abs() > tol * lmax { 1.0 } else { 0.0 }, &w)
}

/// Inverse of a symmetric positive-definite matrix, with a condition-number report on failure.
pub fn spd_inverse(a: &Mat, what: &str) -> Result<Mat> {
    let (w, v) = sym_eigen(a);
    let lmax = w.iter().fold(0.0f64, |s, x| s.max(x.abs()));
    let lmin = if w.len() > 0 { w[0] } else { 0.0 };
    if !(lmin > 1e-12 * lmax.max(1e-300)) {
        let cond = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
        return Err(Error::Singular(format!("{what}: condition number {cond:.3e} (λmin={lmin:.3e}, λmax={lmax:.3e})")));
    }
    Ok(rebuild(&v, |l| 1.0 / l, &w))
}

pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::RngStream;
    use proptest::prelude::*;

    fn random_sym(rng: &mut RngStream, n: usize, rank: usize) -> Mat {
        let b = Mat::from_fn(n, rank, |_, _| rng.std_normal());
        let signs = Vector::from_fn(rank, |i, _| if i % 3 == 2 { -1.0 } else { 1.0 });
        &b * Mat::from_diagonal(&signs) * b.transpose()
    }

    fn close(a: &Mat, b: &Mat, tol: f64) -> bool {
        (a - b).amax() <= tol * (1.0 + b.amax())
    }

    #[test]
    fn eigen_reconstructs() {
        let mut rng = RngStream::new(5, 0);
        for n in 1..7 {
            let a = random_sym(&mut rng, n, n);
            let (w, v) = sym_eigen(&a);
            let back = &v * Mat::from_diagonal(&w) * v.transpose();
            assert!(close(&back, &a, 1e-12));
            assert!(close(&(v.transpose() * &v), &Mat::identity(n, n), 1e-12));
            for k in 1..n {
                assert!(w[k - 1] <= w[k]);
            }
        }
    }

    #[test]
    fn eigen_matches_nalgebra() {
        let mut rng = RngStream::new(6, 0);
        let a = random_sym(&mut rng, 5, 5);
        let (w, _) = sym_eigen(&a);
        let mut ref_w: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        ref_w.sort_by(f64::total_cmp);
        for (x, y) in w.iter().zip(ref_w) {
            assert!((x - y).abs() < 1e-10 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn pinv_examples() {
        let i = Mat::identity(3, 3);
        assert!(close(&pinv(&i, 1e-10), &i, 1e-14));
        let z = Mat::zeros(3, 3);
        assert_eq!(pinv(&z, 1e-10), z);
        let v = Vector::from_vec(vec![1.0, 2.0, -2.0]) / 3.0;
        let vvt = &v * v.transpose();
        assert!(close(&pinv(&vvt, 1e-10), &vvt, 1e-12));
    }

    #[test]
    fn pinv_penrose_mixed_rank() {
        let mut rng = RngStream::new(11, 0);
        for t in 0..100 {
            let n = 2 + t % 5;
            let rank = t % (n + 1);
            let a = random_sym(&mut rng, n, rank);
            let g = pinv(&a, 1e-10);
            assert!(close(&(&a * &g * &a), &a, 1e-8), "AGA");
            assert!(close(&(&g * &a * &g), &g, 1e-8), "GAG");
            let ag = &a * &g;
            let ga = &g * &a;
            assert!(close(&ag.transpose(), &ag, 1e-8), "AG sym");
            assert!(close(&ga.transpose(), &ga, 1e-8), "GA sym");
        }
    }

    #[test]
    fn sqrt_and_inverse() {
        let mut rng = RngStream::new(12, 0);
        let b = Mat::from_fn(4, 4, |_, _| rng.std_normal());
        let a = &b * b.transpose() + Mat::identity(4, 4);
        let r = sqrt_psd(&a).unwrap();
        assert!(close(&(&r * &r), &a, 1e-12));
        let inv = spd_inverse(&a, "a").unwrap();
        assert!(close(&(&inv * &a), &Mat::identity(4, 4), 1e-10));
        let sing = Mat::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(spd_inverse(&sing, "s"), Err(Error::Singular(_))));
        assert!(sqrt_psd(&Mat::from_diagonal_element(2, 2, -1.0)).is_err());
    }

    proptest! {
        #[test]
        fn projector_idempotent(seed in any::<u64>(), rank in 0usize..4) {
            let mut rng = RngStream::new(seed, 1);
            let a = random_sym(&mut rng, 4, rank);
            let p = range_projector(&a, 1e-10);
            prop_assert!(close(&(&p * &p), &p, 1e-10));
            prop_assert!(close(&p.transpose(), &p, 1e-12));
            prop_assert!(close(&(&p * &a), &a, 1e-9));
        }
    }
}
