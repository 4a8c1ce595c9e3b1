//! Shared oracles for the property tests: deliberately independent,
//! brute-force implementations that the engine's fast paths are checked
//! against.

// not every test binary uses every oracle
#![allow(dead_code)]

use rand::Rng;
use ssdkl_core::linalg::Matrix;

/// Gauss-Jordan inverse with partial pivoting. Panics on singular input;
/// oracle-only code.
pub fn gauss_jordan_inverse(a: &Matrix) -> Matrix {
    let n = a.rows();
    assert_eq!(n, a.cols());
    let mut aug = Matrix::zeros(n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            aug.set(i, j, a.get(i, j));
        }
        aug.set(i, n + i, 1.0);
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                aug.get(i, col)
                    .abs()
                    .partial_cmp(&aug.get(j, col).abs())
                    .unwrap()
            })
            .unwrap();
        assert!(aug.get(pivot, col).abs() > 1e-12, "singular matrix in oracle");
        if pivot != col {
            for j in 0..2 * n {
                let tmp = aug.get(col, j);
                aug.set(col, j, aug.get(pivot, j));
                aug.set(pivot, j, tmp);
            }
        }
        let p = aug.get(col, col);
        for j in 0..2 * n {
            aug.set(col, j, aug.get(col, j) / p);
        }
        for i in 0..n {
            if i == col {
                continue;
            }
            let f = aug.get(i, col);
            if f == 0.0 {
                continue;
            }
            for j in 0..2 * n {
                aug.set(i, j, aug.get(i, j) - f * aug.get(col, j));
            }
        }
    }
    Matrix::from_fn(n, n, |i, j| aug.get(i, n + j))
}

/// Determinant via LU with partial pivoting.
pub fn determinant(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut m = a.clone();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                m.get(i, col)
                    .abs()
                    .partial_cmp(&m.get(j, col).abs())
                    .unwrap()
            })
            .unwrap();
        if m.get(pivot, col) == 0.0 {
            return 0.0;
        }
        if pivot != col {
            det = -det;
            for j in 0..n {
                let tmp = m.get(col, j);
                m.set(col, j, m.get(pivot, j));
                m.set(pivot, j, tmp);
            }
        }
        det *= m.get(col, col);
        for i in col + 1..n {
            let f = m.get(i, col) / m.get(col, col);
            for j in col..n {
                m.set(i, j, m.get(i, j) - f * m.get(col, j));
            }
        }
    }
    det
}

/// Eigenvalues of a symmetric matrix by the cyclic Jacobi method.
pub fn symmetric_eigenvalues(a: &Matrix) -> Vec<f64> {
    let n = a.rows();
    let mut m = a.clone();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m.get(i, j) * m.get(i, j);
            }
        }
        if off.sqrt() < 1e-13 * (1.0 + m.max_abs()) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
            }
        }
    }
    (0..n).map(|i| m.get(i, i)).collect()
}

/// Random symmetric positive-definite matrix `BᵀB + I`.
pub fn random_spd<R: Rng>(n: usize, rng: &mut R) -> Matrix {
    let b = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let mut a = b.transpose().matmul(&b);
    for i in 0..n {
        a.set(i, i, a.get(i, i) + 1.0);
    }
    a
}

pub fn assert_rel_close(a: f64, b: f64, tol: f64, what: &str) {
    let denom = a.abs().max(b.abs()).max(1e-12);
    assert!(
        (a - b).abs() / denom <= tol,
        "{what}: {a} vs {b} (rel tol {tol})"
    );
}
