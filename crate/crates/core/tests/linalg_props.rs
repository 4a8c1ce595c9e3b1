//! Oracle-backed properties of the dense SPD kernel: factorization round
//! trips, solves against an explicit inverse, log-determinants against a
//! Jacobi eigensolver, and monotonicity of the jitter ladder.

mod common;

use common::{gauss_jordan_inverse, random_spd, symmetric_eigenvalues};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssdkl_core::linalg::{cholesky, logdet, solve_chol, JitterPolicy, Matrix};

#[test]
fn spd_round_trip_up_to_dim_20() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for n in [1, 2, 3, 5, 8, 13, 20] {
        for _ in 0..5 {
            let a = random_spd(n, &mut rng);
            let f = cholesky(&a, &JitterPolicy::default()).unwrap();
            assert_eq!(f.jitter_used(), 0.0);
            let rec = f.lower().matmul(&f.lower().transpose());
            let mut diff = rec.clone();
            for i in 0..n {
                for j in 0..n {
                    diff.set(i, j, rec.get(i, j) - a.get(i, j));
                }
            }
            let rel = diff.frobenius_norm() / a.frobenius_norm();
            assert!(rel <= 1e-10, "dim {n}: relative error {rel}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn prop_spd_round_trip(seed in 0u64..10_000, n in 1usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_spd(n, &mut rng);
        let f = cholesky(&a, &JitterPolicy::default()).unwrap();
        let rec = f.lower().matmul(&f.lower().transpose());
        let mut err = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                err += (rec.get(i, j) - a.get(i, j)).powi(2);
            }
        }
        prop_assert!(err.sqrt() / a.frobenius_norm() <= 1e-10);
        // strictly-upper entries of the factor are exactly zero
        for i in 0..n {
            for j in i + 1..n {
                prop_assert_eq!(f.lower().get(i, j), 0.0);
            }
        }
        // diagonal strictly positive
        for i in 0..n {
            prop_assert!(f.lower().get(i, i) > 0.0);
        }
    }
}

#[test]
fn solve_matches_explicit_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for n in 1..=10 {
        let a = random_spd(n, &mut rng);
        let f = cholesky(&a, &JitterPolicy::default()).unwrap();
        let b = Matrix::from_fn(n, 3, |_, _| rng.gen_range(-2.0..2.0));
        let x = solve_chol(&f, &b).unwrap();
        let x_oracle = gauss_jordan_inverse(&a).matmul(&b);
        for i in 0..n {
            for j in 0..3 {
                let (got, want) = (x.get(i, j), x_oracle.get(i, j));
                let denom = want.abs().max(1.0);
                assert!(
                    (got - want).abs() / denom <= 1e-8,
                    "n={n} ({i},{j}): {got} vs {want}"
                );
            }
        }
    }
}

#[test]
fn solve_residual_is_small() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for _ in 0..20 {
        let n = rng.gen_range(1..=10);
        let a = random_spd(n, &mut rng);
        let f = cholesky(&a, &JitterPolicy::default()).unwrap();
        let b = Matrix::from_fn(n, 1, |_, _| rng.gen_range(-2.0..2.0));
        let x = solve_chol(&f, &b).unwrap();
        let r = a.matmul(&x);
        let b_inf = b.max_abs();
        for i in 0..n {
            assert!((r.get(i, 0) - b.get(i, 0)).abs() <= 1e-8 * b_inf.max(1e-12));
        }
    }
}

#[test]
fn logdet_matches_eigenvalue_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for n in 1..=8 {
        let a = random_spd(n, &mut rng);
        let f = cholesky(&a, &JitterPolicy::default()).unwrap();
        let eigs = symmetric_eigenvalues(&a);
        let want: f64 = eigs.iter().map(|e| e.ln()).sum();
        let got = logdet(&f);
        assert!(
            (got - want).abs() <= 1e-8 * want.abs().max(1.0),
            "n={n}: {got} vs {want}"
        );
    }
}

#[test]
fn jitter_ladder_is_monotone() {
    // a matrix that succeeds at rung j also succeeds at every larger rung
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let full = JitterPolicy::default();
    for _ in 0..30 {
        let n = rng.gen_range(2..=6);
        // borderline: rank-deficient plus a small ridge
        let b = Matrix::from_fn(n, 1, |_, _| rng.gen_range(-1.0..1.0));
        let mut a = b.matmul(&b.transpose());
        let ridge = 10f64.powi(-rng.gen_range(6..14));
        for i in 0..n {
            a.set(i, i, a.get(i, i) + ridge);
        }
        let result = cholesky(&a, &full);
        if let Ok(f) = result {
            let succeeded_at = f.jitter_used();
            let tau = a.diag_mean();
            for &mult in &full.relative_ladder {
                let jitter = mult * tau;
                if jitter >= succeeded_at {
                    let single = JitterPolicy { relative_ladder: vec![mult] };
                    assert!(
                        cholesky(&a, &single).is_ok(),
                        "succeeded at {succeeded_at} but failed at larger jitter {jitter}"
                    );
                }
            }
        }
    }
}
