//! Kernel and network properties against independent oracles: Gram
//! symmetry and positive semi-definiteness via the Jacobi eigensolver,
//! the RBF bound, and finite-difference checks of every gradient path.

mod common;

use common::symmetric_eigenvalues;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssdkl_core::kernels::{
    kernel_backward, kernel_diag, kernel_diag_backward, kernel_matrix, kernel_matrix_cached,
    KernelParams,
};
use ssdkl_core::linalg::Matrix;
use ssdkl_core::net::{mlp_backward, mlp_forward, MlpParams};
use ssdkl_core::trainer::grad_check;

fn random_points<R: Rng>(n: usize, d: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(n, d, |_, _| rng.gen_range(-2.0..2.0))
}

#[test]
fn gram_matrix_is_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for _ in 0..20 {
        let x = random_points(rng.gen_range(2..=8), rng.gen_range(1..=4), &mut rng);
        let mut kp = KernelParams::rbf();
        kp.log_signal_var = rng.gen_range(-1.0..1.0);
        kp.log_length_scale_sq = rng.gen_range(-1.0..1.0);
        let k = kernel_matrix(&kp, &x, &x).unwrap();
        for i in 0..k.rows() {
            for j in 0..k.cols() {
                assert!((k.get(i, j) - k.get(j, i)).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn rbf_gram_is_positive_semidefinite() {
    let mut rng = ChaCha8Rng::seed_from_u64(201);
    for _ in 0..20 {
        let x = random_points(rng.gen_range(2..=8), rng.gen_range(1..=3), &mut rng);
        let k = kernel_matrix(&KernelParams::rbf(), &x, &x).unwrap();
        let eigs = symmetric_eigenvalues(&k);
        for e in eigs {
            assert!(e >= -1e-10, "negative eigenvalue {e}");
        }
    }
}

#[test]
fn sum_of_psd_kernels_is_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for _ in 0..10 {
        let x = random_points(rng.gen_range(2..=8), 3, &mut rng);
        let kp = KernelParams::sum(KernelParams::rbf(), KernelParams::rbf(), 2);
        let k = kernel_matrix(&kp, &x, &x).unwrap();
        let eigs = symmetric_eigenvalues(&k);
        for e in eigs {
            assert!(e >= -1e-10, "negative eigenvalue {e}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn prop_rbf_bound(seed in 0u64..10_000) {
        // 0 < k ≤ φ_f², equality only at coinciding points
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_points(6, 2, &mut rng);
        let mut kp = KernelParams::rbf();
        kp.log_signal_var = rng.gen_range(-1.0..1.0);
        let s2 = kp.signal_var();
        let k = kernel_matrix(&kp, &x, &x).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let v = k.get(i, j);
                prop_assert!(v > 0.0 && v <= s2 + 1e-15);
                if i != j {
                    let same = x.row(i) == x.row(j);
                    prop_assert_eq!(v >= s2 - 1e-12, same);
                }
            }
        }
    }
}

#[test]
fn rbf_gradients_match_finite_differences() {
    // random 3-point instances; h = 1e-6, tolerance 1e-5
    let mut rng = ChaCha8Rng::seed_from_u64(203);
    for _ in 0..30 {
        let a = random_points(3, 2, &mut rng);
        let b = random_points(3, 2, &mut rng);
        let d_k = Matrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
        let mut kp = KernelParams::rbf();
        kp.log_signal_var = rng.gen_range(-0.5..0.5);
        kp.log_length_scale_sq = rng.gen_range(-0.5..0.5);

        // flat layout: [log params | a entries | b entries]
        let mut flat = kp.flatten();
        flat.extend_from_slice(a.as_slice());
        flat.extend_from_slice(b.as_slice());
        let kp0 = kp.clone();
        let f = |p: &[f64]| {
            let mut kp = kp0.clone();
            kp.assign_from_flat(&p[..3]);
            let a = Matrix::from_vec(3, 2, p[3..9].to_vec()).unwrap();
            let b = Matrix::from_vec(3, 2, p[9..15].to_vec()).unwrap();
            let (k, cache) = kernel_matrix_cached(&kp, &a, &b).unwrap();
            let loss: f64 = (0..3)
                .flat_map(|i| (0..3).map(move |j| (i, j)))
                .map(|(i, j)| d_k.get(i, j) * k.get(i, j))
                .sum();
            let (d_params, d_a, d_b) = kernel_backward(&kp, &cache, &d_k).unwrap();
            let mut g = d_params;
            g.extend_from_slice(d_a.as_slice());
            g.extend_from_slice(d_b.as_slice());
            (loss, g)
        };
        let report = grad_check(f, &flat, 1e-6, 1e-5);
        assert!(report.passed(), "max rel err {}", report.max_rel_err);
    }
}

#[test]
fn polynomial_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(204);
    for degree in [1u32, 2, 3] {
        let a = random_points(3, 2, &mut rng);
        let b = random_points(2, 2, &mut rng);
        let d_k = Matrix::from_fn(3, 2, |_, _| rng.gen_range(-1.0..1.0));
        let mut kp = KernelParams::polynomial(degree);
        kp.log_signal_var = rng.gen_range(-0.5..0.5);
        kp.log_length_scale_sq = rng.gen_range(-0.5..0.5);
        let mut flat = kp.flatten();
        flat.extend_from_slice(a.as_slice());
        flat.extend_from_slice(b.as_slice());
        let kp0 = kp.clone();
        let f = |p: &[f64]| {
            let mut kp = kp0.clone();
            kp.assign_from_flat(&p[..3]);
            let a = Matrix::from_vec(3, 2, p[3..9].to_vec()).unwrap();
            let b = Matrix::from_vec(2, 2, p[9..13].to_vec()).unwrap();
            let (k, cache) = kernel_matrix_cached(&kp, &a, &b).unwrap();
            let loss: f64 = (0..3)
                .flat_map(|i| (0..2).map(move |j| (i, j)))
                .map(|(i, j)| d_k.get(i, j) * k.get(i, j))
                .sum();
            let (d_params, d_a, d_b) = kernel_backward(&kp, &cache, &d_k).unwrap();
            let mut g = d_params;
            g.extend_from_slice(d_a.as_slice());
            g.extend_from_slice(d_b.as_slice());
            (loss, g)
        };
        let report = grad_check(f, &flat, 1e-6, 1e-5);
        assert!(report.passed(), "degree {degree}: max rel err {}", report.max_rel_err);
    }
}

#[test]
fn kernel_diag_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(205);
    for kp0 in [
        KernelParams::rbf(),
        KernelParams::polynomial(2),
        KernelParams::sum(KernelParams::rbf(), KernelParams::polynomial(2), 1),
    ] {
        let x = random_points(3, 2, &mut rng);
        let d_diag: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let np = kp0.param_count();
        let mut flat = kp0.flatten();
        flat.extend_from_slice(x.as_slice());
        let f = |p: &[f64]| {
            let mut kp = kp0.clone();
            kp.assign_from_flat(&p[..np]);
            let x = Matrix::from_vec(3, 2, p[np..].to_vec()).unwrap();
            let diag = kernel_diag(&kp, &x).unwrap();
            let loss: f64 = diag.iter().zip(&d_diag).map(|(a, b)| a * b).sum();
            let (d_params, d_x) = kernel_diag_backward(&kp, &x, &d_diag).unwrap();
            let mut g = d_params;
            g.extend_from_slice(d_x.as_slice());
            (loss, g)
        };
        let report = grad_check(f, &flat, 1e-6, 1e-5);
        assert!(report.passed(), "{kp0:?}: max rel err {}", report.max_rel_err);
    }
}

#[test]
fn mlp_gradients_match_finite_differences() {
    // random small nets, ≤ 3 hidden layers, width ≤ 8; parameter AND
    // input gradients against central differences at h = 1e-5
    let mut rng = ChaCha8Rng::seed_from_u64(206);
    let mut trial = 0;
    while trial < 20 {
        let n_hidden = rng.gen_range(0..=3);
        let mut sizes = vec![rng.gen_range(1..=4)];
        for _ in 0..n_hidden {
            sizes.push(rng.gen_range(2..=8));
        }
        sizes.push(rng.gen_range(1..=3));
        let mlp = MlpParams::init(&sizes, &mut rng);
        let batch = rng.gen_range(1..=4);
        let x = random_points(batch, sizes[0], &mut rng);
        // central differences are meaningless across a ReLU kink;
        // resample instances sitting within the FD window of one
        let (_, cache) = mlp_forward(&mlp, &x).unwrap();
        if cache.min_abs_hidden_preactivation() < 1e-3 {
            continue;
        }
        trial += 1;
        let d_out = Matrix::from_fn(batch, *sizes.last().unwrap(), |_, _| {
            rng.gen_range(-1.0..1.0)
        });

        let n_params = mlp.param_count();
        let mut flat = mlp.flatten();
        flat.extend_from_slice(x.as_slice());
        let f = |p: &[f64]| {
            let mut m = mlp.clone();
            m.assign_from_flat(&p[..n_params]).unwrap();
            let x = Matrix::from_vec(batch, m.input_dim(), p[n_params..].to_vec()).unwrap();
            let (e, cache) = mlp_forward(&m, &x).unwrap();
            let loss: f64 = e
                .as_slice()
                .iter()
                .zip(d_out.as_slice())
                .map(|(a, b)| a * b)
                .sum();
            let (grads, d_x) = mlp_backward(&m, &cache, &d_out).unwrap();
            let mut g = grads.flatten();
            g.extend_from_slice(d_x.as_slice());
            (loss, g)
        };
        let report = grad_check(f, &flat, 1e-5, 1e-4);
        assert!(
            report.passed(),
            "trial {trial} sizes {sizes:?}: max rel err {}",
            report.max_rel_err
        );
    }
}
