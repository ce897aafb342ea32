use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sparsegrad::csr::{mask_to, same_pattern};
use sparsegrad::gradcheck::{dense_forward, dense_reference, random_dense, random_dominant, random_sparse, random_vector, Kernel};
use sparsegrad::kernels::{sp_add, sp_add_vjp, spdmm, spdmm_vjp, spmv, spmv_vjp, spspmm, spspmm_vjp};
use sparsegrad::poisson::{poisson_1d, poisson_2d};
use sparsegrad::solve::{spsolve, spsolve_factored, spsolve_vjp, sptrsv, sptrsv_vjp};
use sparsegrad::{CsrMatrix, DenseMatrix, DenseVector, Triangle};

fn column(v: &DenseVector) -> DenseMatrix {
    DenseMatrix::new(v.len(), 1, v.as_slice().to_vec()).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn triangle(lower: bool) -> Triangle {
    if lower {
        Triangle::Lower
    } else {
        Triangle::Upper
    }
}

fn triangular(rng: &mut ChaCha8Rng, n: usize, density: f64, tri: Triangle) -> CsrMatrix {
    random_dominant(rng, n, density, |i, j| match tri {
        Triangle::Lower => j < i,
        Triangle::Upper => j > i,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn forward_kernels_match_dense(seed in any::<u64>(), n in 1usize..=64, density in 0.01..=0.3f64) {
        let rng = &mut ChaCha8Rng::seed_from_u64(seed);
        let a = random_sparse(rng, n, n, density);
        let b = random_sparse(rng, n, n, density);
        let x = random_vector(rng, n);
        let m = random_dense(rng, n, 3);
        let (da, db) = (a.to_dense(), b.to_dense());

        let y = spmv(&a, &x).unwrap();
        prop_assert!(max_diff(y.as_slice(), dense_forward(&Kernel::Spmv, &da, &column(&x)).unwrap().as_slice()) <= 1e-12);
        let c = spspmm(&a, &b).unwrap();
        prop_assert!(max_diff(c.to_dense().as_slice(), da.matmul(&db).unwrap().as_slice()) <= 1e-12);
        let c = spdmm(&a, &m).unwrap();
        prop_assert!(max_diff(c.as_slice(), da.matmul(&m).unwrap().as_slice()) <= 1e-12);
        let k = Kernel::SpAdd { alpha: 0.5, beta: -2.0 };
        let c = sp_add(0.5, &a, -2.0, &b).unwrap();
        prop_assert!(max_diff(c.to_dense().as_slice(), dense_forward(&k, &da, &db).unwrap().as_slice()) <= 1e-12);
        prop_assert!(same_pattern(c.pattern(), &std::sync::Arc::new(a.pattern().union(b.pattern()).unwrap())));
    }

    #[test]
    fn solves_match_dense(seed in any::<u64>(), n in 1usize..=64, density in 0.01..=0.3f64, lower in any::<bool>(), unit in any::<bool>()) {
        let rng = &mut ChaCha8Rng::seed_from_u64(seed);
        let tri = triangle(lower);
        let t = triangular(rng, n, density, tri);
        let a = random_dominant(rng, n, density, |_, _| true);
        let b = random_vector(rng, n);
        let unit = unit && {
            // unit solves need the off-diagonal part to stay small
            let off = t.values().iter().map(|v| v.abs()).sum::<f64>();
            off < 0.5
        };
        let x = sptrsv(&t, &b, tri, unit).unwrap();
        let k = Kernel::Sptrsv { triangle: tri, unit_diag: unit };
        let expect = dense_forward(&k, &t.to_dense(), &column(&b)).unwrap();
        prop_assert!(max_diff(x.as_slice(), expect.as_slice()) <= 1e-12 * expect.max_abs().max(1.0));
        let x = spsolve(&a, &b).unwrap();
        let expect = dense_forward(&Kernel::Spsolve, &a.to_dense(), &column(&b)).unwrap();
        prop_assert!(max_diff(x.as_slice(), expect.as_slice()) <= 1e-12 * expect.max_abs().max(1.0));
    }

    #[test]
    fn product_vjps_match_masked_dense_contraction(seed in any::<u64>(), n in 1usize..=32, density in 0.05..=1.0f64) {
        let rng = &mut ChaCha8Rng::seed_from_u64(seed);
        let a = random_sparse(rng, n, n, density);
        let b = random_sparse(rng, n, n, density);
        let x = random_vector(rng, n);
        let m = random_dense(rng, n, 2);
        let da = a.to_dense();

        let v = random_vector(rng, n);
        let (ga, gx) = spmv_vjp(&v, &a, &x).unwrap();
        let r = dense_reference(&Kernel::Spmv, &da, &column(&x), &column(&v)).unwrap();
        prop_assert!(same_pattern(ga.pattern(), a.pattern()));
        prop_assert!(max_diff(ga.values(), mask_to(&r.grad_a, a.pattern()).unwrap().values()) <= 1e-10);
        prop_assert!(max_diff(gx.as_slice(), r.grad_b.as_slice()) <= 1e-10);

        let c = spspmm(&a, &b).unwrap();
        let vals = (0..c.nnz()).map(|k| ((k * 37 % 11) as f64 - 5.0) / 3.0).collect();
        let vc = c.with_values(vals).unwrap();
        let (ga, gb) = spspmm_vjp(&vc, &a, &b).unwrap();
        let r = dense_reference(&Kernel::Spspmm, &da, &b.to_dense(), &vc.to_dense()).unwrap();
        prop_assert!(same_pattern(ga.pattern(), a.pattern()));
        prop_assert!(same_pattern(gb.pattern(), b.pattern()));
        prop_assert!(max_diff(ga.values(), mask_to(&r.grad_a, a.pattern()).unwrap().values()) <= 1e-10);
        prop_assert!(max_diff(gb.values(), mask_to(&r.grad_b, b.pattern()).unwrap().values()) <= 1e-10);

        let vm = random_dense(rng, n, 2);
        let (ga, gm) = spdmm_vjp(&vm, &a, &m).unwrap();
        let r = dense_reference(&Kernel::Spdmm, &da, &m, &vm).unwrap();
        prop_assert!(same_pattern(ga.pattern(), a.pattern()));
        prop_assert!(max_diff(ga.values(), mask_to(&r.grad_a, a.pattern()).unwrap().values()) <= 1e-10);
        prop_assert!(max_diff(gm.as_slice(), r.grad_b.as_slice()) <= 1e-10);

        let c = sp_add(1.5, &a, 0.25, &b).unwrap();
        let vals = (0..c.nnz()).map(|k| (k % 7) as f64 - 3.0).collect();
        let vc = c.with_values(vals).unwrap();
        let (ga, gb) = sp_add_vjp(&vc, &a, &b, 1.5, 0.25).unwrap();
        let r = dense_reference(&Kernel::SpAdd { alpha: 1.5, beta: 0.25 }, &da, &b.to_dense(), &vc.to_dense()).unwrap();
        prop_assert!(same_pattern(ga.pattern(), a.pattern()));
        prop_assert!(same_pattern(gb.pattern(), b.pattern()));
        prop_assert!(max_diff(ga.values(), mask_to(&r.grad_a, a.pattern()).unwrap().values()) <= 1e-10);
        prop_assert!(max_diff(gb.values(), mask_to(&r.grad_b, b.pattern()).unwrap().values()) <= 1e-10);
    }

    #[test]
    fn solve_vjps_match_masked_dense_contraction(seed in any::<u64>(), n in 1usize..=32, density in 0.05..=1.0f64, lower in any::<bool>()) {
        let rng = &mut ChaCha8Rng::seed_from_u64(seed);
        let tri = triangle(lower);
        let t = triangular(rng, n, density, tri);
        let b = random_vector(rng, n);
        let v = random_vector(rng, n);
        let x = sptrsv(&t, &b, tri, false).unwrap();
        let (gt, gb) = sptrsv_vjp(&v, &t, &x, tri, false).unwrap();
        let k = Kernel::Sptrsv { triangle: tri, unit_diag: false };
        let r = dense_reference(&k, &t.to_dense(), &column(&b), &column(&v)).unwrap();
        prop_assert!(same_pattern(gt.pattern(), t.pattern()));
        prop_assert!(max_diff(gt.values(), mask_to(&r.grad_a, t.pattern()).unwrap().values()) <= 1e-10);
        prop_assert!(max_diff(gb.as_slice(), r.grad_b.as_slice()) <= 1e-10);

        let a = random_dominant(rng, n, density, |_, _| true);
        let (x, lu) = spsolve_factored(&a, &b).unwrap();
        let (ga, gb) = spsolve_vjp(&v, &a, &x, &lu).unwrap();
        let r = dense_reference(&Kernel::Spsolve, &a.to_dense(), &column(&b), &column(&v)).unwrap();
        prop_assert!(same_pattern(ga.pattern(), a.pattern()));
        prop_assert!(max_diff(ga.values(), mask_to(&r.grad_a, a.pattern()).unwrap().values()) <= 1e-10);
        prop_assert!(max_diff(gb.as_slice(), r.grad_b.as_slice()) <= 1e-10);
    }
}

#[test]
fn spsolve_residual_on_poisson_family() {
    let rng = &mut ChaCha8Rng::seed_from_u64(7);
    let mut problems: Vec<CsrMatrix> = [1, 2, 3, 16, 100, 1000, 5000].iter().map(|&n| poisson_1d(n).unwrap()).collect();
    problems.push(poisson_2d(8, 8).unwrap());
    problems.push(poisson_2d(20, 13).unwrap());
    for a in problems {
        let b = random_vector(rng, a.nrows());
        let x = spsolve(&a, &b).unwrap();
        let r = spmv(&a, &x).unwrap().axpy(-1.0, &b).unwrap();
        let bound = 1e-10 * (a.max_abs() * x.norm_inf() + b.norm_inf());
        assert!(r.norm_inf() <= bound, "n = {}: {} > {bound}", a.nrows(), r.norm_inf());
    }
}

#[test]
fn large_kernels_are_thread_count_independent() {
    let a = poisson_1d(20_000).unwrap();
    let x = DenseVector::new((0..20_000).map(|i| ((i * 13) % 17) as f64 / 7.0 - 1.0).collect());
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let y = spmv(&a, &x).unwrap();
            let (ga, gx) = spmv_vjp(&y, &a, &x).unwrap();
            let c = spspmm(&a, &a).unwrap();
            let (gc, _) = spspmm_vjp(&c, &a, &a).unwrap();
            (y, ga, gx, c, gc)
        })
    };
    assert_eq!(run(1), run(4));
}
