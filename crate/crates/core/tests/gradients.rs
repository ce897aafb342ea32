use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sparsegrad::csr::same_pattern;
use sparsegrad::experiments::pcg::{lower_bidiagonal_identity, pcg_loss};
use sparsegrad::experiments::{gcn_layer, heavyball_iterate, jacobi_step, loss_weights, planted_partition, spai_loss, unit_gaussian_vectors};
use sparsegrad::gradcheck::{check_gradients, random_dense, random_sparse, random_vector, GradcheckReport, Tolerance};
use sparsegrad::poisson::{poisson_1d, poisson_2d};
use sparsegrad::{CsrMatrix, DenseMatrix, DenseVector, Tape, Value};

const TIGHT: Tolerance = Tolerance { rel: 1e-6, abs: 1e-8 };
const EXPERIMENT: Tolerance = Tolerance { rel: 1e-4, abs: 1e-8 };

fn assert_passed(what: &str, report: &GradcheckReport) {
    for p in &report.params {
        assert!(p.passed, "{what} {}: max rel {:.3e}, max abs {:.3e}", p.name, p.max_rel_error, p.max_abs_error);
    }
    assert!(report.passed);
}

#[test]
fn two_sin_bilinear_form() {
    let rng = &mut ChaCha8Rng::seed_from_u64(11);
    for n in [3, 8, 20] {
        let a = random_sparse(rng, n, n, 0.3);
        let x = random_vector(rng, n).scaled(0.5);
        let y = random_vector(rng, n).scaled(0.5);
        let params = [Value::from(x), Value::from(a), Value::from(y)];
        let report = check_gradients(
            &params,
            |tape, p| {
                let ay = tape.spmv(p[1], p[2])?;
                let s = tape.dot(p[0], ay)?;
                let s = tape.sin(s)?;
                tape.scale(2.0, s)
            },
            TIGHT,
        )
        .unwrap();
        assert_passed("2 sin(x'Ay)", &report);
    }
}

#[test]
fn spai_loss_gradient() {
    let a = poisson_2d(4, 4).unwrap();
    let rng = &mut ChaCha8Rng::seed_from_u64(3);
    let values = (0..a.nnz()).map(|_| random_vector(rng, 1)[0] * 0.3).collect();
    let m = a.with_values(values).unwrap();
    let eye = CsrMatrix::identity(a.nrows());
    let report = check_gradients(
        &[Value::from(m.clone()), Value::from(a.clone())],
        |tape, p| {
            let e = tape.constant(eye.clone());
            spai_loss(tape, p[0], p[1], e)
        },
        TIGHT,
    )
    .unwrap();
    assert_passed("spai", &report);

    let mut tape = Tape::new();
    let mv = tape.param(m.clone());
    let av = tape.constant(a.clone());
    let ev = tape.constant(eye);
    let loss = spai_loss(&mut tape, mv, av, ev).unwrap();
    let g = tape.backward(loss).unwrap();
    assert!(Arc::ptr_eq(g.sparse(mv).unwrap().pattern(), m.pattern()));
}

#[test]
fn gcn_layer_gradients() {
    let rng = &mut ChaCha8Rng::seed_from_u64(5);
    let graph = planted_partition(rng, 24, 2, 0.3, 0.05, 4).unwrap();
    let x = random_dense(rng, 24, 5);
    let theta = random_dense(rng, 5, 3);
    let bias = random_vector(rng, 3);
    let v = random_dense(rng, 24, 3);
    let params = [
        Value::from(theta),
        Value::from(bias),
        Value::from(x),
        Value::from(graph.adjacency.clone()),
    ];
    let report = check_gradients(
        &params,
        |tape, p| {
            let out = gcn_layer(tape, p[3], p[2], p[0], p[1])?;
            let w = tape.constant(v.clone());
            let prod = tape.hadamard(out, w)?;
            tape.sum(prod)
        },
        Tolerance::FINITE_DIFFERENCE,
    )
    .unwrap();
    assert_passed("gcn layer", &report);
}

#[test]
fn two_layer_classifier_gradients() {
    let rng = &mut ChaCha8Rng::seed_from_u64(9);
    let graph = planted_partition(rng, 30, 2, 0.25, 0.03, 5).unwrap();
    let x = DenseMatrix::identity(30);
    let params = [
        Value::from(random_dense(rng, 30, 4)),
        Value::from(random_vector(rng, 4)),
        Value::from(random_dense(rng, 4, 2)),
        Value::from(random_vector(rng, 2)),
    ];
    let labels = graph.labels.clone();
    let rows = graph.train.clone();
    let report = check_gradients(
        &params,
        |tape, p| {
            let adj = tape.constant(graph.adjacency.clone());
            let xv = tape.constant(x.clone());
            let h = gcn_layer(tape, adj, xv, p[0], p[1])?;
            let h = tape.sigmoid(h)?;
            let h = tape.dropout(h, 0.5, 42)?;
            let out = gcn_layer(tape, adj, h, p[2], p[3])?;
            let out = tape.sigmoid(out)?;
            tape.log_softmax_cross_entropy(out, &labels, &rows)
        },
        Tolerance::FINITE_DIFFERENCE,
    )
    .unwrap();
    assert_passed("gcn classifier", &report);
}

#[test]
fn jacobi_loss_at_initial_weights() {
    let n = 16;
    let a = poisson_1d(n).unwrap();
    let dinv = CsrMatrix::diag(&DenseVector::filled(n, 0.5));
    let xs = unit_gaussian_vectors(&mut ChaCha8Rng::seed_from_u64(0), n, 8);
    let report = check_gradients(
        &[Value::from(DenseVector::filled(n, 1.0))],
        |tape, p| {
            let omega = tape.diag(p[0])?;
            let av = tape.constant(a.clone());
            let dv = tape.constant(dinv.clone());
            let b = tape.constant(DenseVector::zeros(n));
            let mut loss = tape.constant(0.0);
            for x in &xs {
                let x = tape.constant(x.clone());
                let g = jacobi_step(tape, av, dv, omega, x, b)?;
                let ag = tape.spmv(av, g)?;
                let term = tape.dot(g, ag)?;
                loss = tape.add(loss, term)?;
            }
            Ok(loss)
        },
        EXPERIMENT,
    )
    .unwrap();
    assert_passed("jacobi", &report);
}

#[test]
fn heavyball_loss_at_initial_parameters() {
    let n = 16;
    let a = poisson_1d(n).unwrap();
    let xs = unit_gaussian_vectors(&mut ChaCha8Rng::seed_from_u64(0), n, 8);
    let report = check_gradients(
        &[Value::Scalar(0.1), Value::Scalar(0.1)],
        |tape, p| {
            let av = tape.constant(a.clone());
            let b = tape.constant(DenseVector::zeros(n));
            let mut loss = tape.constant(0.0);
            for x in &xs {
                let x0 = tape.constant(x.clone());
                let h = heavyball_iterate(tape, av, b, x0, p[0], p[1], 12)?;
                let ah = tape.spmv(av, h)?;
                let term = tape.dot(h, ah)?;
                loss = tape.add(loss, term)?;
            }
            Ok(loss)
        },
        EXPERIMENT,
    )
    .unwrap();
    assert_passed("heavyball", &report);
}

#[test]
fn pcg_loss_at_initial_factor() {
    let a = poisson_2d(8, 8).unwrap();
    let rhs = unit_gaussian_vectors(&mut ChaCha8Rng::seed_from_u64(0), 64, 4);
    let weights = loss_weights(4, 0.6);
    let l = lower_bidiagonal_identity(64);
    let report = check_gradients(
        &[Value::from(l.clone())],
        |tape, p| {
            let av = tape.constant(a.clone());
            pcg_loss(tape, av, p[0], &rhs, &weights).map(|(loss, _)| loss)
        },
        EXPERIMENT,
    )
    .unwrap();
    assert_passed("pcg", &report);

    let mut tape = Tape::new();
    let av = tape.constant(a);
    let lv = tape.param(l.clone());
    let (loss, _) = pcg_loss(&mut tape, av, lv, &rhs, &weights).unwrap();
    let g = tape.backward(loss).unwrap();
    assert!(same_pattern(g.sparse(lv).unwrap().pattern(), l.pattern()));
}
