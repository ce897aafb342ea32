//! Entry-wise weighted Jacobi: learn the diagonal weights `Ω` of
//! `x⁺ = x + Ω D⁻¹ (b − A x)`.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_finite, unit_gaussian_vectors, Adam, ExperimentResult};
use crate::autodiff::{Tape, Var};
use crate::csr::CsrMatrix;
use crate::dense::DenseVector;
use crate::error::{Error, Result};
use crate::poisson::poisson_1d;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JacobiConfig {
    pub n: usize,
    pub epochs: usize,
    pub lr: f64,
    pub test_vectors: usize,
    pub seed: u64,
}

impl Default for JacobiConfig {
    fn default() -> Self {
        JacobiConfig {
            n: 16,
            epochs: 100,
            lr: 1e-2,
            test_vectors: 8,
            seed: 0,
        }
    }
}

/// `D⁻¹` as a sparse diagonal matrix.
pub fn inverse_diagonal(a: &CsrMatrix) -> Result<CsrMatrix> {
    let d = a.diagonal();
    if let Some(i) = d.as_slice().iter().position(|&x| x == 0.0) {
        return Err(Error::Domain(format!("zero diagonal entry at row {i}")));
    }
    Ok(CsrMatrix::diag(&DenseVector::new(d.as_slice().iter().map(|x| 1.0 / x).collect())))
}

/// One taped sweep `x + Ω D⁻¹ (b − A x)`. `dinv` and `omega` are sparse
/// diagonal nodes.
pub fn jacobi_step(tape: &mut Tape, a: Var, dinv: Var, omega: Var, x: Var, b: Var) -> Result<Var> {
    let ax = tape.spmv(a, x)?;
    let r = tape.sub(b, ax)?;
    let dr = tape.spmv(dinv, r)?;
    let correction = tape.spmv(omega, dr)?;
    tape.add(x, correction)
}

/// `Σ_j g_jᵀ A g_j` with `g_j` one sweep from `x_j` against `b = 0`, and
/// the gradient with respect to the weights.
pub fn jacobi_loss(a: &CsrMatrix, dinv: &CsrMatrix, omega: &DenseVector, xs: &[DenseVector]) -> Result<(f64, DenseVector)> {
    let mut tape = Tape::new();
    let w = tape.param(omega.clone());
    let a_var = tape.constant(a.clone());
    let dinv = tape.constant(dinv.clone());
    let b = tape.constant(DenseVector::zeros(a.nrows()));
    let omega_m = tape.diag(w)?;
    let mut loss: Option<Var> = None;
    for x in xs {
        let x = tape.constant(x.clone());
        let g = jacobi_step(&mut tape, a_var, dinv, omega_m, x, b)?;
        let ag = tape.spmv(a_var, g)?;
        let term = tape.dot(g, ag)?;
        loss = Some(match loss {
            Some(l) => tape.add(l, term)?,
            None => term,
        });
    }
    let loss = loss.ok_or_else(|| Error::Domain("jacobi loss needs at least one test vector".into()))?;
    let grads = tape.backward(loss)?;
    let g = grads.vector(w).cloned().unwrap_or_else(|| DenseVector::zeros(omega.len()));
    Ok((tape.value(loss).as_scalar()?, g))
}

pub fn run_jacobi_experiment(config: &JacobiConfig) -> Result<ExperimentResult> {
    let start = Instant::now();
    let a = poisson_1d(config.n)?;
    let dinv = inverse_diagonal(&a)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut omega = DenseVector::filled(config.n, 1.0);
    let mut adam = Adam::new(config.lr);
    let mut result = ExperimentResult::new("jacobi", config.seed);
    for epoch in 0..config.epochs {
        let xs = unit_gaussian_vectors(&mut rng, config.n, config.test_vectors);
        let (loss, grad) = jacobi_loss(&a, &dinv, &omega, &xs)?;
        result.loss_history.push(check_finite("jacobi loss", epoch, loss)?);
        adam.update(&mut [omega.as_mut_slice()], &[grad.as_slice()])?;
        for (i, w) in omega.as_slice().iter().enumerate() {
            result.push_epoch(&format!("omega_{i:02}"), *w);
        }
    }
    result.epochs = config.epochs;
    let w = omega.as_slice();
    if w.len() >= 3 {
        let interior = &w[1..w.len() - 1];
        let mean = interior.iter().sum::<f64>() / interior.len() as f64;
        let max = interior.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        result.metrics.insert("interior_mean".into(), mean);
        result.metrics.insert("interior_max".into(), max);
        result.metrics.insert("boundary_min".into(), w[0].min(w[w.len() - 1]));
    }
    if let (Some(first), Some(last)) = (result.loss_history.first(), result.loss_history.last()) {
        result.metrics.insert("initial_loss".into(), *first);
        result.metrics.insert("final_loss".into(), *last);
    }
    result.final_params.insert("omega".into(), w.to_vec());
    result.wall_seconds = start.elapsed().as_secs_f64();
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::spmv;

    fn step(a: &CsrMatrix, omega: &DenseVector, x: &DenseVector, b: &DenseVector) -> DenseVector {
        let mut tape = Tape::new();
        let dinv = inverse_diagonal(a).unwrap();
        let vars = (
            tape.constant(a.clone()),
            tape.constant(dinv),
            tape.constant(omega.clone()),
            tape.constant(x.clone()),
            tape.constant(b.clone()),
        );
        let om = tape.diag(vars.2).unwrap();
        let out = jacobi_step(&mut tape, vars.0, vars.1, om, vars.3, vars.4).unwrap();
        tape.value(out).as_vector().unwrap().clone()
    }

    #[test]
    fn fixed_point_and_zero_weight() {
        let a = poisson_1d(3).unwrap();
        let xs = DenseVector::new(vec![1.0, -2.0, 0.5]);
        let b = spmv(&a, &xs).unwrap();
        let out = step(&a, &DenseVector::filled(3, 1.0), &xs, &b);
        for i in 0..3 {
            assert!((out[i] - xs[i]).abs() < 1e-15);
        }
        let x = DenseVector::new(vec![0.3, 0.1, -0.4]);
        assert_eq!(step(&a, &DenseVector::zeros(3), &x, &b), x);
    }

    #[test]
    fn two_thirds_sweep() {
        let a = poisson_1d(3).unwrap();
        let out = step(&a, &DenseVector::filled(3, 2.0 / 3.0), &DenseVector::unit(3, 0), &DenseVector::zeros(3));
        // (I − (2/3)·(1/2)·A) e₁ = e₁ − A e₁ / 3
        let expect = [1.0 - 2.0 / 3.0, 1.0 / 3.0, 0.0];
        for i in 0..3 {
            assert!((out[i] - expect[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_diagonal_is_rejected() {
        let a = CsrMatrix::from_coo(2, 2, &[(0, 1, 1.0), (1, 0, 1.0), (1, 1, 2.0)]).unwrap();
        assert!(inverse_diagonal(&a).is_err());
    }

    #[test]
    fn loss_decreases() {
        let r = run_jacobi_experiment(&JacobiConfig::default()).unwrap();
        assert_eq!(r.loss_history.len(), 100);
        assert!(r.all_finite());
        assert!(r.loss_history.last() < r.loss_history.first());
    }
}
