//! Sparse approximate inverse by gradient descent on `‖I − MA‖²_F`, with the
//! pattern of `M` fixed to the pattern of `A`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ExperimentResult;
use crate::autodiff::{Tape, Var};
use crate::csr::CsrMatrix;
use crate::error::{dim_mismatch, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpaiConfig {
    pub grad_norm_tol: f64,
    pub initial_step: f64,
    pub max_halvings: usize,
    pub max_iterations: usize,
}

impl Default for SpaiConfig {
    fn default() -> Self {
        SpaiConfig {
            grad_norm_tol: 0.01,
            initial_step: 1e-2,
            max_halvings: 20,
            max_iterations: 100_000,
        }
    }
}

/// Records `‖I − MA‖²_F` for sparse nodes `m`, `a` and identity `eye`.
pub fn spai_loss(tape: &mut Tape, m: Var, a: Var, eye: Var) -> Result<Var> {
    let ma = tape.spspmm(m, a)?;
    let residual = tape.sp_add(1.0, eye, -1.0, ma)?;
    let v = tape.values(residual)?;
    tape.dot(v, v)
}

fn loss_and_grad(m: &CsrMatrix, a: &CsrMatrix, eye: &CsrMatrix) -> Result<(f64, CsrMatrix)> {
    let mut tape = Tape::new();
    let mv = tape.param(m.clone());
    let av = tape.constant(a.clone());
    let ev = tape.constant(eye.clone());
    let loss = spai_loss(&mut tape, mv, av, ev)?;
    let grads = tape.backward(loss)?;
    let g = grads
        .sparse(mv)
        .cloned()
        .ok_or_else(|| Error::Domain("approximate inverse has no gradient".into()))?;
    Ok((tape.value(loss).as_scalar()?, g))
}

/// `‖I − MA‖_F` evaluated directly.
pub fn residual_norm(m: &CsrMatrix, a: &CsrMatrix) -> Result<f64> {
    let ma = crate::kernels::spspmm(m, a)?;
    let r = crate::kernels::sp_add(1.0, &CsrMatrix::identity(a.nrows()), -1.0, &ma)?;
    Ok(r.values().iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// Classical SPAI: row `i` of `M` solves `min ‖eᵢᵀ − mᵢᵀ A‖₂` with `mᵢ`
/// supported on row `i` of the pattern of `A`.
pub fn spai_reference(a: &CsrMatrix) -> Result<CsrMatrix> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(dim_mismatch("spai_reference", "square matrix", format!("{:?}", a.shape())));
    }
    let mut values = Vec::with_capacity(a.nnz());
    let mut cols_used = vec![usize::MAX; n];
    for i in 0..n {
        let support = a.pattern().row(i);
        // columns reached by the selected rows of A, plus column i
        let mut cols: Vec<usize> = support
            .iter()
            .flat_map(|&s| a.pattern().row(s).iter().copied())
            .chain(std::iter::once(i))
            .collect();
        cols.sort_unstable();
        cols.dedup();
        for (k, &c) in cols.iter().enumerate() {
            cols_used[c] = k;
        }
        // (mᵢᵀ A)_c = Σ_s m_s A_sc  →  system matrix K[c, s] = A_sc
        let mut k = DMatrix::zeros(cols.len(), support.len());
        for (col, &s) in support.iter().enumerate() {
            let (sc, sv) = a.row(s);
            for (&c, &v) in sc.iter().zip(sv) {
                k[(cols_used[c], col)] = v;
            }
        }
        let mut rhs = DVector::zeros(cols.len());
        rhs[cols_used[i]] = 1.0;
        let m = k
            .svd(true, true)
            .solve(&rhs, 1e-14)
            .map_err(|e| Error::Domain(format!("least squares for row {i}: {e}")))?;
        values.extend(m.iter().copied());
        for &c in &cols {
            cols_used[c] = usize::MAX;
        }
    }
    a.with_values(values)
}

/// Gradient descent from `M = 1` on the pattern of `A`. The step halves
/// whenever a trial step fails to decrease the loss.
pub fn run_spai_experiment(a: &CsrMatrix, config: &SpaiConfig) -> Result<ExperimentResult> {
    let start = Instant::now();
    let n = a.nrows();
    if a.ncols() != n {
        return Err(dim_mismatch("spai", "square matrix", format!("{:?}", a.shape())));
    }
    let eye = CsrMatrix::identity(n);
    let mut m = CsrMatrix::filled_on(a.pattern().clone(), 1.0);
    let mut step = config.initial_step;
    let mut result = ExperimentResult::new("spai", 0);
    let (mut loss, mut grad) = loss_and_grad(&m, a, &eye)?;
    let mut grad_norm = norm(grad.values());
    let mut converged = grad_norm < config.grad_norm_tol;
    result.loss_history.push(loss);
    result.push_epoch("grad_norm", grad_norm);
    result.push_epoch("step", 0.0);
    let mut iterations = 0;
    while !converged && iterations < config.max_iterations {
        let mut halvings = 0;
        let (trial, trial_loss, trial_grad) = loop {
            let values: Vec<f64> = m
                .values()
                .iter()
                .zip(grad.values())
                .map(|(x, g)| x - step * g)
                .collect();
            let trial = m.with_values(values)?;
            let (l, g) = loss_and_grad(&trial, a, &eye)?;
            if l.is_finite() && l <= loss {
                break (trial, l, g);
            }
            halvings += 1;
            if halvings > config.max_halvings {
                return Err(Error::NonFinite(format!(
                    "no decrease after {} step halvings at iteration {iterations}",
                    config.max_halvings
                )));
            }
            step *= 0.5;
        };
        m = trial;
        loss = trial_loss;
        grad = trial_grad;
        grad_norm = norm(grad.values());
        iterations += 1;
        converged = grad_norm < config.grad_norm_tol;
        result.loss_history.push(loss);
        result.push_epoch("grad_norm", grad_norm);
        result.push_epoch("step", step);
    }
    let reference = spai_reference(a)?;
    let reference_norm = residual_norm(&reference, a)?;
    result.epochs = result.loss_history.len();
    result.metrics.insert("iterations".into(), iterations as f64);
    result.metrics.insert("converged".into(), if converged { 1.0 } else { 0.0 });
    result.metrics.insert("grad_norm".into(), grad_norm);
    result.metrics.insert("final_loss".into(), loss.sqrt());
    result.metrics.insert("reference_loss".into(), reference_norm);
    result.metrics.insert("loss_ratio".into(), if reference_norm > 0.0 { loss.sqrt() / reference_norm } else { 1.0 });
    result.final_params.insert("m_values".into(), m.values().to_vec());
    result.final_params.insert("reference_values".into(), reference.values().to_vec());
    result.wall_seconds = start.elapsed().as_secs_f64();
    Ok(result)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::DenseVector;

    #[test]
    fn identity_is_immediate() {
        let r = run_spai_experiment(&CsrMatrix::identity(5), &SpaiConfig::default()).unwrap();
        assert_eq!(r.metric("iterations"), Some(0.0));
        assert_eq!(r.metric("final_loss"), Some(0.0));
        assert_eq!(r.final_params["m_values"], vec![1.0; 5]);
    }

    #[test]
    fn diagonal_closed_form() {
        let d = [1.0, 2.0, 4.0];
        let a = CsrMatrix::diag(&DenseVector::new(d.to_vec()));
        let r = run_spai_experiment(&a, &SpaiConfig::default()).unwrap();
        assert_eq!(r.metric("converged"), Some(1.0));
        for (m, di) in r.final_params["m_values"].iter().zip(d) {
            assert!((m - 1.0 / di).abs() < 0.01 / (2.0 * di * di), "{m} vs {}", 1.0 / di);
        }
        for (m, di) in r.final_params["reference_values"].iter().zip(d) {
            assert!((m - 1.0 / di).abs() < 1e-14);
        }
    }

    #[test]
    fn reference_minimises_each_row() {
        let a = crate::poisson::poisson_1d(6).unwrap();
        let m = spai_reference(&a).unwrap();
        let base = residual_norm(&m, &a).unwrap();
        for k in 0..m.nnz() {
            for h in [1e-4, -1e-4] {
                let mut v = m.values().to_vec();
                v[k] += h;
                assert!(residual_norm(&m.with_values(v).unwrap(), &a).unwrap() >= base);
            }
        }
    }
}
