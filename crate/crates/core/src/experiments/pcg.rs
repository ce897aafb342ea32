//! Learning a factored preconditioner `M = L Lᵀ` for conjugate gradients,
//! with `L` lower bidiagonal.

use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_finite, unit_gaussian_vectors, Adam, ExperimentResult};
use crate::autodiff::{Tape, Var};
use crate::csr::{CsrMatrix, SparsityPattern};
use crate::dense::DenseVector;
use crate::error::{dim_mismatch, Error, Result};
use crate::kernels::spmv;
use crate::poisson::poisson_2d;

/// Right-hand sides used by the training loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcgRhs {
    /// `train_vectors` unit Gaussian vectors drawn every epoch; the final
    /// comparison uses a separately drawn unit Gaussian vector.
    Random,
    /// The normalized all-ones vector, for training and comparison.
    Ones,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcgConfig {
    pub nx: usize,
    pub ny: usize,
    pub n_it: usize,
    pub gamma: f64,
    pub epochs: usize,
    pub lr: f64,
    pub rhs: PcgRhs,
    pub train_vectors: usize,
    pub tol: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for PcgConfig {
    fn default() -> Self {
        PcgConfig {
            nx: 8,
            ny: 8,
            n_it: 4,
            gamma: 0.6,
            epochs: 100,
            lr: 1e-2,
            rhs: PcgRhs::Random,
            train_vectors: 8,
            tol: 1e-6,
            max_iterations: 1000,
            seed: 0,
        }
    }
}

/// Normalized weights `γ^(N−i) / Σ_j γ^(N−j)` for `i = 1..=N`.
pub fn loss_weights(n_it: usize, gamma: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=n_it).map(|i| gamma.powi((n_it - i) as i32)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Preconditioned conjugate gradients from `x = 0`. Returns the iterate and
/// the relative residual history `‖r_k‖/‖b‖`, starting with `k = 0`. Stops at
/// `tol` or after `max_iterations` steps.
pub fn pcg_solve<M>(a: &CsrMatrix, m_apply: M, b: &DenseVector, tol: f64, max_iterations: usize) -> Result<(DenseVector, Vec<f64>)>
where
    M: Fn(&DenseVector) -> Result<DenseVector>,
{
    if a.nrows() != b.len() || a.ncols() != b.len() {
        return Err(dim_mismatch("pcg_solve", a.nrows(), b.len()));
    }
    let bnorm = b.norm2();
    if bnorm == 0.0 {
        return Ok((DenseVector::zeros(b.len()), vec![0.0]));
    }
    let mut x = DenseVector::zeros(b.len());
    let mut r = b.clone();
    let mut z = m_apply(&r)?;
    let mut p = z.clone();
    let mut rz = r.dot(&z)?;
    let mut history = vec![1.0];
    for k in 0..max_iterations {
        let ap = spmv(a, &p)?;
        let pap = p.dot(&ap)?;
        let alpha = rz / pap;
        if !alpha.is_finite() {
            return Err(Error::NonFinite(format!("pcg step length at iteration {k}")));
        }
        x = x.axpy(alpha, &p)?;
        r = r.axpy(-alpha, &ap)?;
        let rel = r.norm2() / bnorm;
        history.push(rel);
        if rel <= tol {
            break;
        }
        z = m_apply(&r)?;
        let rz_next = r.dot(&z)?;
        p = z.axpy(rz_next / rz, &p)?;
        rz = rz_next;
    }
    Ok((x, history))
}

/// Unpreconditioned conjugate gradients.
pub fn cg_solve(a: &CsrMatrix, b: &DenseVector, tol: f64, max_iterations: usize) -> Result<(DenseVector, Vec<f64>)> {
    pcg_solve(a, |r| Ok(r.clone()), b, tol, max_iterations)
}

/// Number of steps a residual history needs to reach `tol`.
pub fn iterations_to(history: &[f64], tol: f64) -> Option<usize> {
    history.iter().position(|&r| r <= tol)
}

/// Lower-bidiagonal `n x n` matrix with unit diagonal and stored zeros on
/// the subdiagonal.
pub fn lower_bidiagonal_identity(n: usize) -> CsrMatrix {
    let mut rowptr = vec![0];
    let mut colind = Vec::with_capacity(2 * n);
    let mut values = Vec::with_capacity(2 * n);
    for i in 0..n {
        if i > 0 {
            colind.push(i - 1);
            values.push(0.0);
        }
        colind.push(i);
        values.push(1.0);
        rowptr.push(colind.len());
    }
    let pattern = SparsityPattern::new(n, n, rowptr, colind).expect("bidiagonal pattern is valid");
    CsrMatrix::from_pattern(Arc::new(pattern), values).expect("values match pattern")
}

/// Records `n_it` PCG iterations per right-hand side and returns the
/// weighted residual loss averaged over `rhs`, plus the last residual node
/// of each solve.
pub fn pcg_loss(tape: &mut Tape, a: Var, l: Var, rhs: &[DenseVector], weights: &[f64]) -> Result<(Var, Vec<Var>)> {
    if rhs.is_empty() || weights.is_empty() {
        return Err(Error::Domain("pcg loss needs a right-hand side and one iteration".into()));
    }
    let lt = tape.transpose(l)?;
    let apply_m = |tape: &mut Tape, r: Var| -> Result<Var> {
        let y = tape.spmv(lt, r)?;
        tape.spmv(l, y)
    };
    let mut loss: Option<Var> = None;
    let mut last = Vec::with_capacity(rhs.len());
    for b in rhs {
        let scale = 1.0 / (b.norm2() * rhs.len() as f64);
        let mut r = tape.constant(b.clone());
        let mut z = apply_m(tape, r)?;
        let mut p = z;
        let mut rz = tape.dot(r, z)?;
        for (i, w) in weights.iter().enumerate() {
            let ap = tape.spmv(a, p)?;
            let pap = tape.dot(p, ap)?;
            let alpha = tape.div(rz, pap)?;
            let step = tape.scalar_mul(alpha, ap)?;
            r = tape.sub(r, step)?;
            let norm = tape.l2_norm(r)?;
            let term = tape.scale(w * scale, norm)?;
            loss = Some(match loss {
                Some(acc) => tape.add(acc, term)?,
                None => term,
            });
            if i + 1 < weights.len() {
                z = apply_m(tape, r)?;
                let rz_next = tape.dot(r, z)?;
                let beta = tape.div(rz_next, rz)?;
                let bp = tape.scalar_mul(beta, p)?;
                p = tape.add(z, bp)?;
                rz = rz_next;
            }
        }
        last.push(r);
    }
    Ok((loss.expect("at least one term"), last))
}

fn factored_apply(l: &CsrMatrix) -> impl Fn(&DenseVector) -> Result<DenseVector> + '_ {
    let lt = l.transpose();
    move |r| spmv(l, &spmv(&lt, r)?)
}

pub fn run_pcg_experiment(config: &PcgConfig) -> Result<ExperimentResult> {
    let start = Instant::now();
    let a = poisson_2d(config.nx, config.ny)?;
    let n = a.nrows();
    let weights = loss_weights(config.n_it, config.gamma);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let ones = {
        let v = DenseVector::filled(n, 1.0);
        let s = 1.0 / v.norm2();
        v.scaled(s)
    };
    let eval_b = match config.rhs {
        PcgRhs::Random => unit_gaussian_vectors(&mut rng, n, 1).remove(0),
        PcgRhs::Ones => ones.clone(),
    };
    let mut l = lower_bidiagonal_identity(n);
    let mut adam = Adam::new(config.lr);
    let mut result = ExperimentResult::new("pcg", config.seed);
    for epoch in 0..config.epochs {
        let rhs = match config.rhs {
            PcgRhs::Random => unit_gaussian_vectors(&mut rng, n, config.train_vectors),
            PcgRhs::Ones => vec![ones.clone()],
        };
        let mut tape = Tape::new();
        let a_var = tape.constant(a.clone());
        let l_var = tape.param(l.clone());
        let (loss, last) = pcg_loss(&mut tape, a_var, l_var, &rhs, &weights)?;
        let value = check_finite("pcg loss", epoch, tape.value(loss).as_scalar()?)?;
        if let Some(&r) = last.first() {
            let rel = tape.value(r).as_vector()?.norm2() / rhs[0].norm2();
            result.push_epoch("final_relative_residual", rel);
        }
        result.loss_history.push(value);
        let grads = tape.backward(loss)?;
        let g = grads
            .sparse(l_var)
            .ok_or_else(|| Error::Domain("preconditioner factor has no gradient".into()))?;
        adam.update(&mut [l.values_mut()], &[g.values()])?;
    }
    result.epochs = config.epochs;

    let (_, cg_history) = cg_solve(&a, &eval_b, config.tol, config.max_iterations)?;
    let (_, pcg_history) = pcg_solve(&a, factored_apply(&l), &eval_b, config.tol, config.max_iterations)?;
    let count = |h: &[f64]| iterations_to(h, config.tol).map_or(f64::INFINITY, |k| k as f64);
    result.metrics.insert("cg_iterations".into(), count(&cg_history));
    result.metrics.insert("pcg_iterations".into(), count(&pcg_history));
    if let (Some(first), Some(last)) = (result.loss_history.first(), result.loss_history.last()) {
        result.metrics.insert("initial_loss".into(), *first);
        result.metrics.insert("final_loss".into(), *last);
    }
    result.series.insert("cg_residuals".into(), cg_history);
    result.series.insert("pcg_residuals".into(), pcg_history);
    result.series.insert("loss_weights".into(), weights);
    result.final_params.insert("l_values".into(), l.values().to_vec());
    result.wall_seconds = start.elapsed().as_secs_f64();
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_for_four_iterations() {
        let w = loss_weights(4, 0.6);
        let expect = [0.0993, 0.1654, 0.2757, 0.4596];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 5e-5, "{a} vs {b}");
        }
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identity_factor_is_plain_cg() {
        let a = poisson_2d(8, 8).unwrap();
        let b = DenseVector::new((0..64).map(|i| ((i * 7) % 11) as f64 - 5.0).collect());
        let l = lower_bidiagonal_identity(64);
        let (_, plain) = cg_solve(&a, &b, 1e-10, 200).unwrap();
        let (_, pre) = pcg_solve(&a, factored_apply(&l), &b, 1e-10, 200).unwrap();
        assert_eq!(plain, pre);
        let k = iterations_to(&plain, 1e-10).unwrap();
        assert!(k > 0 && k <= 64);
    }

    #[test]
    fn taped_residuals_match_direct_iteration() {
        let a = poisson_2d(4, 4).unwrap();
        let b = DenseVector::filled(16, 0.25);
        let l = lower_bidiagonal_identity(16);
        let mut tape = Tape::new();
        let av = tape.constant(a.clone());
        let lv = tape.param(l);
        let (_, last) = pcg_loss(&mut tape, av, lv, std::slice::from_ref(&b), &loss_weights(3, 0.6)).unwrap();
        let (_, hist) = cg_solve(&a, &b, 0.0, 3).unwrap();
        let taped = tape.value(last[0]).as_vector().unwrap().norm2() / b.norm2();
        assert!((taped - hist[3]).abs() < 1e-14);
    }
}
