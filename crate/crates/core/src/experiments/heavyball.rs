//! Heavyball (momentum) iteration `x⁺ = x − α(Ax − b) + β(x − x_prev)` with
//! learned scalars `α`, `β`.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{unit_gaussian_vectors, Adam, ExperimentResult};
use crate::autodiff::{Tape, Var};
use crate::csr::CsrMatrix;
use crate::dense::DenseVector;
use crate::error::{Error, Result};
use crate::poisson::poisson_1d;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeavyballConfig {
    pub n: usize,
    /// Iterations per evaluation; `None` means `ceil(3n/4)`.
    pub iterations: Option<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub alpha0: f64,
    pub beta0: f64,
    pub test_vectors: usize,
    /// Size of the fixed set used to compare initial and final parameters.
    pub eval_vectors: usize,
    pub seed: u64,
}

impl Default for HeavyballConfig {
    fn default() -> Self {
        HeavyballConfig {
            n: 16,
            iterations: None,
            epochs: 200,
            lr: 1e-2,
            alpha0: 0.1,
            beta0: 0.1,
            test_vectors: 8,
            eval_vectors: 64,
            seed: 0,
        }
    }
}

impl HeavyballConfig {
    pub fn steps(&self) -> usize {
        self.iterations.unwrap_or((3 * self.n).div_ceil(4))
    }
}

/// `t` taped heavyball steps from `x0`, with `x⁽⁻¹⁾ = x⁽⁰⁾`. `alpha` and
/// `beta` are scalar nodes.
pub fn heavyball_iterate(tape: &mut Tape, a: Var, b: Var, x0: Var, alpha: Var, beta: Var, t: usize) -> Result<Var> {
    if t == 0 {
        return Err(Error::Domain("heavyball needs at least one step".into()));
    }
    let mut prev = x0;
    let mut x = x0;
    for _ in 0..t {
        let ax = tape.spmv(a, x)?;
        let grad = tape.sub(ax, b)?;
        let step = tape.scalar_mul(alpha, grad)?;
        let diff = tape.sub(x, prev)?;
        let momentum = tape.scalar_mul(beta, diff)?;
        let descended = tape.sub(x, step)?;
        let next = tape.add(descended, momentum)?;
        prev = x;
        x = next;
    }
    Ok(x)
}

/// `Σ_j h_t(x_j)ᵀ A h_t(x_j)` against `b = 0` and its gradient `(∂α, ∂β)`.
pub fn heavyball_loss(a: &CsrMatrix, alpha: f64, beta: f64, t: usize, xs: &[DenseVector]) -> Result<(f64, [f64; 2])> {
    let mut tape = Tape::new();
    let al = tape.param(alpha);
    let be = tape.param(beta);
    let a_var = tape.constant(a.clone());
    let b = tape.constant(DenseVector::zeros(a.nrows()));
    let mut loss: Option<Var> = None;
    for x in xs {
        let x0 = tape.constant(x.clone());
        let h = heavyball_iterate(&mut tape, a_var, b, x0, al, be, t)?;
        let ah = tape.spmv(a_var, h)?;
        let term = tape.dot(h, ah)?;
        loss = Some(match loss {
            Some(l) => tape.add(l, term)?,
            None => term,
        });
    }
    let loss = loss.ok_or_else(|| Error::Domain("heavyball loss needs at least one test vector".into()))?;
    let value = tape.value(loss).as_scalar()?;
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("heavyball loss at alpha = {alpha}, beta = {beta}")));
    }
    let grads = tape.backward(loss)?;
    Ok((value, [grads.scalar(al).unwrap_or(0.0), grads.scalar(be).unwrap_or(0.0)]))
}

pub fn run_heavyball_experiment(config: &HeavyballConfig) -> Result<ExperimentResult> {
    let start = Instant::now();
    let a = poisson_1d(config.n)?;
    let t = config.steps();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let eval = unit_gaussian_vectors(&mut rng, config.n, config.eval_vectors);
    let scale = config.test_vectors as f64 / config.eval_vectors.max(1) as f64;
    let mut params = [config.alpha0, config.beta0];
    let (initial_eval, _) = heavyball_loss(&a, params[0], params[1], t, &eval)?;
    let mut adam = Adam::new(config.lr);
    let mut result = ExperimentResult::new("heavyball", config.seed);
    for _ in 0..config.epochs {
        let xs = unit_gaussian_vectors(&mut rng, config.n, config.test_vectors);
        let (loss, grad) = heavyball_loss(&a, params[0], params[1], t, &xs)?;
        result.loss_history.push(loss);
        adam.update(&mut [&mut params], &[&grad])?;
        result.push_epoch("alpha", params[0]);
        result.push_epoch("beta", params[1]);
    }
    let (final_eval, _) = heavyball_loss(&a, params[0], params[1], t, &eval)?;
    result.epochs = config.epochs;
    // evaluation losses are rescaled to the training batch size
    result.metrics.insert("initial_loss".into(), initial_eval * scale);
    result.metrics.insert("final_loss".into(), final_eval * scale);
    result.metrics.insert("reduction".into(), initial_eval / final_eval);
    result.metrics.insert("iterations".into(), t as f64);
    result.final_params.insert("alpha".into(), vec![params[0]]);
    result.final_params.insert("beta".into(), vec![params[1]]);
    result.wall_seconds = start.elapsed().as_secs_f64();
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iterate(a: CsrMatrix, x: Vec<f64>, alpha: f64, beta: f64, t: usize) -> DenseVector {
        let n = a.nrows();
        let mut tape = Tape::new();
        let a = tape.constant(a);
        let b = tape.constant(DenseVector::zeros(n));
        let x0 = tape.constant(DenseVector::new(x));
        let al = tape.constant(alpha);
        let be = tape.constant(beta);
        let out = heavyball_iterate(&mut tape, a, b, x0, al, be, t).unwrap();
        tape.value(out).as_vector().unwrap().clone()
    }

    #[test]
    fn richardson_annihilates() {
        let a = CsrMatrix::identity(3).scaled(2.0);
        assert_eq!(iterate(a, vec![1.0, -4.0, 2.5], 0.5, 0.0, 1).as_slice(), &[0.0; 3]);
    }

    #[test]
    fn zero_parameters_are_constant() {
        let x = vec![0.2, 0.7, -1.0];
        assert_eq!(iterate(poisson_1d(3).unwrap(), x.clone(), 0.0, 0.0, 5).as_slice(), &x[..]);
    }

    #[test]
    fn default_steps() {
        assert_eq!(HeavyballConfig::default().steps(), 12);
    }

    #[test]
    fn divergence_is_reported() {
        let a = poisson_1d(16).unwrap();
        let x = vec![DenseVector::filled(16, 0.25)];
        match heavyball_loss(&a, 1e3, 1e3, 200, &x) {
            Err(Error::NonFinite(msg)) => assert!(msg.contains("alpha = 1000")),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
