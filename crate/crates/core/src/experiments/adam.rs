use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, Error, Result};

/// Adam with bias correction and optional decoupled weight decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decay applied as `θ -= lr · weight_decay · θ`, separate from the
    /// gradient moments.
    pub weight_decay: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Updates every parameter group in place. Group shapes are fixed by
    /// the first call.
    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        self.update_with_decay(params, grads, &vec![true; params.len()])
    }

    /// As [`Adam::update`], applying weight decay only to groups with
    /// `decay[k]` set.
    pub fn update_with_decay(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], decay: &[bool]) -> Result<()> {
        if params.len() != grads.len() || params.len() != decay.len() {
            return Err(dim_mismatch("adam", params.len(), grads.len()));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(dim_mismatch("adam parameter groups", self.m.len(), params.len()));
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() || p.len() != self.m[k].len() {
                return Err(dim_mismatch("adam group", self.m[k].len(), format!("{} / {}", p.len(), g.len())));
            }
            if let Some(i) = g.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("gradient entry {i} of group {k}")));
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - self.beta1.powf(t);
        let c2 = 1.0 - self.beta2.powf(t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                if decay[k] && self.weight_decay != 0.0 {
                    p[i] -= self.lr * self.weight_decay * p[i];
                }
                p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
