//! Graph convolution `D̃^{-1/2} (A + I) D̃^{-1/2} X Θ + b` and a two-layer
//! node classifier trained on a planted-partition graph.
//!
//! The layer never forms `A + I`: with `d = (rowsum(A) + 1)^{-1/2}` it
//! evaluates `d ⊙ (A (d ⊙ XΘ) + d ⊙ XΘ) + b`, scaling rows by `d`.

use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_finite, Adam, ExperimentResult};
use crate::autodiff::{Tape, Var};
use crate::csr::CsrMatrix;
use crate::dense::{DenseMatrix, DenseVector};
use crate::error::{Error, Result};

/// Records one graph convolution. `adj` is a sparse node, `x` and `theta`
/// dense matrices, `bias` a vector.
pub fn gcn_layer(tape: &mut Tape, adj: Var, x: Var, theta: Var, bias: Var) -> Result<Var> {
    let n = tape.value(adj).as_sparse()?.nrows();
    let rs = tape.row_sum(adj)?;
    if let Some(i) = tape.value(rs).as_vector()?.as_slice().iter().position(|&s| s + 1.0 <= 0.0) {
        return Err(Error::Domain(format!("row {i} has degree sum {} <= -1", tape.value(rs).flat()[i])));
    }
    let ones = tape.constant(DenseVector::filled(n, 1.0));
    let degree = tape.add(rs, ones)?;
    let d = tape.power(degree, -0.5)?;
    let xt = tape.matmul(x, theta)?;
    let dx = tape.row_scale(d, xt)?;
    let adx = tape.spdmm(adj, dx)?;
    let s = tape.add(adx, dx)?;
    let c = tape.row_scale(d, s)?;
    tape.add_bias(c, bias)
}

/// Untaped evaluation of [`gcn_layer`].
pub fn gcn_forward(adj: &CsrMatrix, x: &DenseMatrix, theta: &DenseMatrix, bias: &DenseVector) -> Result<DenseMatrix> {
    let mut tape = Tape::new();
    let vars = [
        tape.constant(adj.clone()),
        tape.constant(x.clone()),
        tape.constant(theta.clone()),
        tape.constant(bias.clone()),
    ];
    let out = gcn_layer(&mut tape, vars[0], vars[1], vars[2], vars[3])?;
    Ok(tape.value(out).as_matrix()?.clone())
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` as a dense matrix.
pub fn dense_normalized_adjacency(adj: &CsrMatrix) -> Result<DenseMatrix> {
    let mut a = adj.to_dense();
    let n = a.nrows();
    for i in 0..n {
        a[(i, i)] += 1.0;
    }
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let s: f64 = a.row(i).iter().sum();
            if s <= 0.0 {
                Err(Error::Domain(format!("row {i} has degree sum {s} <= 0")))
            } else {
                Ok(1.0 / s.sqrt())
            }
        })
        .collect::<Result<_>>()?;
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] *= d[i] * d[j];
        }
    }
    Ok(a)
}

/// Random graph with labelled communities.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedPartition {
    pub adjacency: CsrMatrix,
    pub labels: Vec<usize>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Symmetric unweighted graph on `n` nodes split into `classes` contiguous
/// blocks. Same-block pairs connect with probability `p_in`, other pairs
/// with `p_out`. The first `train_per_class` nodes of each block are the
/// training nodes.
pub fn planted_partition<R: Rng>(
    rng: &mut R,
    n: usize,
    classes: usize,
    p_in: f64,
    p_out: f64,
    train_per_class: usize,
) -> Result<PlantedPartition> {
    if classes == 0 || n < classes {
        return Err(Error::Domain(format!("cannot split {n} nodes into {classes} classes")));
    }
    let labels: Vec<usize> = (0..n).map(|i| i * classes / n).collect();
    let mut triples = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                triples.push((i, j, 1.0));
                triples.push((j, i, 1.0));
            }
        }
    }
    let adjacency = CsrMatrix::from_coo(n, n, &triples)?;
    let mut seen = vec![0; classes];
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, &c) in labels.iter().enumerate() {
        if seen[c] < train_per_class {
            seen[c] += 1;
            train.push(i);
        } else {
            test.push(i);
        }
    }
    Ok(PlantedPartition {
        adjacency,
        labels,
        train,
        test,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GcnConfig {
    pub nodes: usize,
    pub classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub train_per_class: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub seed: u64,
    /// Use a dense normalized adjacency and dense products instead of the
    /// sparse layer.
    pub dense_reference: bool,
}

impl Default for GcnConfig {
    fn default() -> Self {
        GcnConfig {
            nodes: 200,
            classes: 2,
            p_in: 0.05,
            p_out: 0.005,
            train_per_class: 20,
            hidden: 16,
            epochs: 200,
            lr: 0.01,
            weight_decay: 5e-4,
            dropout: 0.5,
            seed: 0,
            dense_reference: false,
        }
    }
}

fn glorot<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> DenseMatrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let values = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect();
    DenseMatrix::new(fan_in, fan_out, values).expect("shape matches")
}

struct Model {
    theta1: DenseMatrix,
    bias1: DenseVector,
    theta2: DenseMatrix,
    bias2: DenseVector,
}

struct Forward {
    tape: Tape,
    params: [Var; 4],
    logits: Var,
}

enum Graph<'a> {
    Sparse(&'a CsrMatrix),
    Dense(&'a DenseMatrix),
}

fn forward(graph: &Graph, x: &DenseMatrix, model: &Model, dropout: Option<(f64, u64)>) -> Result<Forward> {
    let mut tape = Tape::new();
    let g = match graph {
        Graph::Sparse(a) => tape.constant((*a).clone()),
        Graph::Dense(a) => tape.constant((*a).clone()),
    };
    let xv = tape.constant(x.clone());
    let params = [
        tape.param(model.theta1.clone()),
        tape.param(model.bias1.clone()),
        tape.param(model.theta2.clone()),
        tape.param(model.bias2.clone()),
    ];
    let layer = |tape: &mut Tape, input: Var, theta: Var, bias: Var| -> Result<Var> {
        match graph {
            Graph::Sparse(_) => gcn_layer(tape, g, input, theta, bias),
            Graph::Dense(_) => {
                let xt = tape.matmul(input, theta)?;
                let c = tape.matmul(g, xt)?;
                tape.add_bias(c, bias)
            }
        }
    };
    let h = layer(&mut tape, xv, params[0], params[1])?;
    let h = tape.relu(h)?;
    let h = match dropout {
        Some((p, seed)) => tape.dropout(h, p, seed)?,
        None => h,
    };
    let out = layer(&mut tape, h, params[2], params[3])?;
    let logits = tape.sigmoid(out)?;
    Ok(Forward { tape, params, logits })
}

fn accuracy(logits: &DenseMatrix, labels: &[usize], rows: &[usize]) -> f64 {
    let correct = rows
        .iter()
        .filter(|&&r| {
            let row = logits.row(r);
            let best = (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b });
            best == labels[r]
        })
        .count();
    correct as f64 / rows.len().max(1) as f64
}

pub fn run_gcn_experiment(config: &GcnConfig) -> Result<ExperimentResult> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let graph = planted_partition(
        &mut rng,
        config.nodes,
        config.classes,
        config.p_in,
        config.p_out,
        config.train_per_class,
    )?;
    let dense_adj;
    let g = if config.dense_reference {
        dense_adj = dense_normalized_adjacency(&graph.adjacency)?;
        Graph::Dense(&dense_adj)
    } else {
        Graph::Sparse(&graph.adjacency)
    };
    let x = DenseMatrix::identity(config.nodes);
    let mut model = Model {
        theta1: glorot(&mut rng, config.nodes, config.hidden),
        bias1: DenseVector::zeros(config.hidden),
        theta2: glorot(&mut rng, config.hidden, config.classes),
        bias2: DenseVector::zeros(config.classes),
    };
    let mut adam = Adam::new(config.lr).with_weight_decay(config.weight_decay);
    let mut result = ExperimentResult::new("gcn", config.seed);
    for epoch in 0..config.epochs {
        let seed = rng.next_u64();
        let dropout = (config.dropout > 0.0).then_some((config.dropout, seed));
        let mut f = forward(&g, &x, &model, dropout)?;
        let loss = f.tape.log_softmax_cross_entropy(f.logits, &graph.labels, &graph.train)?;
        let value = check_finite("gcn training loss", epoch, f.tape.value(loss).as_scalar()?)?;
        result.loss_history.push(value);
        let grads = f.tape.backward(loss)?;
        let grad = |k: usize| -> Result<Vec<f64>> {
            grads
                .get(f.params[k])
                .map(|v| v.flat().to_vec())
                .ok_or_else(|| Error::Domain(format!("parameter {k} has no gradient")))
        };
        let (g0, g1, g2, g3) = (grad(0)?, grad(1)?, grad(2)?, grad(3)?);
        adam.update_with_decay(
            &mut [
                model.theta1.as_mut_slice(),
                model.bias1.as_mut_slice(),
                model.theta2.as_mut_slice(),
                model.bias2.as_mut_slice(),
            ],
            &[&g0, &g1, &g2, &g3],
            &[true, false, true, false],
        )?;

        let mut eval = forward(&g, &x, &model, None)?;
        let logits = eval.tape.value(eval.logits).as_matrix()?.clone();
        let test_loss = if graph.test.is_empty() {
            0.0
        } else {
            let l = eval.tape.log_softmax_cross_entropy(eval.logits, &graph.labels, &graph.test)?;
            eval.tape.value(l).as_scalar()?
        };
        result.push_epoch("train_accuracy", accuracy(&logits, &graph.labels, &graph.train));
        result.push_epoch("test_accuracy", accuracy(&logits, &graph.labels, &graph.test));
        result.push_epoch("test_loss", test_loss);
    }
    result.epochs = config.epochs;
    for key in ["train_accuracy", "test_accuracy", "test_loss"] {
        if let Some(v) = result.epoch_series.get(key).and_then(|s| s.last()) {
            result.metrics.insert(format!("final_{key}"), *v);
        }
    }
    if let (Some(first), Some(last)) = (result.loss_history.first(), result.loss_history.last()) {
        result.metrics.insert("initial_loss".into(), *first);
        result.metrics.insert("final_loss".into(), *last);
    }
    result.metrics.insert("edges".into(), (graph.adjacency.nnz() / 2) as f64);
    result.final_params.insert("theta1".into(), model.theta1.into_vec());
    result.final_params.insert("bias1".into(), model.bias1.into_vec());
    result.final_params.insert("theta2".into(), model.theta2.into_vec());
    result.final_params.insert("bias2".into(), model.bias2.into_vec());
    result.wall_seconds = start.elapsed().as_secs_f64();
    Ok(result)
}
