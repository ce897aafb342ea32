//! Tape-based reverse-mode differentiation.
//!
//! Every call on a [`Tape`] evaluates its kernel immediately and appends a
//! node. [`Tape::backward`] walks the nodes in decreasing id order and adds
//! each node's vector-Jacobian product into its inputs' adjoints.
//!
//! Adjoints of sparse values always live on the primal's pattern, so a
//! sparse leaf's gradient has exactly the leaf's stored entries.
//!
//! ```
//! use sparsegrad::autodiff::Tape;
//! use sparsegrad::{poisson::poisson_1d, DenseVector};
//!
//! let mut tape = Tape::new();
//! let a = tape.constant(poisson_1d(3).unwrap());
//! let x = tape.param(DenseVector::filled(3, 1.0));
//! let ax = tape.spmv(a, x).unwrap();
//! let z = tape.dot(x, ax).unwrap();
//! let grads = tape.backward(z).unwrap();
//! assert_eq!(grads.vector(x).unwrap().as_slice(), &[2.0, 0.0, 2.0]);
//! ```

mod ops;
mod value;

use std::collections::BTreeMap;
use std::sync::Arc;

pub use ops::Op;
use ops::Saved;
pub use value::Value;

use crate::csr::CsrMatrix;
use crate::dense::{DenseMatrix, DenseVector};
use crate::error::{Error, Result};
use crate::solve::{LuFactorization, Triangle};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    inputs: Vec<usize>,
    value: Value,
    saved: Saved,
    requires_grad: bool,
}

/// Append-only record of a computation. Inputs always have smaller ids than
/// the node that consumes them.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints of every node that requires a gradient, keyed by node id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradStore {
    grads: BTreeMap<usize, Value>,
}

impl GradStore {
    pub fn get(&self, var: Var) -> Option<&Value> {
        self.grads.get(&var.0)
    }

    pub fn scalar(&self, var: Var) -> Option<f64> {
        self.get(var).and_then(|v| v.as_scalar().ok())
    }

    pub fn vector(&self, var: Var) -> Option<&DenseVector> {
        self.get(var).and_then(|v| v.as_vector().ok())
    }

    pub fn matrix(&self, var: Var) -> Option<&DenseMatrix> {
        self.get(var).and_then(|v| v.as_matrix().ok())
    }

    pub fn sparse(&self, var: Var) -> Option<&CsrMatrix> {
        self.get(var).and_then(|v| v.as_sparse().ok())
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, &Value)> {
        self.grads.iter().map(|(&k, v)| (Var(k), v))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds an input node.
    pub fn leaf(&mut self, value: impl Into<Value>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            inputs: Vec::new(),
            value: value.into(),
            saved: Saved::None,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf whose gradient is collected.
    pub fn param(&mut self, value: impl Into<Value>) -> Var {
        self.leaf(value, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, value: impl Into<Value>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, var: Var) -> &Value {
        &self.nodes[var.0].value
    }

    pub fn op(&self, var: Var) -> &Op {
        &self.nodes[var.0].op
    }

    pub fn inputs(&self, var: Var) -> Vec<Var> {
        self.nodes[var.0].inputs.iter().map(|&i| Var(i)).collect()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Factors saved by an `SpSolve` node.
    pub fn lu(&self, var: Var) -> Option<&LuFactorization> {
        match &self.nodes[var.0].saved {
            Saved::Lu(lu) => Some(lu),
            _ => None,
        }
    }

    /// Evaluates `op` on `inputs` and appends the result.
    pub fn record(&mut self, op: Op, inputs: &[Var]) -> Result<Var> {
        if op == Op::Leaf {
            return Err(Error::Domain("leaves are added with Tape::leaf".into()));
        }
        if let Some(bad) = inputs.iter().find(|v| v.0 >= self.nodes.len()) {
            return Err(Error::Domain(format!("node {} is not on this tape", bad.0)));
        }
        let values: Vec<&Value> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
        let (value, saved) = ops::forward(&op, &values)?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            op,
            inputs: inputs.iter().map(|v| v.0).collect(),
            value,
            saved,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Gradients of the scalar `root` with respect to every node that
    /// requires one.
    pub fn backward(&self, root: Var) -> Result<GradStore> {
        let root_node = self
            .nodes
            .get(root.0)
            .ok_or_else(|| Error::Domain(format!("node {} is not on this tape", root.0)))?;
        if !matches!(root_node.value, Value::Scalar(_)) {
            return Err(Error::NonScalarRoot {
                node: root.0,
                kind: root_node.value.kind(),
            });
        }
        let mut adjoints: Vec<Option<Value>> = vec![None; root.0 + 1];
        if root_node.requires_grad {
            adjoints[root.0] = Some(Value::Scalar(1.0));
        }
        for id in (0..=root.0).rev() {
            let node = &self.nodes[id];
            if node.inputs.is_empty() {
                continue;
            }
            let Some(adj) = adjoints[id].as_ref() else {
                continue;
            };
            let needs: Vec<bool> = node.inputs.iter().map(|&i| self.nodes[i].requires_grad).collect();
            let inputs: Vec<&Value> = node.inputs.iter().map(|&i| &self.nodes[i].value).collect();
            let contributions = ops::vjp(&node.op, &inputs, &node.value, &node.saved, adj, &needs)?;
            for ((&input, need), grad) in node.inputs.iter().zip(&needs).zip(contributions) {
                let (true, Some(grad)) = (*need, grad) else {
                    continue;
                };
                match &mut adjoints[input] {
                    Some(acc) => acc.accumulate(&grad)?,
                    slot @ None => {
                        self.nodes[input].value.check_same_shape(&grad, node.op.name())?;
                        *slot = Some(grad);
                    }
                }
            }
        }
        let grads = adjoints
            .into_iter()
            .enumerate()
            .filter(|(id, _)| self.nodes[*id].requires_grad)
            .map(|(id, adj)| (id, adj.unwrap_or_else(|| self.nodes[id].value.zeros_like())))
            .collect();
        Ok(GradStore { grads })
    }

    pub fn spmv(&mut self, a: Var, x: Var) -> Result<Var> {
        self.record(Op::SpMV, &[a, x])
    }

    pub fn spspmm(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::SpSpMM, &[a, b])
    }

    pub fn spdmm(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::SpDMM, &[a, b])
    }

    pub fn sp_add(&mut self, alpha: f64, a: Var, beta: f64, b: Var) -> Result<Var> {
        self.record(Op::SpAdd { alpha, beta }, &[a, b])
    }

    pub fn sptrsv(&mut self, t: Var, b: Var, triangle: Triangle, unit_diag: bool) -> Result<Var> {
        self.record(Op::SpTrsv { triangle, unit_diag }, &[t, b])
    }

    pub fn spsolve(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::SpSolve, &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Transpose, &[a])
    }

    /// Sparse diagonal matrix from a vector.
    pub fn diag(&mut self, v: Var) -> Result<Var> {
        self.record(Op::DiagEmbed, &[v])
    }

    /// Stored values of a sparse matrix, in storage order.
    pub fn values(&mut self, a: Var) -> Result<Var> {
        self.record(Op::SparseValues, &[a])
    }

    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        self.record(Op::RowSum, &[a])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Sub, &[a, b])
    }

    pub fn scale(&mut self, c: f64, a: Var) -> Result<Var> {
        self.record(Op::Scale(c), &[a])
    }

    /// `s · x` for a scalar node `s`.
    pub fn scalar_mul(&mut self, s: Var, x: Var) -> Result<Var> {
        self.record(Op::ScalarMul, &[s, x])
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Div, &[a, b])
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Hadamard, &[a, b])
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Dot, &[a, b])
    }

    pub fn l2_norm(&mut self, a: Var) -> Result<Var> {
        self.record(Op::L2Norm, &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Sum, &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Relu, &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Sigmoid, &[a])
    }

    pub fn sin(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Sin, &[a])
    }

    pub fn power(&mut self, a: Var, p: f64) -> Result<Var> {
        self.record(Op::Power(p), &[a])
    }

    /// `diag(d) X`.
    pub fn row_scale(&mut self, d: Var, x: Var) -> Result<Var> {
        self.record(Op::RowScale, &[d, x])
    }

    /// Adds the bias vector to every row of `x`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        self.record(Op::AddBias, &[x, b])
    }

    pub fn dropout(&mut self, x: Var, p: f64, seed: u64) -> Result<Var> {
        self.record(Op::Dropout { p, seed }, &[x])
    }

    /// Mean cross entropy of `log_softmax(logits)` against `labels`, taken
    /// over the rows listed in `rows`.
    pub fn log_softmax_cross_entropy(&mut self, logits: Var, labels: &[usize], rows: &[usize]) -> Result<Var> {
        self.record(
            Op::LogSoftmaxCrossEntropy {
                labels: Arc::new(labels.to_vec()),
                rows: Arc::new(rows.to_vec()),
            },
            &[logits],
        )
    }
}
