use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::value::Value;
use crate::csr::{CsrMatrix, SparsityPattern};
use crate::dense::{DenseMatrix, DenseVector};
use crate::error::{dim_mismatch, Error, Result};
use crate::kernels;
use crate::solve::{self, LuFactorization, Triangle};

/// Operation recorded on a tape node.
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Leaf,
    /// `A x`, inputs `[A, x]`.
    SpMV,
    /// `A B`, both sparse.
    SpSpMM,
    /// `A B`, `B` dense.
    SpDMM,
    /// `αA + βB`.
    SpAdd { alpha: f64, beta: f64 },
    /// `T⁻¹ b`, inputs `[T, b]`.
    SpTrsv { triangle: Triangle, unit_diag: bool },
    /// `A⁻¹ b`, inputs `[A, b]`.
    SpSolve,
    /// Sparse transpose.
    Transpose,
    /// Vector to sparse diagonal matrix.
    DiagEmbed,
    /// Stored values of a sparse matrix as a vector.
    SparseValues,
    /// Row sums of a sparse matrix.
    RowSum,
    /// Dense matrix product.
    MatMul,
    Add,
    Sub,
    /// Multiplication by a constant.
    Scale(f64),
    /// `s · x` for a scalar node `s`, inputs `[s, x]`.
    ScalarMul,
    /// Scalar division.
    Div,
    Hadamard,
    Dot,
    L2Norm,
    Sum,
    Relu,
    Sigmoid,
    Sin,
    /// Element-wise `x^p`.
    Power(f64),
    /// `diag(d) X`, inputs `[d, X]`.
    RowScale,
    /// `X + 1 bᵀ`, inputs `[X, b]`.
    AddBias,
    /// Inverted dropout with drop probability `p`; the mask is drawn from
    /// `seed`.
    Dropout { p: f64, seed: u64 },
    /// Mean negative log-softmax likelihood of `labels[r]` over `rows`.
    LogSoftmaxCrossEntropy {
        labels: Arc<Vec<usize>>,
        rows: Arc<Vec<usize>>,
    },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::SpMV => "spmv",
            Op::SpSpMM => "spspmm",
            Op::SpDMM => "spdmm",
            Op::SpAdd { .. } => "sp_add",
            Op::SpTrsv { .. } => "sptrsv",
            Op::SpSolve => "spsolve",
            Op::Transpose => "transpose",
            Op::DiagEmbed => "diag",
            Op::SparseValues => "values",
            Op::RowSum => "row_sum",
            Op::MatMul => "matmul",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Scale(_) => "scale",
            Op::ScalarMul => "scalar_mul",
            Op::Div => "div",
            Op::Hadamard => "hadamard",
            Op::Dot => "dot",
            Op::L2Norm => "l2_norm",
            Op::Sum => "sum",
            Op::Relu => "relu",
            Op::Sigmoid => "sigmoid",
            Op::Sin => "sin",
            Op::Power(_) => "power",
            Op::RowScale => "row_scale",
            Op::AddBias => "add_bias",
            Op::Dropout { .. } => "dropout",
            Op::LogSoftmaxCrossEntropy { .. } => "log_softmax_cross_entropy",
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            Op::Leaf => 0,
            Op::Transpose
            | Op::DiagEmbed
            | Op::SparseValues
            | Op::RowSum
            | Op::Scale(_)
            | Op::L2Norm
            | Op::Sum
            | Op::Relu
            | Op::Sigmoid
            | Op::Sin
            | Op::Power(_)
            | Op::Dropout { .. }
            | Op::LogSoftmaxCrossEntropy { .. } => 1,
            _ => 2,
        }
    }
}

/// Operands kept beyond the input values for a node's adjoint.
#[derive(Debug, Clone)]
pub enum Saved {
    None,
    Lu(Box<LuFactorization>),
    Mask(Vec<f64>),
    Softmax(DenseMatrix),
}

fn is_dense(v: &Value) -> bool {
    !matches!(v, Value::Sparse(_))
}

fn require_dense(op: &'static str, v: &Value) -> Result<()> {
    if is_dense(v) {
        Ok(())
    } else {
        Err(Error::WrongKind {
            op,
            expected: "dense value",
            got: v.kind(),
        })
    }
}

fn flat_dot(a: &Value, b: &Value) -> f64 {
    a.flat().iter().zip(b.flat()).map(|(x, y)| x * y).sum()
}

pub(crate) fn forward(op: &Op, inputs: &[&Value]) -> Result<(Value, Saved)> {
    if inputs.len() != op.arity() {
        return Err(dim_mismatch(op.name(), format!("{} inputs", op.arity()), inputs.len()));
    }
    let none = |v: Value| Ok((v, Saved::None));
    match op {
        Op::Leaf => unreachable!("leaves are not recorded through forward"),
        Op::SpMV => none(kernels::spmv(inputs[0].as_sparse()?, inputs[1].as_vector()?)?.into()),
        Op::SpSpMM => none(kernels::spspmm(inputs[0].as_sparse()?, inputs[1].as_sparse()?)?.into()),
        Op::SpDMM => none(kernels::spdmm(inputs[0].as_sparse()?, inputs[1].as_matrix()?)?.into()),
        Op::SpAdd { alpha, beta } => none(
            kernels::sp_add(*alpha, inputs[0].as_sparse()?, *beta, inputs[1].as_sparse()?)?.into(),
        ),
        Op::SpTrsv { triangle, unit_diag } => none(
            solve::sptrsv(inputs[0].as_sparse()?, inputs[1].as_vector()?, *triangle, *unit_diag)?
                .into(),
        ),
        Op::SpSolve => {
            let (x, lu) = solve::spsolve_factored(inputs[0].as_sparse()?, inputs[1].as_vector()?)?;
            Ok((x.into(), Saved::Lu(Box::new(lu))))
        }
        Op::Transpose => none(inputs[0].as_sparse()?.transpose().into()),
        Op::DiagEmbed => none(CsrMatrix::diag(inputs[0].as_vector()?).into()),
        Op::SparseValues => none(DenseVector::new(inputs[0].as_sparse()?.values().to_vec()).into()),
        Op::RowSum => none(inputs[0].as_sparse()?.row_sum().into()),
        Op::MatMul => none(inputs[0].as_matrix()?.matmul(inputs[1].as_matrix()?)?.into()),
        Op::Add => {
            require_dense("add", inputs[0])?;
            none(inputs[0].zip_map(inputs[1], "add", |a, b| a + b)?)
        }
        Op::Sub => {
            require_dense("sub", inputs[0])?;
            none(inputs[0].zip_map(inputs[1], "sub", |a, b| a - b)?)
        }
        Op::Scale(c) => {
            let c = *c;
            none(inputs[0].map(|x| c * x))
        }
        Op::ScalarMul => {
            let s = inputs[0].as_scalar()?;
            none(inputs[1].map(|x| s * x))
        }
        Op::Div => none(Value::Scalar(inputs[0].as_scalar()? / inputs[1].as_scalar()?)),
        Op::Hadamard => {
            require_dense("hadamard", inputs[0])?;
            none(inputs[0].zip_map(inputs[1], "hadamard", |a, b| a * b)?)
        }
        Op::Dot => {
            require_dense("dot", inputs[0])?;
            inputs[0].check_same_shape(inputs[1], "dot")?;
            none(Value::Scalar(flat_dot(inputs[0], inputs[1])))
        }
        Op::L2Norm => {
            require_dense("l2_norm", inputs[0])?;
            none(Value::Scalar(inputs[0].flat().iter().map(|x| x * x).sum::<f64>().sqrt()))
        }
        Op::Sum => none(Value::Scalar(inputs[0].flat().iter().sum())),
        Op::Relu => {
            require_dense("relu", inputs[0])?;
            none(inputs[0].map(|x| if x > 0.0 { x } else { 0.0 }))
        }
        Op::Sigmoid => {
            require_dense("sigmoid", inputs[0])?;
            none(inputs[0].map(sigmoid))
        }
        Op::Sin => {
            require_dense("sin", inputs[0])?;
            none(inputs[0].map(f64::sin))
        }
        Op::Power(p) => {
            require_dense("power", inputs[0])?;
            let p = *p;
            none(inputs[0].map(|x| x.powf(p)))
        }
        Op::RowScale => {
            let d = inputs[0].as_vector()?;
            let x = inputs[1].as_matrix()?;
            if d.len() != x.nrows() {
                return Err(dim_mismatch("row_scale", x.nrows(), d.len()));
            }
            let mut out = x.clone();
            for i in 0..x.nrows() {
                let di = d[i];
                out.row_mut(i).iter_mut().for_each(|v| *v *= di);
            }
            none(out.into())
        }
        Op::AddBias => {
            let x = inputs[0].as_matrix()?;
            let b = inputs[1].as_vector()?;
            if b.len() != x.ncols() {
                return Err(dim_mismatch("add_bias", x.ncols(), b.len()));
            }
            let mut out = x.clone();
            for i in 0..x.nrows() {
                out.row_mut(i)
                    .iter_mut()
                    .zip(b.as_slice())
                    .for_each(|(v, bj)| *v += bj);
            }
            none(out.into())
        }
        Op::Dropout { p, seed } => {
            require_dense("dropout", inputs[0])?;
            if !(0.0..1.0).contains(p) {
                return Err(Error::Domain(format!("dropout probability {p} not in [0, 1)")));
            }
            let n = inputs[0].flat().len();
            let mask: Vec<f64> = if *p == 0.0 {
                vec![1.0; n]
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let keep = 1.0 / (1.0 - p);
                (0..n)
                    .map(|_| if rng.random::<f64>() < *p { 0.0 } else { keep })
                    .collect()
            };
            let mut out = inputs[0].clone();
            out.flat_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
            Ok((out, Saved::Mask(mask)))
        }
        Op::LogSoftmaxCrossEntropy { labels, rows } => {
            let logits = inputs[0].as_matrix()?;
            if labels.len() != logits.nrows() {
                return Err(dim_mismatch("log_softmax_cross_entropy", logits.nrows(), labels.len()));
            }
            if rows.is_empty() {
                return Err(Error::Domain("cross entropy over an empty row set".into()));
            }
            let mut probs = DenseMatrix::zeros(logits.nrows(), logits.ncols());
            let mut loss = 0.0;
            for &r in rows.iter() {
                let row = logits.row(r);
                let label = labels[r];
                if label >= logits.ncols() {
                    return Err(Error::Domain(format!("label {label} out of range at row {r}")));
                }
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
                loss += lse - row[label];
                for (p, x) in probs.row_mut(r).iter_mut().zip(row) {
                    *p = (x - lse).exp();
                }
            }
            Ok((Value::Scalar(loss / rows.len() as f64), Saved::Softmax(probs)))
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Adjoints for every input of a node. Entries for inputs with
/// `needs[i] == false` may be `None`.
pub(crate) fn vjp(
    op: &Op,
    inputs: &[&Value],
    output: &Value,
    saved: &Saved,
    adj: &Value,
    needs: &[bool],
) -> Result<Vec<Option<Value>>> {
    let some = |v: Value| Some(v);
    Ok(match op {
        Op::Leaf => Vec::new(),
        Op::SpMV => {
            let a = inputs[0].as_sparse()?;
            let x = inputs[1].as_vector()?;
            let v = adj.as_vector()?;
            if needs[0] {
                let (ga, gx) = kernels::spmv_vjp(v, a, x)?;
                vec![some(ga.into()), some(gx.into())]
            } else {
                vec![None, some(kernels::spmv_transpose(a, v)?.into())]
            }
        }
        Op::SpSpMM => {
            let (ga, gb) =
                kernels::spspmm_vjp_unchecked(adj.as_sparse()?, inputs[0].as_sparse()?, inputs[1].as_sparse()?)?;
            vec![some(ga.into()), some(gb.into())]
        }
        Op::SpDMM => {
            let (ga, gb) = kernels::spdmm_vjp(adj.as_matrix()?, inputs[0].as_sparse()?, inputs[1].as_matrix()?)?;
            vec![some(ga.into()), some(gb.into())]
        }
        Op::SpAdd { alpha, beta } => {
            let (ga, gb) = kernels::sp_add_vjp(
                adj.as_sparse()?,
                inputs[0].as_sparse()?,
                inputs[1].as_sparse()?,
                *alpha,
                *beta,
            )?;
            vec![some(ga.into()), some(gb.into())]
        }
        Op::SpTrsv { triangle, unit_diag } => {
            let (gt, gb) = solve::sptrsv_vjp(
                adj.as_vector()?,
                inputs[0].as_sparse()?,
                output.as_vector()?,
                *triangle,
                *unit_diag,
            )?;
            vec![some(gt.into()), some(gb.into())]
        }
        Op::SpSolve => {
            let Saved::Lu(lu) = saved else {
                return Err(Error::Domain("spsolve node lost its factors".into()));
            };
            let (ga, gb) = solve::spsolve_vjp(adj.as_vector()?, inputs[0].as_sparse()?, output.as_vector()?, lu)?;
            vec![some(ga.into()), some(gb.into())]
        }
        Op::Transpose => {
            // the adjoint lives on pattern(Aᵀ); its transpose is pattern(A)
            let t = adj.as_sparse()?.transpose();
            let a = inputs[0].as_sparse()?;
            let g = CsrMatrix::from_pattern(a.pattern().clone(), t.into_values())?;
            vec![some(g.into())]
        }
        Op::DiagEmbed => vec![some(adj.as_sparse()?.diagonal().into())],
        Op::SparseValues => {
            let a = inputs[0].as_sparse()?;
            let g = CsrMatrix::from_pattern(a.pattern().clone(), adj.as_vector()?.as_slice().to_vec())?;
            vec![some(g.into())]
        }
        Op::RowSum => {
            let a = inputs[0].as_sparse()?;
            let v = adj.as_vector()?;
            let values = row_broadcast(a.pattern(), v.as_slice());
            vec![some(CsrMatrix::from_pattern(a.pattern().clone(), values)?.into())]
        }
        Op::MatMul => {
            let x = inputs[0].as_matrix()?;
            let w = inputs[1].as_matrix()?;
            let v = adj.as_matrix()?;
            let gx = if needs[0] { some(v.matmul(&w.transpose())?.into()) } else { None };
            let gw = if needs[1] { some(x.transpose().matmul(v)?.into()) } else { None };
            vec![gx, gw]
        }
        Op::Add => vec![some(adj.clone()), some(adj.clone())],
        Op::Sub => vec![some(adj.clone()), some(adj.map(|x| -x))],
        Op::Scale(c) => {
            let c = *c;
            vec![some(adj.map(|x| c * x))]
        }
        Op::ScalarMul => {
            let s = inputs[0].as_scalar()?;
            vec![
                some(Value::Scalar(flat_dot(adj, inputs[1]))),
                some(adj.map(|x| s * x)),
            ]
        }
        Op::Div => {
            let a = inputs[0].as_scalar()?;
            let b = inputs[1].as_scalar()?;
            let g = adj.as_scalar()?;
            vec![some(Value::Scalar(g / b)), some(Value::Scalar(-g * a / (b * b)))]
        }
        Op::Hadamard => vec![
            some(adj.zip_map(inputs[1], "hadamard", |g, b| g * b)?),
            some(adj.zip_map(inputs[0], "hadamard", |g, a| g * a)?),
        ],
        Op::Dot => {
            let g = adj.as_scalar()?;
            vec![some(inputs[1].map(|b| g * b)), some(inputs[0].map(|a| g * a))]
        }
        Op::L2Norm => {
            let g = adj.as_scalar()?;
            let norm = output.as_scalar()?;
            if norm == 0.0 {
                vec![some(inputs[0].zeros_like())]
            } else {
                vec![some(inputs[0].map(|a| g * a / norm))]
            }
        }
        Op::Sum => {
            let g = adj.as_scalar()?;
            vec![some(inputs[0].map(|_| g))]
        }
        Op::Relu => vec![some(adj.zip_map(inputs[0], "relu", |g, x| if x > 0.0 { g } else { 0.0 })?)],
        Op::Sigmoid => vec![some(adj.zip_map(output, "sigmoid", |g, s| g * s * (1.0 - s))?)],
        Op::Sin => vec![some(adj.zip_map(inputs[0], "sin", |g, x| g * x.cos())?)],
        Op::Power(p) => {
            let p = *p;
            vec![some(adj.zip_map(inputs[0], "power", |g, x| g * p * x.powf(p - 1.0))?)]
        }
        Op::RowScale => {
            let d = inputs[0].as_vector()?;
            let x = inputs[1].as_matrix()?;
            let v = adj.as_matrix()?;
            let gd = DenseVector::new(
                (0..x.nrows())
                    .map(|i| v.row(i).iter().zip(x.row(i)).map(|(a, b)| a * b).sum())
                    .collect(),
            );
            let mut gx = v.clone();
            for i in 0..x.nrows() {
                let di = d[i];
                gx.row_mut(i).iter_mut().for_each(|g| *g *= di);
            }
            vec![some(gd.into()), some(gx.into())]
        }
        Op::AddBias => {
            let v = adj.as_matrix()?;
            let mut gb = vec![0.0; v.ncols()];
            for i in 0..v.nrows() {
                gb.iter_mut().zip(v.row(i)).for_each(|(a, b)| *a += b);
            }
            vec![some(adj.clone()), some(DenseVector::new(gb).into())]
        }
        Op::Dropout { .. } => {
            let Saved::Mask(mask) = saved else {
                return Err(Error::Domain("dropout node lost its mask".into()));
            };
            let mut g = adj.clone();
            g.flat_mut().iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
            vec![some(g)]
        }
        Op::LogSoftmaxCrossEntropy { labels, rows } => {
            let Saved::Softmax(probs) = saved else {
                return Err(Error::Domain("cross entropy node lost its probabilities".into()));
            };
            let g = adj.as_scalar()? / rows.len() as f64;
            let mut out = DenseMatrix::zeros(probs.nrows(), probs.ncols());
            for &r in rows.iter() {
                let prow = probs.row(r).to_vec();
                let orow = out.row_mut(r);
                for (o, p) in orow.iter_mut().zip(&prow) {
                    *o += g * p;
                }
                orow[labels[r]] -= g;
            }
            vec![some(out.into())]
        }
    })
}

fn row_broadcast(pattern: &SparsityPattern, v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(pattern.nnz());
    for (i, &vi) in v.iter().enumerate().take(pattern.nrows()) {
        out.extend(std::iter::repeat_n(vi, pattern.row(i).len()));
    }
    out
}
