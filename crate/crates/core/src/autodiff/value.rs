use crate::csr::{same_pattern, CsrMatrix};
use crate::dense::{DenseMatrix, DenseVector};
use crate::error::{dim_mismatch, Error, Result};

/// A primal value or adjoint held by the tape.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Scalar(f64),
    Vector(DenseVector),
    Matrix(DenseMatrix),
    Sparse(CsrMatrix),
}

impl Value {
    pub fn kind(&self) -> &'static str {
        match self {
            Value::Scalar(_) => "scalar",
            Value::Vector(_) => "vector",
            Value::Matrix(_) => "dense matrix",
            Value::Sparse(_) => "sparse matrix",
        }
    }

    pub fn as_scalar(&self) -> Result<f64> {
        match self {
            Value::Scalar(s) => Ok(*s),
            other => Err(wrong("scalar", "scalar", other)),
        }
    }

    pub fn as_vector(&self) -> Result<&DenseVector> {
        match self {
            Value::Vector(v) => Ok(v),
            other => Err(wrong("vector", "vector", other)),
        }
    }

    pub fn as_matrix(&self) -> Result<&DenseMatrix> {
        match self {
            Value::Matrix(m) => Ok(m),
            other => Err(wrong("matrix", "dense matrix", other)),
        }
    }

    pub fn as_sparse(&self) -> Result<&CsrMatrix> {
        match self {
            Value::Sparse(m) => Ok(m),
            other => Err(wrong("sparse", "sparse matrix", other)),
        }
    }

    /// Flat view of the stored numbers (values only for sparse).
    pub fn flat(&self) -> &[f64] {
        match self {
            Value::Scalar(s) => std::slice::from_ref(s),
            Value::Vector(v) => v.as_slice(),
            Value::Matrix(m) => m.as_slice(),
            Value::Sparse(m) => m.values(),
        }
    }

    pub(crate) fn flat_mut(&mut self) -> &mut [f64] {
        match self {
            Value::Scalar(s) => std::slice::from_mut(s),
            Value::Vector(v) => v.as_mut_slice(),
            Value::Matrix(m) => m.as_mut_slice(),
            Value::Sparse(m) => m.values_mut(),
        }
    }

    /// Same shape (and pattern), every number replaced by `f(x)`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Value {
        let mut out = self.clone();
        out.flat_mut().iter_mut().for_each(|x| *x = f(*x));
        out
    }

    /// Element-wise combination of two values of the same kind and shape.
    pub fn zip_map(&self, other: &Value, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Value> {
        self.check_same_shape(other, op)?;
        let mut out = self.clone();
        out.flat_mut()
            .iter_mut()
            .zip(other.flat())
            .for_each(|(a, &b)| *a = f(*a, b));
        Ok(out)
    }

    pub fn check_same_shape(&self, other: &Value, op: &'static str) -> Result<()> {
        let ok = match (self, other) {
            (Value::Scalar(_), Value::Scalar(_)) => true,
            (Value::Vector(a), Value::Vector(b)) => a.len() == b.len(),
            (Value::Matrix(a), Value::Matrix(b)) => a.shape() == b.shape(),
            (Value::Sparse(a), Value::Sparse(b)) => same_pattern(a.pattern(), b.pattern()),
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(dim_mismatch(op, self.describe(), other.describe()))
        }
    }

    fn describe(&self) -> String {
        match self {
            Value::Scalar(_) => "scalar".into(),
            Value::Vector(v) => format!("vector[{}]", v.len()),
            Value::Matrix(m) => format!("matrix{:?}", m.shape()),
            Value::Sparse(m) => format!("sparse{:?} nnz={}", m.shape(), m.nnz()),
        }
    }

    /// Zero value with the same shape, kind and pattern.
    pub fn zeros_like(&self) -> Value {
        self.map(|_| 0.0)
    }

    pub(crate) fn accumulate(&mut self, other: &Value) -> Result<()> {
        self.check_same_shape(other, "gradient accumulation")?;
        self.flat_mut()
            .iter_mut()
            .zip(other.flat())
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.flat().iter().all(|v| v.is_finite())
    }
}

fn wrong(op: &'static str, expected: &'static str, got: &Value) -> Error {
    Error::WrongKind {
        op,
        expected,
        got: got.kind(),
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Scalar(v)
    }
}

impl From<DenseVector> for Value {
    fn from(v: DenseVector) -> Self {
        Value::Vector(v)
    }
}

impl From<DenseMatrix> for Value {
    fn from(v: DenseMatrix) -> Self {
        Value::Matrix(v)
    }
}

impl From<CsrMatrix> for Value {
    fn from(v: CsrMatrix) -> Self {
        Value::Sparse(v)
    }
}
