//! Sparse triangular solves and the LU-based direct solve, with adjoints.
//!
//! Both solves share one backward rule. For `x = A⁻¹ b` and output adjoint
//! `v`, let `w = A⁻ᵀ v`; then `grad_b = w` and `grad_A = -w xᵀ ⊙ mask(A)`.
//! The transposed solves reuse the forward factors instead of forming `Aᵀ`.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::csr::CsrMatrix;
use crate::dense::DenseVector;
use crate::error::{dim_mismatch, Error, Result};

/// Which triangle of a square matrix is stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Triangle {
    Lower,
    Upper,
}

impl Triangle {
    pub fn name(self) -> &'static str {
        match self {
            Triangle::Lower => "lower",
            Triangle::Upper => "upper",
        }
    }
}

/// Rejects entries outside the triangle and missing or zero diagonals.
/// Returns the storage offset of each diagonal entry (`usize::MAX` when
/// absent under `unit_diag`).
fn check_triangular(t: &CsrMatrix, tri: Triangle, unit_diag: bool) -> Result<Vec<usize>> {
    if t.nrows() != t.ncols() {
        return Err(dim_mismatch(
            "sptrsv",
            "square matrix",
            format!("{:?}", t.shape()),
        ));
    }
    let mut diag = vec![usize::MAX; t.nrows()];
    for i in 0..t.nrows() {
        let range = t.pattern().row_range(i);
        for k in range {
            let j = t.colind()[k];
            let outside = match tri {
                Triangle::Lower => j > i,
                Triangle::Upper => j < i,
            };
            if outside {
                return Err(Error::NotTriangular {
                    expected: tri.name(),
                    row: i,
                    col: j,
                });
            }
            if j == i {
                diag[i] = k;
            }
        }
        if !unit_diag && (diag[i] == usize::MAX || t.values()[diag[i]] == 0.0) {
            return Err(Error::SingularTriangular { row: i });
        }
    }
    Ok(diag)
}

fn substitute(t: &CsrMatrix, b: &[f64], tri: Triangle, unit_diag: bool, diag: &[usize]) -> Vec<f64> {
    let n = t.nrows();
    let mut x = vec![0.0; n];
    let solve_row = |i: usize, x: &mut Vec<f64>| {
        let (cols, vals) = t.row(i);
        let mut s = b[i];
        for (&j, &v) in cols.iter().zip(vals) {
            if j != i {
                s -= v * x[j];
            }
        }
        x[i] = if unit_diag { s } else { s / t.values()[diag[i]] };
    };
    match tri {
        Triangle::Lower => (0..n).for_each(|i| solve_row(i, &mut x)),
        Triangle::Upper => (0..n).rev().for_each(|i| solve_row(i, &mut x)),
    }
    x
}

/// Solves `Tᵀ y = v` using the rows of `T` as columns of `Tᵀ`.
fn substitute_transposed(
    t: &CsrMatrix,
    v: &[f64],
    tri: Triangle,
    unit_diag: bool,
    diag: &[usize],
) -> Vec<f64> {
    let n = t.nrows();
    let mut w = v.to_vec();
    let mut y = vec![0.0; n];
    let eliminate = |i: usize, w: &mut Vec<f64>, y: &mut Vec<f64>| {
        let yi = if unit_diag { w[i] } else { w[i] / t.values()[diag[i]] };
        y[i] = yi;
        let (cols, vals) = t.row(i);
        for (&j, &val) in cols.iter().zip(vals) {
            if j != i {
                w[j] -= val * yi;
            }
        }
    };
    match tri {
        // Lᵀ is upper: resolve from the last unknown upwards.
        Triangle::Lower => (0..n).rev().for_each(|i| eliminate(i, &mut w, &mut y)),
        Triangle::Upper => (0..n).for_each(|i| eliminate(i, &mut w, &mut y)),
    }
    y
}

/// Solves `T x = b` for triangular `T` by forward (lower) or backward (upper)
/// substitution. With `unit_diag`, stored diagonal entries are ignored and
/// treated as one.
pub fn sptrsv(t: &CsrMatrix, b: &DenseVector, tri: Triangle, unit_diag: bool) -> Result<DenseVector> {
    let diag = check_triangular(t, tri, unit_diag)?;
    if b.len() != t.nrows() {
        return Err(dim_mismatch("sptrsv", t.nrows(), b.len()));
    }
    Ok(DenseVector::new(substitute(t, b.as_slice(), tri, unit_diag, &diag)))
}

/// Adjoints of `x = T⁻¹ b`: `grad_b = T⁻ᵀ v`, `grad_T = -grad_b xᵀ ⊙ mask(T)`.
/// Under `unit_diag` the stored diagonal does not influence `x`, so its
/// adjoint entries are zero.
pub fn sptrsv_vjp(
    v: &DenseVector,
    t: &CsrMatrix,
    x: &DenseVector,
    tri: Triangle,
    unit_diag: bool,
) -> Result<(CsrMatrix, DenseVector)> {
    let diag = check_triangular(t, tri, unit_diag)?;
    if v.len() != t.nrows() || x.len() != t.nrows() {
        return Err(dim_mismatch(
            "sptrsv_vjp",
            t.nrows(),
            format!("adjoint {} / x {}", v.len(), x.len()),
        ));
    }
    let gb = substitute_transposed(t, v.as_slice(), tri, unit_diag, &diag);
    let gt = masked_neg_outer(t, &gb, x.as_slice(), unit_diag);
    Ok((gt, DenseVector::new(gb)))
}

/// `-w xᵀ ⊙ mask(A)`, optionally zeroing diagonal positions.
fn masked_neg_outer(a: &CsrMatrix, w: &[f64], x: &[f64], skip_diag: bool) -> CsrMatrix {
    let mut values = Vec::with_capacity(a.nnz());
    for i in 0..a.nrows() {
        let (cols, _) = a.row(i);
        for &j in cols {
            values.push(if skip_diag && i == j { 0.0 } else { -w[i] * x[j] });
        }
    }
    CsrMatrix::from_pattern_unchecked(a.pattern().clone(), values)
}

/// Factors of `P A Q = L U` with unit lower `L`.
///
/// `row_perm[i]` is the row of `A` that became row `i` of `P A`.
/// `col_perm` is always the identity here (no fill-reducing ordering).
#[derive(Debug, Clone, PartialEq)]
pub struct LuFactorization {
    l: CsrMatrix,
    u: CsrMatrix,
    row_perm: Vec<usize>,
    col_perm: Vec<usize>,
}

impl LuFactorization {
    pub fn l(&self) -> &CsrMatrix {
        &self.l
    }

    pub fn u(&self) -> &CsrMatrix {
        &self.u
    }

    pub fn row_perm(&self) -> &[usize] {
        &self.row_perm
    }

    pub fn col_perm(&self) -> &[usize] {
        &self.col_perm
    }

    pub fn n(&self) -> usize {
        self.row_perm.len()
    }

    /// `x = Q U⁻¹ L⁻¹ P b`.
    pub fn solve(&self, b: &DenseVector) -> Result<DenseVector> {
        let n = self.n();
        if b.len() != n {
            return Err(dim_mismatch("LuFactorization::solve", n, b.len()));
        }
        let pb = DenseVector::new(self.row_perm.iter().map(|&r| b[r]).collect());
        let y = sptrsv(&self.l, &pb, Triangle::Lower, true)?;
        let xbar = sptrsv(&self.u, &y, Triangle::Upper, false)?;
        let mut x = vec![0.0; n];
        for (i, &q) in self.col_perm.iter().enumerate() {
            x[q] = xbar[i];
        }
        Ok(DenseVector::new(x))
    }

    /// `w = A⁻ᵀ v` from `Aᵀ = Q Uᵀ Lᵀ P`: solve `Uᵀ y = Qᵀ v`, then
    /// `Lᵀ w̄ = y`, then `w = Pᵀ w̄`.
    pub fn solve_transpose(&self, v: &DenseVector) -> Result<DenseVector> {
        let n = self.n();
        if v.len() != n {
            return Err(dim_mismatch("LuFactorization::solve_transpose", n, v.len()));
        }
        let qv: Vec<f64> = self.col_perm.iter().map(|&q| v[q]).collect();
        let u_diag = check_triangular(&self.u, Triangle::Upper, false)?;
        let y = substitute_transposed(&self.u, &qv, Triangle::Upper, false, &u_diag);
        let l_diag = check_triangular(&self.l, Triangle::Lower, true)?;
        let wbar = substitute_transposed(&self.l, &y, Triangle::Lower, true, &l_diag);
        let mut w = vec![0.0; n];
        for (i, &r) in self.row_perm.iter().enumerate() {
            w[r] = wbar[i];
        }
        Ok(DenseVector::new(w))
    }
}

/// Sparse LU with threshold partial pivoting, computed column by column in
/// left-looking order. A candidate on the original diagonal is kept when its
/// magnitude is at least `pivot_threshold` times the largest candidate;
/// otherwise the largest candidate (lowest row index on ties) is taken.
/// `pivot_threshold = 1.0` is classic partial pivoting.
///
/// Fill is stored structurally wherever it arises, including entries that
/// happen to be numerically zero.
pub fn splu(a: &CsrMatrix, pivot_threshold: f64) -> Result<LuFactorization> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(dim_mismatch("splu", "square matrix", format!("{:?}", a.shape())));
    }
    let tol = 1e-14 * a.max_abs();
    let cols = a.transpose();

    const NONE: usize = usize::MAX;
    let mut pinv = vec![NONE; n];
    let mut prow = vec![NONE; n];
    let mut lcols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut u_triples: Vec<(usize, usize, f64)> = Vec::new();

    let mut x = vec![0.0; n];
    let mut marked = vec![false; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut queued = vec![NONE; n];
    let mut heap: BinaryHeap<Reverse<usize>> = BinaryHeap::new();

    for j in 0..n {
        touched.clear();
        let (rows, vals) = cols.row(j);
        for (&r, &v) in rows.iter().zip(vals) {
            marked[r] = true;
            x[r] = v;
            touched.push(r);
            if pinv[r] != NONE && queued[pinv[r]] != j {
                queued[pinv[r]] = j;
                heap.push(Reverse(pinv[r]));
            }
        }
        // Steps come off the heap in increasing order; column k of L only
        // reaches rows pivoted after step k, so this is a topological order.
        while let Some(Reverse(k)) = heap.pop() {
            let xk = x[prow[k]];
            u_triples.push((k, j, xk));
            for &(r, lrk) in &lcols[k] {
                if !marked[r] {
                    marked[r] = true;
                    x[r] = 0.0;
                    touched.push(r);
                    if pinv[r] != NONE && queued[pinv[r]] != j {
                        queued[pinv[r]] = j;
                        heap.push(Reverse(pinv[r]));
                    }
                }
                x[r] -= lrk * xk;
            }
        }

        let mut best = NONE;
        let mut best_abs = -1.0;
        for &r in &touched {
            if pinv[r] != NONE {
                continue;
            }
            let m = x[r].abs();
            if m > best_abs || (m == best_abs && r < best) {
                best = r;
                best_abs = m;
            }
        }
        if best == NONE || best_abs == 0.0 || best_abs < tol {
            return Err(Error::Singular { col: j });
        }
        if best != j && marked[j] && pinv[j] == NONE && x[j].abs() >= pivot_threshold * best_abs {
            best = j;
        }
        let pivot = x[best];
        pinv[best] = j;
        prow[j] = best;
        u_triples.push((j, j, pivot));

        let mut lcol = Vec::new();
        for &r in &touched {
            if pinv[r] == NONE {
                lcol.push((r, x[r] / pivot));
            }
        }
        lcol.sort_unstable_by_key(|e| e.0);
        lcols.push(lcol);

        for &r in &touched {
            marked[r] = false;
            x[r] = 0.0;
        }
    }

    let mut l_triples = Vec::with_capacity(n + lcols.iter().map(Vec::len).sum::<usize>());
    for (k, col) in lcols.iter().enumerate() {
        l_triples.push((k, k, 1.0));
        for &(r, v) in col {
            l_triples.push((pinv[r], k, v));
        }
    }
    Ok(LuFactorization {
        l: CsrMatrix::from_coo(n, n, &l_triples)?,
        u: CsrMatrix::from_coo(n, n, &u_triples)?,
        row_perm: prow,
        col_perm: (0..n).collect(),
    })
}

/// `x = A⁻¹ b` via LU with partial pivoting. Returns the factors so the
/// backward pass can reuse them.
pub fn spsolve_factored(a: &CsrMatrix, b: &DenseVector) -> Result<(DenseVector, LuFactorization)> {
    if b.len() != a.nrows() {
        return Err(dim_mismatch("spsolve", a.nrows(), b.len()));
    }
    let lu = splu(a, 1.0)?;
    let x = lu.solve(b)?;
    Ok((x, lu))
}

/// `x = A⁻¹ b`.
pub fn spsolve(a: &CsrMatrix, b: &DenseVector) -> Result<DenseVector> {
    spsolve_factored(a, b).map(|(x, _)| x)
}

/// Adjoints of `x = A⁻¹ b` given the forward output and factors:
/// `grad_b = A⁻ᵀ v`, `grad_A = -grad_b xᵀ ⊙ mask(A)`.
pub fn spsolve_vjp(
    v: &DenseVector,
    a: &CsrMatrix,
    x: &DenseVector,
    factors: &LuFactorization,
) -> Result<(CsrMatrix, DenseVector)> {
    if v.len() != a.nrows() || x.len() != a.ncols() || factors.n() != a.nrows() {
        return Err(dim_mismatch(
            "spsolve_vjp",
            a.nrows(),
            format!("adjoint {} / x {} / factors {}", v.len(), x.len(), factors.n()),
        ));
    }
    let w = factors.solve_transpose(v)?;
    let ga = masked_neg_outer(a, w.as_slice(), x.as_slice(), false);
    Ok((ga, w))
}
