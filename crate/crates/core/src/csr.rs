//! Compressed sparse row storage and structural operations.
//!
//! A [`CsrMatrix`] is a shared [`SparsityPattern`] plus one value per stored
//! entry. Column indices are sorted and unique within a row. Stored entries may
//! hold the value `0.0`: the pattern is structural, so an entry that an
//! optimizer drives through zero keeps receiving gradient. Nothing in this
//! crate prunes stored zeros unless [`CsrMatrix::prune_zeros`] is called.
//!
//! Patterns are reference counted. Gradients of a sparse operand are built on
//! the operand's own `Arc<SparsityPattern>`, which makes the mask contract
//! `pattern(grad X) == pattern(X)` hold by construction.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dense::{DenseMatrix, DenseVector};
use crate::error::{dim_mismatch, Error, Result};

/// The structure of a CSR matrix without its values.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SparsityPattern {
    nrows: usize,
    ncols: usize,
    rowptr: Vec<usize>,
    colind: Vec<usize>,
}

impl SparsityPattern {
    pub fn new(nrows: usize, ncols: usize, rowptr: Vec<usize>, colind: Vec<usize>) -> Result<Self> {
        let p = Self {
            nrows,
            ncols,
            rowptr,
            colind,
        };
        p.validate()?;
        Ok(p)
    }

    /// Builds a pattern without checking the invariants. Only for kernels that
    /// produce canonical output by construction.
    pub(crate) fn from_parts_unchecked(
        nrows: usize,
        ncols: usize,
        rowptr: Vec<usize>,
        colind: Vec<usize>,
    ) -> Self {
        debug_assert!(
            Self {
                nrows,
                ncols,
                rowptr: rowptr.clone(),
                colind: colind.clone()
            }
            .validate()
            .is_ok()
        );
        Self {
            nrows,
            ncols,
            rowptr,
            colind,
        }
    }

    pub fn empty(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            rowptr: vec![0; nrows + 1],
            colind: Vec::new(),
        }
    }

    /// Pattern of the `k`-th diagonal of an `n x n` matrix.
    pub fn diagonal(n: usize, k: isize) -> Self {
        let mut rowptr = Vec::with_capacity(n + 1);
        let mut colind = Vec::new();
        rowptr.push(0);
        for i in 0..n {
            let j = i as isize + k;
            if j >= 0 && (j as usize) < n {
                colind.push(j as usize);
            }
            rowptr.push(colind.len());
        }
        Self {
            nrows: n,
            ncols: n,
            rowptr,
            colind,
        }
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<()> {
        if self.rowptr.len() != self.nrows + 1 {
            return Err(Error::InvalidStructure(format!(
                "rowptr has length {} for {} rows",
                self.rowptr.len(),
                self.nrows
            )));
        }
        if self.rowptr[0] != 0 {
            return Err(Error::InvalidStructure("rowptr[0] != 0".into()));
        }
        if self.rowptr[self.nrows] != self.colind.len() {
            return Err(Error::InvalidStructure(format!(
                "rowptr[nrows] = {} but nnz = {}",
                self.rowptr[self.nrows],
                self.colind.len()
            )));
        }
        for i in 0..self.nrows {
            let (lo, hi) = (self.rowptr[i], self.rowptr[i + 1]);
            if lo > hi {
                return Err(Error::InvalidStructure(format!("rowptr decreases at row {i}")));
            }
            let cols = &self.colind[lo..hi];
            for (t, &c) in cols.iter().enumerate() {
                if c >= self.ncols {
                    return Err(Error::IndexOutOfRange {
                        row: i,
                        col: c,
                        nrows: self.nrows,
                        ncols: self.ncols,
                    });
                }
                if t > 0 && cols[t - 1] >= c {
                    return Err(Error::InvalidStructure(format!(
                        "column indices not strictly increasing in row {i}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn nnz(&self) -> usize {
        self.colind.len()
    }

    pub fn rowptr(&self) -> &[usize] {
        &self.rowptr
    }

    pub fn colind(&self) -> &[usize] {
        &self.colind
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.colind[self.rowptr[i]..self.rowptr[i + 1]]
    }

    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.rowptr[i]..self.rowptr[i + 1]
    }

    /// Storage offset of entry `(i, j)`, if it is part of the pattern.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let lo = self.rowptr[i];
        self.row(i).binary_search(&j).ok().map(|t| lo + t)
    }

    /// Transposed pattern together with, for every entry of the result, the
    /// offset of the corresponding entry in `self`.
    pub fn transpose_with_map(&self) -> (SparsityPattern, Vec<usize>) {
        let nnz = self.nnz();
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.colind {
            counts[c + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let rowptr = counts.clone();
        let mut next = counts;
        let mut colind = vec![0usize; nnz];
        let mut map = vec![0usize; nnz];
        for i in 0..self.nrows {
            for k in self.row_range(i) {
                let c = self.colind[k];
                let dst = next[c];
                next[c] += 1;
                colind[dst] = i;
                map[dst] = k;
            }
        }
        (
            SparsityPattern::from_parts_unchecked(self.ncols, self.nrows, rowptr, colind),
            map,
        )
    }

    /// Row-wise union of two patterns of equal shape.
    pub fn union(&self, other: &SparsityPattern) -> Result<SparsityPattern> {
        if self.shape() != other.shape() {
            return Err(dim_mismatch(
                "pattern union",
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        let mut rowptr = Vec::with_capacity(self.nrows + 1);
        let mut colind = Vec::with_capacity(self.nnz().max(other.nnz()));
        rowptr.push(0);
        for i in 0..self.nrows {
            let (a, b) = (self.row(i), other.row(i));
            let (mut p, mut q) = (0, 0);
            while p < a.len() || q < b.len() {
                let next = match (a.get(p), b.get(q)) {
                    (Some(&x), Some(&y)) if x == y => {
                        p += 1;
                        q += 1;
                        x
                    }
                    (Some(&x), Some(&y)) if x < y => {
                        p += 1;
                        x
                    }
                    (Some(_), Some(&y)) => {
                        q += 1;
                        y
                    }
                    (Some(&x), None) => {
                        p += 1;
                        x
                    }
                    (None, Some(&y)) => {
                        q += 1;
                        y
                    }
                    (None, None) => unreachable!(),
                };
                colind.push(next);
            }
            rowptr.push(colind.len());
        }
        Ok(SparsityPattern::from_parts_unchecked(self.nrows, self.ncols, rowptr, colind))
    }

    /// True when every entry of `self` is also an entry of `other`.
    pub fn is_subset_of(&self, other: &SparsityPattern) -> bool {
        if self.shape() != other.shape() {
            return false;
        }
        (0..self.nrows).all(|i| {
            let big = other.row(i);
            let mut q = 0;
            self.row(i).iter().all(|c| {
                while q < big.len() && big[q] < *c {
                    q += 1;
                }
                q < big.len() && big[q] == *c
            })
        })
    }
}

/// Pointer-or-structural equality of two shared patterns.
pub fn same_pattern(a: &Arc<SparsityPattern>, b: &Arc<SparsityPattern>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// A CSR matrix with 64-bit float values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsrMatrix {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
}

impl PartialEq for CsrMatrix {
    fn eq(&self, other: &Self) -> bool {
        same_pattern(&self.pattern, &other.pattern) && self.values == other.values
    }
}

impl CsrMatrix {
    pub fn new(
        nrows: usize,
        ncols: usize,
        rowptr: Vec<usize>,
        colind: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let pattern = SparsityPattern::new(nrows, ncols, rowptr, colind)?;
        Self::from_pattern(Arc::new(pattern), values)
    }

    pub fn from_pattern(pattern: Arc<SparsityPattern>, values: Vec<f64>) -> Result<Self> {
        if pattern.nnz() != values.len() {
            return Err(dim_mismatch("CsrMatrix::from_pattern", pattern.nnz(), values.len()));
        }
        Ok(Self { pattern, values })
    }

    pub(crate) fn from_pattern_unchecked(pattern: Arc<SparsityPattern>, values: Vec<f64>) -> Self {
        debug_assert_eq!(pattern.nnz(), values.len());
        Self { pattern, values }
    }

    /// All stored values set to zero on the given pattern.
    pub fn zeros_on(pattern: Arc<SparsityPattern>) -> Self {
        let nnz = pattern.nnz();
        Self {
            pattern,
            values: vec![0.0; nnz],
        }
    }

    /// Stored values all equal to `value` on the given pattern.
    pub fn filled_on(pattern: Arc<SparsityPattern>, value: f64) -> Self {
        let nnz = pattern.nnz();
        Self {
            pattern,
            values: vec![value; nnz],
        }
    }

    /// Builds a canonical matrix from `(row, col, value)` triples.
    ///
    /// Duplicate positions are summed left to right in input order, starting
    /// from the first occurrence. Summed zeros stay stored.
    pub fn from_coo(nrows: usize, ncols: usize, triples: &[(usize, usize, f64)]) -> Result<Self> {
        for &(r, c, _) in triples {
            if r >= nrows || c >= ncols {
                return Err(Error::IndexOutOfRange {
                    row: r,
                    col: c,
                    nrows,
                    ncols,
                });
            }
        }
        let mut order: Vec<usize> = (0..triples.len()).collect();
        // stable, so duplicates keep their input order
        order.sort_by_key(|&t| (triples[t].0, triples[t].1));

        let mut rowptr = vec![0usize; nrows + 1];
        let mut colind = Vec::with_capacity(triples.len());
        let mut values = Vec::with_capacity(triples.len());
        let mut last: Option<(usize, usize)> = None;
        for t in order {
            let (r, c, v) = triples[t];
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                colind.push(c);
                values.push(v);
                rowptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            rowptr[i + 1] += rowptr[i];
        }
        let pattern = SparsityPattern::from_parts_unchecked(nrows, ncols, rowptr, colind);
        Ok(Self {
            pattern: Arc::new(pattern),
            values,
        })
    }

    /// Sparse matrix holding every nonzero of a dense matrix (exact zeros are
    /// not stored).
    pub fn from_dense(dense: &DenseMatrix) -> Self {
        let mut triples = Vec::new();
        for i in 0..dense.nrows() {
            for (j, &v) in dense.row(i).iter().enumerate() {
                if v != 0.0 {
                    triples.push((i, j, v));
                }
            }
        }
        Self::from_coo(dense.nrows(), dense.ncols(), &triples).expect("indices in range")
    }

    pub fn identity(n: usize) -> Self {
        Self::eye(n, 0)
    }

    /// Ones on the `k`-th diagonal. Offsets with `|k| >= n` give an empty
    /// pattern.
    pub fn eye(n: usize, k: isize) -> Self {
        let pattern = SparsityPattern::diagonal(n, k);
        Self::filled_on(Arc::new(pattern), 1.0)
    }

    /// Diagonal matrix with the entries of `v`, every diagonal entry stored.
    pub fn diag(v: &DenseVector) -> Self {
        let pattern = SparsityPattern::diagonal(v.len(), 0);
        Self {
            pattern: Arc::new(pattern),
            values: v.as_slice().to_vec(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.pattern.nrows
    }

    pub fn ncols(&self) -> usize {
        self.pattern.ncols
    }

    pub fn shape(&self) -> (usize, usize) {
        self.pattern.shape()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn rowptr(&self) -> &[usize] {
        &self.pattern.rowptr
    }

    pub fn colind(&self) -> &[usize] {
        &self.pattern.colind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.pattern.row_range(i);
        (&self.pattern.colind[r.clone()], &self.values[r])
    }

    /// Same pattern, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::from_pattern(self.pattern.clone(), values)
    }

    /// Entry `(i, j)`; positions outside the pattern read as zero.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.find(i, j).map_or(0.0, |k| self.values[k])
    }

    /// Re-checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        self.pattern.validate()?;
        if self.values.len() != self.pattern.nnz() {
            return Err(Error::InvalidStructure("values length != nnz".into()));
        }
        Ok(())
    }

    pub fn transpose(&self) -> CsrMatrix {
        let (pattern, map) = self.pattern.transpose_with_map();
        let values = map.iter().map(|&k| self.values[k]).collect();
        CsrMatrix {
            pattern: Arc::new(pattern),
            values,
        }
    }

    pub fn scaled(&self, alpha: f64) -> CsrMatrix {
        CsrMatrix {
            pattern: self.pattern.clone(),
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }

    /// Structural diagonal; diagonal positions outside the pattern read as 0.
    pub fn diagonal(&self) -> DenseVector {
        let n = self.nrows().min(self.ncols());
        DenseVector::new((0..n).map(|i| self.get(i, i)).collect())
    }

    /// Sum of the stored values of each row.
    pub fn row_sum(&self) -> DenseVector {
        DenseVector::new(
            (0..self.nrows())
                .map(|i| self.row(i).1.iter().sum())
                .collect(),
        )
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.nrows(), self.ncols());
        for i in 0..self.nrows() {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                d[(i, c)] += v;
            }
        }
        d
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Entries `(i, j)` with `j - i <= k` (lower part including the `k`-th
    /// diagonal).
    pub fn tril(&self, k: isize) -> CsrMatrix {
        self.filter(|i, j| (j as isize) - (i as isize) <= k)
    }

    /// Entries `(i, j)` with `j - i >= k`.
    pub fn triu(&self, k: isize) -> CsrMatrix {
        self.filter(|i, j| (j as isize) - (i as isize) >= k)
    }

    /// Drops stored entries whose value is exactly zero. This is the only
    /// operation that removes structure based on values.
    pub fn prune_zeros(&self) -> CsrMatrix {
        let vals = &self.values;
        let pat = &self.pattern;
        let mut rowptr = Vec::with_capacity(pat.nrows + 1);
        let mut colind = Vec::new();
        let mut values = Vec::new();
        rowptr.push(0);
        for i in 0..pat.nrows {
            for k in pat.row_range(i) {
                if vals[k] != 0.0 {
                    colind.push(pat.colind[k]);
                    values.push(vals[k]);
                }
            }
            rowptr.push(colind.len());
        }
        CsrMatrix {
            pattern: Arc::new(SparsityPattern::from_parts_unchecked(
                pat.nrows, pat.ncols, rowptr, colind,
            )),
            values,
        }
    }

    fn filter(&self, keep: impl Fn(usize, usize) -> bool) -> CsrMatrix {
        let pat = &self.pattern;
        let mut rowptr = Vec::with_capacity(pat.nrows + 1);
        let mut colind = Vec::new();
        let mut values = Vec::new();
        rowptr.push(0);
        for i in 0..pat.nrows {
            for k in pat.row_range(i) {
                let j = pat.colind[k];
                if keep(i, j) {
                    colind.push(j);
                    values.push(self.values[k]);
                }
            }
            rowptr.push(colind.len());
        }
        CsrMatrix {
            pattern: Arc::new(SparsityPattern::from_parts_unchecked(
                pat.nrows, pat.ncols, rowptr, colind,
            )),
            values,
        }
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &CsrMatrix) -> CsrMatrix {
        let (m, n) = self.shape();
        let (p, q) = other.shape();
        let mut rowptr = Vec::with_capacity(m * p + 1);
        let mut colind = Vec::with_capacity(self.nnz() * other.nnz());
        let mut values = Vec::with_capacity(self.nnz() * other.nnz());
        rowptr.push(0);
        for i in 0..m {
            let (acols, avals) = self.row(i);
            for r in 0..p {
                let (bcols, bvals) = other.row(r);
                for (&ac, &av) in acols.iter().zip(avals) {
                    for (&bc, &bv) in bcols.iter().zip(bvals) {
                        colind.push(ac * q + bc);
                        values.push(av * bv);
                    }
                }
                rowptr.push(colind.len());
            }
        }
        CsrMatrix {
            pattern: Arc::new(SparsityPattern::from_parts_unchecked(
                m * p,
                n * q,
                rowptr,
                colind,
            )),
            values,
        }
    }
}

/// Sources that can be restricted to a sparsity pattern.
pub trait Maskable {
    fn mask_shape(&self) -> (usize, usize);
    /// Values at the positions of `pattern`, in storage order.
    fn gather(&self, pattern: &SparsityPattern) -> Vec<f64>;
}

impl Maskable for CsrMatrix {
    fn mask_shape(&self) -> (usize, usize) {
        self.shape()
    }

    fn gather(&self, pattern: &SparsityPattern) -> Vec<f64> {
        let mut out = Vec::with_capacity(pattern.nnz());
        for i in 0..pattern.nrows() {
            let (cols, vals) = self.row(i);
            let mut q = 0;
            for &c in pattern.row(i) {
                while q < cols.len() && cols[q] < c {
                    q += 1;
                }
                out.push(if q < cols.len() && cols[q] == c { vals[q] } else { 0.0 });
            }
        }
        out
    }
}

impl Maskable for DenseMatrix {
    fn mask_shape(&self) -> (usize, usize) {
        self.shape()
    }

    fn gather(&self, pattern: &SparsityPattern) -> Vec<f64> {
        let mut out = Vec::with_capacity(pattern.nnz());
        for i in 0..pattern.nrows() {
            let row = self.row(i);
            out.extend(pattern.row(i).iter().map(|&c| row[c]));
        }
        out
    }
}

/// `a ⊙ mask(pattern)`: the result has exactly `pattern`, holding `a`'s value
/// at each position (zero where `a` has none).
pub fn mask_to<M: Maskable>(a: &M, pattern: &Arc<SparsityPattern>) -> Result<CsrMatrix> {
    if a.mask_shape() != pattern.shape() {
        return Err(dim_mismatch(
            "mask_to",
            format!("{:?}", pattern.shape()),
            format!("{:?}", a.mask_shape()),
        ));
    }
    let values = a.gather(pattern);
    Ok(CsrMatrix::from_pattern_unchecked(pattern.clone(), values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a3() -> CsrMatrix {
        CsrMatrix::from_coo(
            3,
            3,
            &[
                (0, 0, 2.0),
                (0, 1, -1.0),
                (1, 0, -1.0),
                (1, 1, 2.0),
                (1, 2, -1.0),
                (2, 1, -1.0),
                (2, 2, 2.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn coo_identity_and_duplicates() {
        let i2 = CsrMatrix::from_coo(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]).unwrap();
        assert_eq!(i2, CsrMatrix::identity(2));
        let dup = CsrMatrix::from_coo(2, 2, &[(0, 0, 1.0), (0, 0, 2.0)]).unwrap();
        assert_eq!(dup.nnz(), 1);
        assert_eq!(dup.get(0, 0), 3.0);
    }

    #[test]
    fn coo_poisson_stencil_layout() {
        let a = a3();
        assert_eq!(a.rowptr(), &[0, 2, 5, 7]);
        assert_eq!(a.colind(), &[0, 1, 0, 1, 2, 1, 2]);
        assert_eq!(a.values(), &[2.0, -1.0, -1.0, 2.0, -1.0, -1.0, 2.0]);
    }

    #[test]
    fn coo_rejects_out_of_range() {
        let err = CsrMatrix::from_coo(2, 2, &[(2, 0, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { row: 2, .. }));
    }

    #[test]
    fn coo_unsorted_input_is_canonicalised() {
        let m = CsrMatrix::from_coo(2, 3, &[(1, 2, 1.0), (0, 2, 2.0), (0, 0, 3.0), (1, 0, 4.0)]).unwrap();
        m.validate().unwrap();
        assert_eq!(m.colind(), &[0, 2, 0, 2]);
        assert_eq!(m.values(), &[3.0, 2.0, 4.0, 1.0]);
    }

    #[test]
    fn new_rejects_broken_structure() {
        assert!(CsrMatrix::new(2, 2, vec![0, 1], vec![0], vec![1.0]).is_err());
        assert!(CsrMatrix::new(1, 2, vec![0, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::new(1, 2, vec![0, 2], vec![1, 1], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::new(1, 2, vec![0, 1], vec![2], vec![1.0]).is_err());
        assert!(CsrMatrix::new(1, 2, vec![0, 1], vec![1], vec![]).is_err());
    }

    #[test]
    fn transpose_cases() {
        let i3 = CsrMatrix::identity(3);
        assert_eq!(i3.transpose(), i3);
        let a = a3();
        assert_eq!(a.transpose(), a);
        let single = CsrMatrix::from_coo(2, 3, &[(0, 2, 5.0)]).unwrap();
        let t = single.transpose();
        assert_eq!(t.shape(), (3, 2));
        assert_eq!(t.nnz(), 1);
        assert_eq!(t.get(2, 0), 5.0);
        t.validate().unwrap();
    }

    #[test]
    fn mask_cases() {
        let a = a3();
        assert_eq!(mask_to(&a, a.pattern()).unwrap(), a);

        let ones = DenseMatrix::filled(2, 2, 1.0);
        let eye = CsrMatrix::identity(2);
        let m = mask_to(&ones, eye.pattern()).unwrap();
        assert_eq!(m.values(), &[1.0, 1.0]);

        let diag = Arc::new(SparsityPattern::diagonal(3, 0));
        let d = mask_to(&a, &diag).unwrap();
        assert_eq!(d.values(), &[2.0, 2.0, 2.0]);

        assert!(mask_to(&ones, a.pattern()).is_err());
    }

    #[test]
    fn mask_fills_missing_positions_with_zero() {
        let eye = CsrMatrix::identity(3);
        let a = a3();
        let m = mask_to(&eye, a.pattern()).unwrap();
        assert_eq!(m.values(), &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn eye_diag_rowsum() {
        assert_eq!(CsrMatrix::eye(3, 3).nnz(), 0);
        assert_eq!(CsrMatrix::eye(3, -5).nnz(), 0);
        let a = a3();
        assert_eq!(a.row_sum().as_slice(), &[1.0, 0.0, 1.0]);
        let d = CsrMatrix::diag(&a.diagonal());
        assert_eq!(d.values(), &[2.0, 2.0, 2.0]);
        assert_eq!(d.pattern().as_ref(), &SparsityPattern::diagonal(3, 0));
        let sup = CsrMatrix::eye(3, 1);
        assert_eq!(sup.colind(), &[1, 2]);
    }

    #[test]
    fn diagonal_reads_missing_as_zero() {
        let m = CsrMatrix::from_coo(2, 2, &[(0, 1, 3.0), (1, 1, 4.0)]).unwrap();
        assert_eq!(m.diagonal().as_slice(), &[0.0, 4.0]);
    }

    #[test]
    fn stored_zeros_survive_and_prune_is_explicit() {
        let m = CsrMatrix::from_coo(2, 2, &[(0, 0, 1.0), (0, 0, -1.0), (1, 1, 2.0)]).unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.values(), &[0.0, 2.0]);
        let p = m.prune_zeros();
        assert_eq!(p.nnz(), 1);
        assert_eq!(p.get(1, 1), 2.0);
    }

    #[test]
    fn tril_triu_split() {
        let a = a3();
        assert_eq!(a.tril(0).nnz() + a.triu(1).nnz(), a.nnz());
        assert_eq!(a.tril(-1).values(), &[-1.0, -1.0]);
    }

    #[test]
    fn kron_with_identity() {
        let a = a3();
        let k = CsrMatrix::identity(2).kron(&a);
        assert_eq!(k.shape(), (6, 6));
        assert_eq!(k.nnz(), 14);
        assert_eq!(k.get(4, 4), 2.0);
        assert_eq!(k.get(4, 3), -1.0);
        assert_eq!(k.get(2, 3), 0.0);
        k.validate().unwrap();
    }

    #[test]
    fn pattern_union_and_subset() {
        let a = CsrMatrix::eye(3, 0);
        let b = CsrMatrix::eye(3, 1);
        let u = a.pattern().union(b.pattern()).unwrap();
        assert_eq!(u.colind(), &[0, 1, 1, 2, 2]);
        assert!(a.pattern().is_subset_of(&u));
        assert!(b.pattern().is_subset_of(&u));
        assert!(!u.is_subset_of(a.pattern()));
    }
}
