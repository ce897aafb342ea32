//! Forward kernels and their vector-Jacobian products.
//!
//! | kernel   | forward       | adjoint w.r.t. first operand | adjoint w.r.t. second operand |
//! |----------|---------------|------------------------------|-------------------------------|
//! | SpMV     | `A x`         | `v xᵀ ⊙ mask(A)`             | `Aᵀ v`                        |
//! | SpSpMM   | `A B`         | `(V Bᵀ) ⊙ mask(A)`           | `(Aᵀ V) ⊙ mask(B)`            |
//! | SpDMM    | `A B`, B dense| `(V Bᵀ) ⊙ mask(A)`           | `Aᵀ V`                        |
//! | Sp + Sp  | `αA + βB`     | `α V ⊙ mask(A)`              | `β V ⊙ mask(B)`               |
//!
//! Sparse adjoints are only evaluated at positions of the operand's pattern
//! and are returned on the operand's own shared pattern.
//!
//! Every kernel is row-parallel above a size threshold. Each output entry is
//! reduced in a fixed order (ascending storage order of the inputs), so the
//! result is bit-identical for any thread count.

use std::sync::Arc;

use rayon::prelude::*;

use crate::csr::{CsrMatrix, Maskable, SparsityPattern};
use crate::dense::{DenseMatrix, DenseVector};
use crate::error::{dim_mismatch, Error, Result};

const PAR_MIN_ROWS: usize = 2048;
const ROW_BLOCK: usize = 512;

fn parallel(rows: usize) -> bool {
    rows >= PAR_MIN_ROWS && rayon::current_num_threads() > 1
}

/// Fills one value per stored entry of `pattern`, row by row.
/// `f(i, out)` writes row `i`'s values into `out`.
fn fill_rows<F>(pattern: &SparsityPattern, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let mut out = vec![0.0; pattern.nnz()];
    let n = pattern.nrows();
    let rowptr = pattern.rowptr();
    if !parallel(n) {
        for i in 0..n {
            f(i, &mut out[rowptr[i]..rowptr[i + 1]]);
        }
        return out;
    }
    let mut blocks = Vec::with_capacity(n / ROW_BLOCK + 1);
    let mut rest: &mut [f64] = &mut out;
    let mut start = 0;
    while start < n {
        let end = (start + ROW_BLOCK).min(n);
        let (head, tail) = rest.split_at_mut(rowptr[end] - rowptr[start]);
        blocks.push((start, end, head));
        rest = tail;
        start = end;
    }
    blocks.into_par_iter().for_each(|(lo, hi, chunk)| {
        let base = rowptr[lo];
        for i in lo..hi {
            f(i, &mut chunk[rowptr[i] - base..rowptr[i + 1] - base]);
        }
    });
    out
}

/// Assembles a CSR matrix whose rows are produced independently.
/// `f(scratch, i, cols, vals)` appends row `i` (columns ascending).
fn collect_rows<S, I, F>(nrows: usize, ncols: usize, init: I, f: F) -> CsrMatrix
where
    S: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize, &mut Vec<usize>, &mut Vec<f64>) + Sync + Send,
{
    let mut rowptr = Vec::with_capacity(nrows + 1);
    rowptr.push(0);
    let (colind, values) = if parallel(nrows) {
        let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..nrows)
            .into_par_iter()
            .map_init(&init, |s, i| {
                let mut c = Vec::new();
                let mut v = Vec::new();
                f(s, i, &mut c, &mut v);
                (c, v)
            })
            .collect();
        let nnz = rows.iter().map(|r| r.0.len()).sum();
        let mut colind = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for (c, v) in rows {
            colind.extend_from_slice(&c);
            values.extend_from_slice(&v);
            rowptr.push(colind.len());
        }
        (colind, values)
    } else {
        let mut s = init();
        let mut colind = Vec::new();
        let mut values = Vec::new();
        for i in 0..nrows {
            f(&mut s, i, &mut colind, &mut values);
            rowptr.push(colind.len());
        }
        (colind, values)
    };
    let pattern = SparsityPattern::from_parts_unchecked(nrows, ncols, rowptr, colind);
    CsrMatrix::from_pattern_unchecked(Arc::new(pattern), values)
}

fn map_rows<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if parallel(n) {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

fn row_dot(a: &CsrMatrix, i: usize, x: &[f64]) -> f64 {
    let (cols, vals) = a.row(i);
    let mut s = 0.0;
    for (&c, &v) in cols.iter().zip(vals) {
        s += v * x[c];
    }
    s
}

/// `y = A x`.
pub fn spmv(a: &CsrMatrix, x: &DenseVector) -> Result<DenseVector> {
    if a.ncols() != x.len() {
        return Err(dim_mismatch("spmv", a.ncols(), x.len()));
    }
    let xs = x.as_slice();
    Ok(DenseVector::new(map_rows(a.nrows(), |i| row_dot(a, i, xs))))
}

/// `Aᵀ v`, reduced per output entry in ascending row order of `A`.
///
/// The sequential path scatters row by row. The parallel path transposes `A`
/// first and takes row dot products, which visits the same terms in the same
/// order and therefore produces identical bits.
pub fn spmv_transpose(a: &CsrMatrix, v: &DenseVector) -> Result<DenseVector> {
    if a.nrows() != v.len() {
        return Err(dim_mismatch("spmv_transpose", a.nrows(), v.len()));
    }
    if parallel(a.ncols()) {
        let at = a.transpose();
        return spmv(&at, v);
    }
    let mut out = vec![0.0; a.ncols()];
    let vs = v.as_slice();
    for i in 0..a.nrows() {
        let (cols, vals) = a.row(i);
        let vi = vs[i];
        for (&c, &val) in cols.iter().zip(vals) {
            out[c] += val * vi;
        }
    }
    Ok(DenseVector::new(out))
}

/// Adjoints of `y = A x` for output adjoint `v`:
/// `grad_A = v xᵀ ⊙ mask(A)`, `grad_x = Aᵀ v`.
pub fn spmv_vjp(v: &DenseVector, a: &CsrMatrix, x: &DenseVector) -> Result<(CsrMatrix, DenseVector)> {
    if v.len() != a.nrows() {
        return Err(dim_mismatch("spmv_vjp (adjoint)", a.nrows(), v.len()));
    }
    if x.len() != a.ncols() {
        return Err(dim_mismatch("spmv_vjp (x)", a.ncols(), x.len()));
    }
    let (vs, xs) = (v.as_slice(), x.as_slice());
    let cols = a.colind();
    let rowptr = a.rowptr();
    let grad_a = fill_rows(a.pattern(), |i, out| {
        let base = rowptr[i];
        for (t, o) in out.iter_mut().enumerate() {
            *o = vs[i] * xs[cols[base + t]];
        }
    });
    let grad_x = spmv_transpose(a, v)?;
    Ok((CsrMatrix::from_pattern_unchecked(a.pattern().clone(), grad_a), grad_x))
}

struct Accumulator {
    acc: Vec<f64>,
    mark: Vec<usize>,
    touched: Vec<usize>,
}

impl Accumulator {
    fn new(width: usize) -> Self {
        Self {
            acc: vec![0.0; width],
            mark: vec![usize::MAX; width],
            touched: Vec::new(),
        }
    }
}

/// Structural product pattern of `A B` (no values).
pub fn product_pattern(a: &CsrMatrix, b: &CsrMatrix) -> Result<SparsityPattern> {
    Ok(spspmm(a, b)?.pattern().as_ref().clone())
}

/// `C = A B` for sparse `A`, `B` (row-wise Gustavson with a dense scratch
/// accumulator per worker). Entries that cancel to exactly zero stay stored.
pub fn spspmm(a: &CsrMatrix, b: &CsrMatrix) -> Result<CsrMatrix> {
    if a.ncols() != b.nrows() {
        return Err(dim_mismatch(
            "spspmm",
            format!("{} rows in B", a.ncols()),
            format!("{} rows", b.nrows()),
        ));
    }
    let width = b.ncols();
    Ok(collect_rows(
        a.nrows(),
        width,
        || Accumulator::new(width),
        |s, i, cols, vals| {
            s.touched.clear();
            let (acols, avals) = a.row(i);
            for (&k, &aik) in acols.iter().zip(avals) {
                let (bcols, bvals) = b.row(k);
                for (&j, &bkj) in bcols.iter().zip(bvals) {
                    if s.mark[j] != i {
                        s.mark[j] = i;
                        s.acc[j] = 0.0;
                        s.touched.push(j);
                    }
                    s.acc[j] += aik * bkj;
                }
            }
            s.touched.sort_unstable();
            for &j in &s.touched {
                cols.push(j);
                vals.push(s.acc[j]);
            }
        },
    ))
}

/// Adjoints of `C = A B` for sparse output adjoint `V`:
/// `grad_A = (V Bᵀ) ⊙ mask(A)`, `grad_B = (Aᵀ V) ⊙ mask(B)`.
///
/// `V` must live on (a subset of) the structural product pattern of `A B`.
pub fn spspmm_vjp(v: &CsrMatrix, a: &CsrMatrix, b: &CsrMatrix) -> Result<(CsrMatrix, CsrMatrix)> {
    if a.ncols() != b.nrows() {
        return Err(dim_mismatch("spspmm_vjp", a.ncols(), b.nrows()));
    }
    if v.shape() != (a.nrows(), b.ncols()) {
        return Err(dim_mismatch(
            "spspmm_vjp (adjoint)",
            format!("{:?}", (a.nrows(), b.ncols())),
            format!("{:?}", v.shape()),
        ));
    }
    let product = product_pattern(a, b)?;
    if !v.pattern().is_subset_of(&product) {
        return Err(Error::InvalidStructure(
            "adjoint pattern is not contained in the product pattern".into(),
        ));
    }
    spspmm_vjp_unchecked(v, a, b)
}

/// [`spspmm_vjp`] without the product-pattern check; the tape calls this
/// because its adjoints are built on the forward output pattern.
pub(crate) fn spspmm_vjp_unchecked(
    v: &CsrMatrix,
    a: &CsrMatrix,
    b: &CsrMatrix,
) -> Result<(CsrMatrix, CsrMatrix)> {
    Ok((spspmm_vjp_lhs(v, b, a.pattern()), spspmm_vjp_rhs(v, a, b.pattern())))
}

/// `(V Bᵀ) ⊙ mask(A)`: entry `(i, j)` is the dot product of row `i` of `V`
/// with row `j` of `B`.
fn spspmm_vjp_lhs(v: &CsrMatrix, b: &CsrMatrix, mask: &Arc<SparsityPattern>) -> CsrMatrix {
    let values = masked_row_products(v, b, mask);
    CsrMatrix::from_pattern_unchecked(mask.clone(), values)
}

/// `(Aᵀ V) ⊙ mask(B)`: entry `(i, j)` is the dot product of column `i` of
/// `A` with column `j` of `V`, i.e. rows of the transposes.
fn spspmm_vjp_rhs(v: &CsrMatrix, a: &CsrMatrix, mask: &Arc<SparsityPattern>) -> CsrMatrix {
    let at = a.transpose();
    let vt = v.transpose();
    let values = masked_row_products(&at, &vt, mask);
    CsrMatrix::from_pattern_unchecked(mask.clone(), values)
}

/// For every `(i, j)` in `mask`: `Σ_c left[i, c] · right[j, c]`.
fn masked_row_products(left: &CsrMatrix, right: &CsrMatrix, mask: &SparsityPattern) -> Vec<f64> {
    let width = left.ncols();
    let run = |acc: &mut Vec<f64>, i: usize, out: &mut [f64]| {
        let (lcols, lvals) = left.row(i);
        for (&c, &x) in lcols.iter().zip(lvals) {
            acc[c] = x;
        }
        for (o, &j) in out.iter_mut().zip(mask.row(i)) {
            let (rcols, rvals) = right.row(j);
            let mut s = 0.0;
            for (&c, &y) in rcols.iter().zip(rvals) {
                s += acc[c] * y;
            }
            *o = s;
        }
        for &c in lcols {
            acc[c] = 0.0;
        }
    };
    let n = mask.nrows();
    let rowptr = mask.rowptr();
    if !parallel(n) {
        let mut acc = vec![0.0; width];
        let mut out = vec![0.0; mask.nnz()];
        for i in 0..n {
            run(&mut acc, i, &mut out[rowptr[i]..rowptr[i + 1]]);
        }
        return out;
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map_init(
            || vec![0.0; width],
            |acc, i| {
                let mut out = vec![0.0; rowptr[i + 1] - rowptr[i]];
                run(acc, i, &mut out);
                out
            },
        )
        .collect();
    rows.concat()
}

/// `C = A B` for sparse `A` and dense `B`; dense result.
pub fn spdmm(a: &CsrMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.ncols() != b.nrows() {
        return Err(dim_mismatch(
            "spdmm",
            format!("{} rows in B", a.ncols()),
            format!("{} rows", b.nrows()),
        ));
    }
    let p = b.ncols();
    let rows = map_rows(a.nrows(), |i| {
        let mut out = vec![0.0; p];
        let (cols, vals) = a.row(i);
        for (&k, &aik) in cols.iter().zip(vals) {
            for (o, &bkj) in out.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
        out
    });
    DenseMatrix::new(a.nrows(), p, rows.concat())
}

/// Adjoints of `C = A B` (dense `B`) for dense output adjoint `V`:
/// `grad_A = (V Bᵀ) ⊙ mask(A)`, `grad_B = Aᵀ V` (forward kernel on `Aᵀ`).
pub fn spdmm_vjp(v: &DenseMatrix, a: &CsrMatrix, b: &DenseMatrix) -> Result<(CsrMatrix, DenseMatrix)> {
    if a.ncols() != b.nrows() {
        return Err(dim_mismatch("spdmm_vjp", a.ncols(), b.nrows()));
    }
    if v.shape() != (a.nrows(), b.ncols()) {
        return Err(dim_mismatch(
            "spdmm_vjp (adjoint)",
            format!("{:?}", (a.nrows(), b.ncols())),
            format!("{:?}", v.shape()),
        ));
    }
    let cols = a.colind();
    let rowptr = a.rowptr();
    let grad_a = fill_rows(a.pattern(), |i, out| {
        let vrow = v.row(i);
        let base = rowptr[i];
        for (t, o) in out.iter_mut().enumerate() {
            let brow = b.row(cols[base + t]);
            *o = vrow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    });
    let grad_b = spdmm(&a.transpose(), v)?;
    Ok((CsrMatrix::from_pattern_unchecked(a.pattern().clone(), grad_a), grad_b))
}

/// `C = αA + βB` on the union pattern. Positions present in both operands
/// stay stored even when they sum to zero.
pub fn sp_add(alpha: f64, a: &CsrMatrix, beta: f64, b: &CsrMatrix) -> Result<CsrMatrix> {
    if a.shape() != b.shape() {
        return Err(dim_mismatch(
            "sp_add",
            format!("{:?}", a.shape()),
            format!("{:?}", b.shape()),
        ));
    }
    Ok(collect_rows(
        a.nrows(),
        a.ncols(),
        || (),
        |_, i, cols, vals| {
            let (ac, av) = a.row(i);
            let (bc, bv) = b.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ac.len() || q < bc.len() {
                let take_a = q >= bc.len() || (p < ac.len() && ac[p] <= bc[q]);
                let take_b = p >= ac.len() || (q < bc.len() && bc[q] <= ac[p]);
                match (take_a, take_b) {
                    (true, true) => {
                        cols.push(ac[p]);
                        vals.push(alpha * av[p] + beta * bv[q]);
                        p += 1;
                        q += 1;
                    }
                    (true, false) => {
                        cols.push(ac[p]);
                        vals.push(alpha * av[p]);
                        p += 1;
                    }
                    (false, true) => {
                        cols.push(bc[q]);
                        vals.push(beta * bv[q]);
                        q += 1;
                    }
                    (false, false) => unreachable!(),
                }
            }
        },
    ))
}

/// Adjoints of `C = αA + βB`: `grad_A = αV ⊙ mask(A)`, `grad_B = βV ⊙ mask(B)`.
/// Positions of `A` or `B` absent from `V` receive zero.
pub fn sp_add_vjp(
    v: &CsrMatrix,
    a: &CsrMatrix,
    b: &CsrMatrix,
    alpha: f64,
    beta: f64,
) -> Result<(CsrMatrix, CsrMatrix)> {
    if v.shape() != a.shape() || a.shape() != b.shape() {
        return Err(dim_mismatch(
            "sp_add_vjp",
            format!("{:?}", a.shape()),
            format!("{:?} / {:?}", v.shape(), b.shape()),
        ));
    }
    let ga: Vec<f64> = v.gather(a.pattern()).into_iter().map(|x| alpha * x).collect();
    let gb: Vec<f64> = v.gather(b.pattern()).into_iter().map(|x| beta * x).collect();
    Ok((
        CsrMatrix::from_pattern_unchecked(a.pattern().clone(), ga),
        CsrMatrix::from_pattern_unchecked(b.pattern().clone(), gb),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csr::same_pattern;
    use crate::poisson::poisson_1d;

    #[test]
    fn spmv_examples() {
        let x = DenseVector::new(vec![1.0, 2.0, 3.0]);
        assert_eq!(spmv(&CsrMatrix::identity(3), &x).unwrap(), x);
        let a3 = poisson_1d(3).unwrap();
        let y = spmv(&a3, &DenseVector::filled(3, 1.0)).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 0.0, 1.0]);
        let empty = CsrMatrix::from_coo(2, 2, &[]).unwrap();
        let y = spmv(&empty, &DenseVector::new(vec![5.0, 7.0])).unwrap();
        assert_eq!(y.as_slice(), &[0.0, 0.0]);
        assert!(spmv(&a3, &DenseVector::zeros(2)).is_err());
    }

    #[test]
    fn spmv_vjp_examples() {
        let (ga, gx) = spmv_vjp(
            &DenseVector::new(vec![1.0, 2.0]),
            &CsrMatrix::identity(2),
            &DenseVector::new(vec![3.0, 4.0]),
        )
        .unwrap();
        assert_eq!(ga.values(), &[3.0, 8.0]);
        assert_eq!(gx.as_slice(), &[1.0, 2.0]);

        let a3 = poisson_1d(3).unwrap();
        let (ga, gx) = spmv_vjp(&DenseVector::zeros(3), &a3, &DenseVector::filled(3, 1.0)).unwrap();
        assert!(ga.values().iter().all(|&v| v == 0.0));
        assert!(same_pattern(ga.pattern(), a3.pattern()));
        assert!(gx.as_slice().iter().all(|&v| v == 0.0));

        let (ga, gx) = spmv_vjp(&DenseVector::filled(3, 1.0), &a3, &DenseVector::unit(3, 0)).unwrap();
        assert_eq!(gx.as_slice(), &[1.0, 0.0, 1.0]);
        assert_eq!(ga.get(0, 0), 1.0);
        assert_eq!(ga.get(1, 0), 1.0);
        assert_eq!(ga.get(1, 1), 0.0);
    }

    #[test]
    fn spspmm_examples() {
        let a3 = poisson_1d(3).unwrap();
        assert_eq!(spspmm(&a3, &CsrMatrix::identity(3)).unwrap(), a3);
        let sq = spspmm(&a3, &a3).unwrap().to_dense();
        let expected = DenseMatrix::from_rows(&[
            vec![5.0, -4.0, 1.0],
            vec![-4.0, 6.0, -4.0],
            vec![1.0, -4.0, 5.0],
        ])
        .unwrap();
        assert_eq!(sq, expected);

        let row = CsrMatrix::from_coo(1, 2, &[(0, 0, 1.0), (0, 1, -1.0)]).unwrap();
        let col = CsrMatrix::from_coo(2, 1, &[(0, 0, 1.0), (1, 0, 1.0)]).unwrap();
        let c = spspmm(&row, &col).unwrap();
        assert_eq!(c.nnz(), 1);
        assert_eq!(c.values(), &[0.0]);
    }

    #[test]
    fn spspmm_vjp_examples() {
        let i2 = CsrMatrix::identity(2);
        let (ga, gb) = spspmm_vjp(&i2, &i2, &i2).unwrap();
        assert_eq!(ga, i2);
        assert_eq!(gb, i2);

        let a = CsrMatrix::diag(&DenseVector::new(vec![3.0, 5.0]));
        let b = CsrMatrix::from_dense(&DenseMatrix::filled(2, 2, 1.0));
        let c = spspmm(&a, &b).unwrap();
        let v = CsrMatrix::filled_on(c.pattern().clone(), 1.0);
        let (_, gb) = spspmm_vjp(&v, &a, &b).unwrap();
        assert_eq!(gb.to_dense().as_slice(), &[3.0, 3.0, 5.0, 5.0]);
    }

    #[test]
    fn spspmm_vjp_rejects_foreign_adjoint_pattern() {
        let a = CsrMatrix::identity(3);
        let v = CsrMatrix::eye(3, 1);
        assert!(spspmm_vjp(&v, &a, &a).is_err());
    }

    #[test]
    fn spdmm_examples() {
        let b = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let i2 = CsrMatrix::identity(2);
        assert_eq!(spdmm(&i2, &b).unwrap(), b);
        let v = DenseMatrix::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.0]]).unwrap();
        let (_, gb) = spdmm_vjp(&v, &i2, &b).unwrap();
        assert_eq!(gb, v);

        let a3 = poisson_1d(3).unwrap();
        let ones = DenseMatrix::filled(3, 2, 1.0);
        let c = spdmm(&a3, &ones).unwrap();
        assert_eq!(c.as_slice(), &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0]);
        let (ga, _) = spdmm_vjp(&DenseMatrix::filled(3, 2, 1.0), &a3, &ones).unwrap();
        assert!(ga.values().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn sp_add_examples() {
        let a3 = poisson_1d(3).unwrap();
        let z = sp_add(1.0, &a3, -1.0, &a3).unwrap();
        assert!(same_pattern(z.pattern(), a3.pattern()));
        assert!(z.values().iter().all(|&v| v == 0.0));

        let c = sp_add(2.0, &CsrMatrix::eye(3, 0), -1.0, &CsrMatrix::eye(3, 1)).unwrap();
        assert_eq!(c.values(), &[2.0, -1.0, 2.0, -1.0, 2.0]);
        assert_eq!(c.colind(), &[0, 1, 1, 2, 2]);

        let a = CsrMatrix::eye(3, 0);
        let b = CsrMatrix::eye(3, 1);
        let v = CsrMatrix::filled_on(c.pattern().clone(), 1.0);
        let (ga, gb) = sp_add_vjp(&v, &a, &b, 2.0, -3.0).unwrap();
        assert!(ga.values().iter().all(|&x| x == 2.0));
        assert!(gb.values().iter().all(|&x| x == -3.0));
    }

    #[test]
    fn poisson_from_shifted_identities() {
        let two = CsrMatrix::eye(3, 0).scaled(2.0);
        let a = sp_add(1.0, &two, -1.0, &CsrMatrix::eye(3, 1)).unwrap();
        let a = sp_add(1.0, &a, -1.0, &CsrMatrix::eye(3, -1)).unwrap();
        assert_eq!(a, poisson_1d(3).unwrap());
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let a = poisson_1d(5000).unwrap();
        let x = DenseVector::new((0..5000).map(|i| (i as f64 * 0.37).sin()).collect());
        let seq = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let par = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let run = || {
            let y = spmv(&a, &x).unwrap();
            let (ga, gx) = spmv_vjp(&y, &a, &x).unwrap();
            let c = spspmm(&a, &a).unwrap();
            let (gaa, gbb) = spspmm_vjp_unchecked(&c, &a, &a).unwrap();
            (y, ga, gx, c, gaa, gbb)
        };
        assert_eq!(seq.install(run), par.install(run));
    }
}
