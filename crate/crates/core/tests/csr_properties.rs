use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;
use sparsegrad::csr::{mask_to, same_pattern};
use sparsegrad::mmio::{read_from, write_to};
use sparsegrad::{CsrMatrix, DenseMatrix};

fn triples(max: usize) -> impl Strategy<Value = (usize, usize, Vec<(usize, usize, f64)>)> {
    (1..max, 1..max).prop_flat_map(|(m, n)| {
        let entry = (0..m, 0..n, -10.0..10.0f64);
        (Just(m), Just(n), proptest::collection::vec(entry, 0..3 * m * n))
    })
}

fn dense_from_triples(m: usize, n: usize, t: &[(usize, usize, f64)]) -> DenseMatrix {
    let mut d = DenseMatrix::zeros(m, n);
    for &(i, j, v) in t {
        d[(i, j)] += v;
    }
    d
}

proptest! {
    #[test]
    fn coo_sums_duplicates((m, n, t) in triples(12)) {
        let a = CsrMatrix::from_coo(m, n, &t).unwrap();
        a.validate().unwrap();
        let distinct: BTreeMap<(usize, usize), ()> = t.iter().map(|&(i, j, _)| ((i, j), ())).collect();
        prop_assert_eq!(a.nnz(), distinct.len());
        let d = dense_from_triples(m, n, &t);
        for i in 0..m {
            for j in 0..n {
                // summation order of duplicates follows input order
                prop_assert!((a.get(i, j) - d[(i, j)]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn transpose_is_an_involution((m, n, t) in triples(12)) {
        let a = CsrMatrix::from_coo(m, n, &t).unwrap();
        let at = a.transpose();
        prop_assert_eq!(at.shape(), (n, m));
        prop_assert_eq!(at.to_dense(), a.to_dense().transpose());
        prop_assert_eq!(at.transpose(), a);
    }

    #[test]
    fn masking_onto_own_pattern_is_identity((m, n, t) in triples(12)) {
        let a = CsrMatrix::from_coo(m, n, &t).unwrap();
        let masked = mask_to(&a, a.pattern()).unwrap();
        prop_assert!(same_pattern(masked.pattern(), a.pattern()));
        prop_assert_eq!(masked.values(), a.values());
        let from_dense = mask_to(&a.to_dense(), a.pattern()).unwrap();
        prop_assert_eq!(from_dense.values(), a.values());
    }

    #[test]
    fn masked_dense_keeps_only_pattern_entries((m, n, t) in triples(10), seed in any::<u64>()) {
        let a = CsrMatrix::from_coo(m, n, &t).unwrap();
        let values: Vec<f64> = (0..m * n).map(|k| ((k as u64).wrapping_mul(seed | 1) % 97) as f64).collect();
        let dense = DenseMatrix::new(m, n, values).unwrap();
        let masked = mask_to(&dense, a.pattern()).unwrap();
        for i in 0..m {
            let (cols, vals) = masked.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                prop_assert_eq!(v, dense[(i, j)]);
            }
        }
        prop_assert_eq!(masked.nnz(), a.nnz());
    }

    #[test]
    fn matrix_market_round_trip((m, n, t) in triples(10)) {
        let a = CsrMatrix::from_coo(m, n, &t).unwrap();
        let mut buf = Vec::new();
        write_to(&mut buf, &a).unwrap();
        let b = read_from(buf.as_slice()).unwrap();
        prop_assert_eq!(b, a);
    }
}

#[test]
fn explicit_zeros_are_stored() {
    let a = CsrMatrix::from_coo(2, 2, &[(0, 1, 1.5), (0, 1, -1.5), (1, 0, 0.0)]).unwrap();
    assert_eq!(a.nnz(), 2);
    assert_eq!(a.values(), &[0.0, 0.0]);
}

#[test]
fn clones_share_the_pattern() {
    let a = CsrMatrix::identity(4);
    let b = a.scaled(3.0);
    assert!(Arc::ptr_eq(a.pattern(), b.pattern()));
}
