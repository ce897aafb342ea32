//! Finite-difference Poisson test matrices.

use crate::csr::CsrMatrix;
use crate::error::{Error, Result};

/// The `n x n` tridiagonal 1-D Poisson matrix: 2 on the diagonal, -1 on the
/// first off-diagonals.
pub fn poisson_1d(n: usize) -> Result<CsrMatrix> {
    if n == 0 {
        return Err(Error::Domain("poisson_1d needs n >= 1".into()));
    }
    let mut triples = Vec::with_capacity(3 * n);
    for i in 0..n {
        if i > 0 {
            triples.push((i, i - 1, -1.0));
        }
        triples.push((i, i, 2.0));
        if i + 1 < n {
            triples.push((i, i + 1, -1.0));
        }
    }
    CsrMatrix::from_coo(n, n, &triples)
}

/// The 2-D Poisson matrix `A_nx ⊗ I_ny + I_nx ⊗ A_ny`, of size
/// `nx*ny x nx*ny`.
pub fn poisson_2d(nx: usize, ny: usize) -> Result<CsrMatrix> {
    let ax = poisson_1d(nx)?;
    let ay = poisson_1d(ny)?;
    let left = ax.kron(&CsrMatrix::identity(ny));
    let right = CsrMatrix::identity(nx).kron(&ay);
    crate::kernels::sp_add(1.0, &left, 1.0, &right)
}
