//! Dense symmetric eigensolvers for small projected problems and for exact
//! diagonalization of modest sectors.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self_adjoint_evd, self_adjoint_evd_scratch, ComputeEigenvectors};
use faer::diag::Diag;
use faer::{Mat, MatRef, Par};

use crate::error::{Error, Result};

/// Eigen-decomposition of a symmetric matrix: ascending values and the
/// matching orthonormal eigenvectors as columns.
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
}

fn to_mat(n: usize, a: &[f64]) -> Mat<f64> {
    assert_eq!(a.len(), n * n, "dense matrix has wrong size");
    Mat::from_fn(n, n, |i, j| a[i * n + j])
}

/// Sequential decomposition reading the lower triangle. faer's convenience
/// methods follow the ambient rayon pool, whose size changes the blocking and
/// hence the last bits of the result; callers parallelize over realizations
/// instead.
fn evd(m: MatRef<'_, f64>, vectors: bool) -> Result<(Vec<f64>, Option<Mat<f64>>)> {
    let n = m.nrows();
    let mut s = Diag::<f64>::zeros(n);
    let mut u = vectors.then(|| Mat::<f64>::zeros(n, n));
    let which = if vectors { ComputeEigenvectors::Yes } else { ComputeEigenvectors::No };
    let mut buf = MemBuffer::new(self_adjoint_evd_scratch::<f64>(n, which, Par::Seq, Default::default()));
    self_adjoint_evd(
        m,
        s.as_mut(),
        u.as_mut().map(|u| u.as_mut()),
        Par::Seq,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .map_err(|e| Error::Numeric(format!("dense eigensolver failed: {e:?}")))?;
    Ok(((0..n).map(|i| s[i]).collect(), u))
}

/// Eigenvalues only, ascending. `a` is row-major and symmetric.
pub fn eigvalsh(n: usize, a: &[f64]) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let m = to_mat(n, a);
    let (mut values, _) = evd(m.as_ref(), false)?;
    values.sort_by(f64::total_cmp);
    Ok(values)
}

pub fn eigh(n: usize, a: &[f64]) -> Result<SymmetricEigen> {
    eigh_mat(&to_mat(n, a))
}

pub fn eigh_mat(m: &Mat<f64>) -> Result<SymmetricEigen> {
    let (values, vectors) = evd(m.as_ref(), true)?;
    let vectors = vectors.expect("vectors requested");
    debug_assert!(values.windows(2).all(|w| w[0] <= w[1]));
    Ok(SymmetricEigen { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let v = eigvalsh(2, &[0.0, 3.0, 3.0, 0.0]).unwrap();
        assert!((v[0] + 3.0).abs() < 1e-14 && (v[1] - 3.0).abs() < 1e-14);
        let e = eigh(2, &[2.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(e.values, vec![1.0, 2.0]);
        assert!((e.vectors[(1, 0)].abs() - 1.0).abs() < 1e-14);
    }
}
