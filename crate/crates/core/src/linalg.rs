//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};
use crate::C64;

pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted ascending.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Singular values (descending) and the matching right singular vectors as
/// columns of an `ncols x ncols` matrix. Wide inputs are zero-padded so the
/// full right singular basis, kernel included, is returned.
pub fn right_singular(m: &CMat) -> (Vec<f64>, CMat) {
    let (rows, cols) = m.shape();
    let padded = if rows < cols {
        let mut p = CMat::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = SVD::new(padded, false, true);
    let v_t = svd.v_t.expect("requested v_t");
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let v = CMat::from_fn(cols, k, |i, j| v_t[(order[j], i)].conj());
    (values, v)
}

/// Largest singular value.
pub fn op_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    right_singular(m).0[0]
}

/// Orthonormal basis of ker S (columns) for a full-rank `r x n` matrix S with
/// r < n, together with (sigma_min, sigma_max) of S.
///
/// Rejects S whose smallest singular value is below `1e-8 * sigma_max`.
pub fn kernel_basis(s: &CMat) -> Result<(CMat, f64, f64)> {
    let (r, n) = s.shape();
    if r >= n {
        return Err(Error::InvalidDims(format!("kernel of a {r}x{n} matrix")));
    }
    let (sv, v) = right_singular(s);
    let sigma_max = sv[0];
    let sigma_min = sv[r - 1];
    if !(sigma_min > TRANSVERSE_RATIO * sigma_max) {
        return Err(Error::NotTransverse { sigma_min, sigma_max });
    }
    Ok((v.columns(r, n - r).into_owned(), sigma_min, sigma_max))
}

/// Transversality threshold on sigma_min / sigma_max.
pub const TRANSVERSE_RATIO: f64 = 1e-8;

/// Real determinant of a Hermitian positive semi-definite matrix.
pub fn hermitian_det(m: &CMat) -> f64 {
    m.clone().determinant().re
}

/// Inverse of a lower-triangular Cholesky factor of a Hermitian positive
/// definite matrix: returns W with W^* W = A^{-1}.
pub fn inverse_cholesky_factor(a: &CMat) -> Result<CMat> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("Gram matrix is not positive definite".into()))?;
    let l = chol.l();
    let n = l.nrows();
    l.solve_lower_triangular(&CMat::identity(n, n))
        .ok_or_else(|| Error::Singular("singular Cholesky factor".into()))
}

/// Largest entrywise modulus of `a - b`.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}
