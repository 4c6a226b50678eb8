//! Dense linear-algebra helpers built on `nalgebra`.
//!
//! Traces of resolvents and pseudoinverses are always taken from the spectrum
//! of the smaller of the two gram matrices, `XᵀX` or `XXᵀ`. Their nonzero
//! eigenvalues are the squared singular values of `X`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{count, lit, Real};

pub(crate) fn ensure_finite_matrix<T: Real>(m: &DMatrix<T>, what: &str) -> Result<()> {
    if let Some(pos) = m.iter().position(|x| !x.is_finite()) {
        let (r, c) = (pos % m.nrows(), pos / m.nrows());
        return Err(Error::input(format!("{what} has a non-finite entry at ({r}, {c})")));
    }
    Ok(())
}

pub(crate) fn ensure_finite_vector<T: Real>(v: &DVector<T>, what: &str) -> Result<()> {
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::input(format!("{what} has a non-finite entry at {i}")));
    }
    Ok(())
}

/// Largest absolute asymmetry `|mᵢⱼ − mⱼᵢ|` relative to the largest entry.
pub fn asymmetry<T: Real>(m: &DMatrix<T>) -> T {
    let n = m.nrows();
    let mut worst = T::zero();
    let mut scale = T::zero();
    for j in 0..n {
        for i in 0..n {
            scale = scale.max(m[(i, j)].abs());
            if i > j {
                worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
    }
    if scale == T::zero() {
        T::zero()
    } else {
        worst / scale
    }
}

pub(crate) fn ensure_symmetric<T: Real>(m: &DMatrix<T>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::input(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    ensure_finite_matrix(m, what)?;
    let tol = lit::<T>(1e3) * T::default_epsilon() * count::<T>(m.nrows().max(1)).sqrt();
    let tol = tol.max(lit(1e-10));
    let asym = asymmetry(m);
    if asym > tol {
        return Err(Error::input(format!(
            "{what} is not symmetric (relative asymmetry {asym})"
        )));
    }
    Ok(())
}

/// Symmetric eigendecomposition with eigenvalues sorted in decreasing order.
pub fn sym_eigen<T: Real>(m: &DMatrix<T>) -> (DVector<T>, DMatrix<T>) {
    let eig = m.clone().symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let vals = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(m.nrows(), n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Eigenvalues of a symmetric matrix, decreasing.
pub fn sym_eigenvalues<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    let mut vals: Vec<T> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    vals
}

/// `XᵀX`.
pub fn cross_product<T: Real>(x: &DMatrix<T>) -> DMatrix<T> {
    // An explicit transpose routes through the blocked GEMM kernel, which is
    // an order of magnitude faster than `tr_mul` for large shapes.
    x.transpose() * x
}

/// `XXᵀ`.
pub fn outer_product<T: Real>(x: &DMatrix<T>) -> DMatrix<T> {
    x * x.transpose()
}

/// Squared singular values of `x`, decreasing, `min(n, p)` of them, clamped at zero.
pub fn squared_singular_values<T: Real>(x: &DMatrix<T>) -> Vec<T> {
    let g = if x.nrows() <= x.ncols() {
        outer_product(x)
    } else {
        cross_product(x)
    };
    sym_eigenvalues(&g).into_iter().map(|s| s.max(T::zero())).collect()
}

/// Eigenvalue cutoff for pseudoinverses of a gram matrix with leading
/// eigenvalue `s_max` built from a `k × p` design.
pub fn pinv_cutoff<T: Real>(s_max: T, k: usize, p: usize) -> T {
    count::<T>(k.max(p)) * T::default_epsilon() * s_max
}

/// Copies the rows `idx` of `x` into a new matrix.
pub fn select_rows<T: Real>(x: &DMatrix<T>, idx: &[usize]) -> DMatrix<T> {
    let p = x.ncols();
    DMatrix::from_fn(idx.len(), p, |i, j| x[(idx[i], j)])
}

pub fn select_entries<T: Real>(y: &DVector<T>, idx: &[usize]) -> DVector<T> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| y[i]))
}

/// Principal submatrix `K[idx, idx]`.
pub fn principal_submatrix<T: Real>(k: &DMatrix<T>, idx: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| k[(idx[i], idx[j])])
}

/// `f(M)` for symmetric `M` via its eigendecomposition.
pub fn sym_apply<T: Real>(m: &DMatrix<T>, f: impl Fn(T) -> T) -> DMatrix<T> {
    let (vals, vecs) = sym_eigen(m);
    let scaled = DMatrix::from_fn(vecs.nrows(), vecs.ncols(), |i, j| vecs[(i, j)] * f(vals[j]));
    scaled * vecs.transpose()
}

/// Checks positive definiteness with a Cholesky factorization.
pub(crate) fn ensure_spd<T: Real>(m: &DMatrix<T>, what: &str) -> Result<()> {
    ensure_symmetric(m, what).map_err(|e| Error::param(format!("{what} is not symmetric positive definite: {e}")))?;
    if m.clone().cholesky().is_none() {
        return Err(Error::param(format!(
            "{what} is not symmetric positive definite (Cholesky failed)"
        )));
    }
    Ok(())
}

/// Solves `A x = b` for SPD `A`.
pub(crate) fn spd_solve<T: Real>(a: DMatrix<T>, b: &DVector<T>, what: &str) -> Result<DVector<T>> {
    a.cholesky()
        .map(|c| c.solve(b))
        .ok_or_else(|| Error::Input(format!("{what} is not positive definite")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn singular_values_match_both_orientations() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, 3.0]);
        let a = squared_singular_values(&x);
        let b = squared_singular_values(&x.transpose());
        assert_eq!(a.len(), 2);
        for (u, v) in a.iter().zip(&b) {
            assert_relative_eq!(*u, *v, epsilon = 1e-12);
        }
        // trace of XXᵀ equals the squared Frobenius norm
        assert_relative_eq!(a.iter().sum::<f64>(), 15.0, epsilon = 1e-12);
    }

    #[test]
    fn matrix_square_root_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = sym_apply(&m, |x: f64| x.sqrt());
        assert_relative_eq!(&r * &r, m, epsilon = 1e-12);
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.1, 1.0]);
        assert!(matches!(ensure_symmetric(&m, "m"), Err(Error::Input(_))));
    }
}
