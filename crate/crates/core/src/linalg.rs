//! Dense symmetric kernels shared by the solvers.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    sym_eigen(m).0
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest `mu` with `Qv = mu P v`.
pub fn max_generalized_eigenvalue(q: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<f64> {
    let chol = Cholesky::new(symmetrize(p)).ok_or_else(|| {
        let min = sym_eigenvalues(p).iter().copied().fold(f64::INFINITY, f64::min);
        Error::NotPd(min)
    })?;
    let l = chol.l();
    // L^{-1} Q L^{-T}
    let linv_q = l
        .solve_lower_triangular(q)
        .ok_or_else(|| Error::Solver("triangular solve failed".into()))?;
    let m = l
        .solve_lower_triangular(&linv_q.transpose())
        .ok_or_else(|| Error::Solver("triangular solve failed".into()))?;
    let ev = sym_eigenvalues(&m);
    Ok(ev.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Rebuilds `m` with eigenvalues in `[-rel_tol * lambda_max, 0)` set to zero;
/// fails when a more negative eigenvalue is present.
pub fn clip_psd(m: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let (vals, vecs) = sym_eigen(m);
    let n = vals.len();
    if n == 0 {
        return Ok(m.clone());
    }
    let top = vals[0].max(0.0);
    let tau = rel_tol * top;
    let min = vals[n - 1];
    if min < -tau {
        return Err(Error::NotPsd(min));
    }
    if min >= 0.0 {
        return Ok(symmetrize(m));
    }
    let clipped = vals.map(|v| v.max(0.0));
    Ok(&vecs * DMatrix::from_diagonal(&clipped) * vecs.transpose())
}

/// Spectral norm of a symmetric matrix by power iteration.
pub fn power_norm(m: &DMatrix<f64>, iters: usize, tol: f64) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64) * 1e-3);
    v /= v.norm();
    let mut est = 0.0;
    for _ in 0..iters {
        let w = m * &v;
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        let next = nw;
        v = w / nw;
        if (next - est).abs() <= tol * next.max(1.0) {
            return next;
        }
        est = next;
    }
    est
}

/// Projects `x` onto `{x : E x = f}` in the least-squares sense.
pub fn project_affine(e: &DMatrix<f64>, f: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
    if e.nrows() == 0 {
        return x.clone();
    }
    let r = e * x - f;
    let gram = e * e.transpose();
    let corr = match Cholesky::new(gram.clone()) {
        Some(ch) => ch.solve(&r),
        None => gram
            .pseudo_inverse(1e-12)
            .map(|pinv| pinv * &r)
            .unwrap_or_else(|_| DVector::zeros(r.len())),
    };
    x - e.transpose() * corr
}

/// Orthonormal basis for the null space of `e` (columns), via SVD.
pub fn null_space(e: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if e.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // eigenvectors of E'E with zero eigenvalue
    let gram = e.transpose() * e;
    let (vals, vecs) = sym_eigen(&gram);
    let scale = vals.iter().copied().fold(0.0f64, f64::max).max(1.0);
    let keep: Vec<usize> = (0..n).filter(|&i| vals[i] <= 1e-10 * scale).collect();
    let mut basis = DMatrix::zeros(n, keep.len());
    for (k, &i) in keep.iter().enumerate() {
        basis.set_column(k, &vecs.column(i));
    }
    basis
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eigen_descending_and_reconstructs() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0]);
        let (vals, vecs) = sym_eigen(&m);
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
        let rebuilt = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert_relative_eq!(rebuilt, m, epsilon = 1e-12);
    }

    #[test]
    fn generalized_eigenvalue_of_diagonal_pair() {
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        let p = DMatrix::identity(2, 2);
        assert_relative_eq!(max_generalized_eigenvalue(&q, &p).unwrap(), 1.0, epsilon = 1e-14);
        let p = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        assert_relative_eq!(max_generalized_eigenvalue(&q, &p).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn clip_accepts_rounding_noise_only() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1e-12]));
        let c = clip_psd(&m, 1e-8).unwrap();
        assert_eq!(c[(1, 1)], 0.0);
        let bad = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.1]));
        assert!(matches!(clip_psd(&bad, 1e-8), Err(Error::NotPsd(_))));
    }

    #[test]
    fn power_iteration_matches_eigen() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let top = sym_eigenvalues(&m)[0];
        assert_relative_eq!(power_norm(&m, 500, 1e-14), top, epsilon = 1e-8);
    }

    #[test]
    fn affine_projection_lands_on_plane() {
        let e = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let f = DVector::from_vec(vec![1.0]);
        let x = DVector::from_vec(vec![0.5, 0.5, 0.5]);
        let y = project_affine(&e, &f, &x);
        assert_relative_eq!((&e * &y)[0], 1.0, epsilon = 1e-14);
        let ns = null_space(&e, 3);
        assert_eq!(ns.ncols(), 2);
        assert_relative_eq!((&e * &ns).norm(), 0.0, epsilon = 1e-12);
    }
}
