//! Thin wrappers over the dense kernels in `faer`.

use faer::linalg::solvers::Solve;
use faer::{c64, Mat, MatRef};

use crate::error::{Error, Result};

pub fn zeros(rows: usize, cols: usize) -> Mat<c64> {
    Mat::zeros(rows, cols)
}

pub fn identity(n: usize) -> Mat<c64> {
    Mat::identity(n, n)
}

pub fn scaled(m: MatRef<'_, c64>, c: c64) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * c)
}

pub fn from_vec_column(v: &[c64]) -> Mat<c64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

pub fn column(m: MatRef<'_, c64>, j: usize) -> Vec<c64> {
    (0..m.nrows()).map(|i| m[(i, j)]).collect()
}

pub fn matvec(m: MatRef<'_, c64>, x: &[c64]) -> Vec<c64> {
    assert_eq!(m.ncols(), x.len());
    let xm = from_vec_column(x);
    column((m * &xm).as_ref(), 0)
}

/// `mᴴ x`
pub fn adjoint_matvec(m: MatRef<'_, c64>, x: &[c64]) -> Vec<c64> {
    assert_eq!(m.nrows(), x.len());
    let xm = from_vec_column(x);
    column((m.adjoint() * &xm).as_ref(), 0)
}

pub fn frobenius(m: MatRef<'_, c64>) -> f64 {
    m.norm_l2()
}

/// `sqrt(Σ_ij wr_i wc_j |m_ij|²)`, the discrete `L²(D×D)` norm.
pub fn weighted_frobenius(m: MatRef<'_, c64>, row_w: &[f64], col_w: &[f64]) -> f64 {
    let mut acc = 0.0;
    for j in 0..m.ncols() {
        let mut col = 0.0;
        for i in 0..m.nrows() {
            col += row_w[i] * m[(i, j)].norm_sqr();
        }
        acc += col_w[j] * col;
    }
    acc.sqrt()
}

pub fn vec_norm(v: &[c64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn weighted_norm(v: &[c64], w: &[f64]) -> f64 {
    v.iter().zip(w).map(|(z, w)| w * z.norm_sqr()).sum::<f64>().sqrt()
}

/// `Σ w_i conj(a_i) b_i`
pub fn weighted_inner(a: &[c64], b: &[c64], w: &[f64]) -> c64 {
    a.iter().zip(b).zip(w).map(|((a, b), w)| a.conj() * b * *w).sum()
}

pub fn solve(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Mat<c64> {
    a.partial_piv_lu().solve(b)
}

pub fn inverse(a: MatRef<'_, c64>) -> Mat<c64> {
    solve(a, identity(a.nrows()).as_ref())
}

/// Inverse of an upper-triangular matrix by column-wise back substitution.
pub fn upper_triangular_inverse(r: MatRef<'_, c64>) -> Result<Mat<c64>> {
    let n = r.nrows();
    let mut inv = zeros(n, n);
    for j in 0..n {
        if r[(j, j)].norm() == 0.0 {
            return Err(Error::Numeric(format!("zero diagonal at {j} in triangular inverse")));
        }
        inv[(j, j)] = r[(j, j)].inv();
        for i in (0..j).rev() {
            let mut s = c64::new(0.0, 0.0);
            for p in i + 1..=j {
                s += r[(i, p)] * inv[(p, j)];
            }
            inv[(i, j)] = -s / r[(i, i)];
        }
    }
    Ok(inv)
}

pub fn eigen(m: MatRef<'_, c64>) -> Result<(Vec<c64>, Mat<c64>)> {
    let evd = m
        .eigen()
        .map_err(|e| Error::Numeric(format!("eigendecomposition failed: {e:?}")))?;
    let values = evd.S().column_vector().iter().copied().collect();
    Ok((values, evd.U().to_owned()))
}

pub fn eigenvalues(m: MatRef<'_, c64>) -> Result<Vec<c64>> {
    m.eigenvalues()
        .map_err(|e| Error::Numeric(format!("eigenvalue computation failed: {e:?}")))
}

/// Singular values in nonincreasing order.
pub fn singular_values(m: MatRef<'_, c64>) -> Result<Vec<f64>> {
    let mut s = m
        .singular_values()
        .map_err(|e| Error::Numeric(format!("singular value computation failed: {e:?}")))?;
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

pub struct ThinSvd {
    pub u: Mat<c64>,
    pub s: Vec<f64>,
    pub v: Mat<c64>,
}

pub fn thin_svd(m: MatRef<'_, c64>) -> Result<ThinSvd> {
    let svd = m
        .thin_svd()
        .map_err(|e| Error::Numeric(format!("SVD failed: {e:?}")))?;
    let s = svd.S().column_vector().iter().map(|z| z.re).collect();
    Ok(ThinSvd { u: svd.U().to_owned(), s, v: svd.V().to_owned() })
}

pub fn is_finite(m: MatRef<'_, c64>) -> bool {
    (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| m[(i, j)].is_finite()))
}
