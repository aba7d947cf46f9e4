//! Dense real matrices and the factorizations the reconstruction layers rely on.
//!
//! Storage is column-major (`nalgebra::DMatrix<f64>`). Every constructor rejects
//! NaN and infinite entries, so downstream code can assume finite data.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance under which two squared trailing column norms count as a
/// tie during column pivoting. Ties go to the lowest original column index.
pub const PIVOT_TIE_RTOL: f64 = 1e-8;

/// Column-major real matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix(DMatrix<f64>);

impl DenseMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % m.nrows().max(1), pos / m.nrows().max(1));
            return Err(Error::NonFinite(format!("matrix entry ({r}, {c})")));
        }
        Ok(DenseMatrix(m))
    }

    /// Builds from column-major data.
    pub fn from_column_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Self::new(DMatrix::from_column_slice(rows, cols, data))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
            return Err(Error::dim(format!(
                "row {bad} has {} entries, expected {ncols}",
                rows[bad].len()
            )));
        }
        Self::new(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        DenseMatrix(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn inner(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Row-major copy, one `Vec` per row.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows())
            .map(|i| self.0.row(i).iter().copied().collect())
            .collect()
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix(self.0.transpose())
    }

    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols() != rhs.rows() {
            return Err(Error::dim(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows(),
                self.cols(),
                rhs.rows(),
                rhs.cols()
            )));
        }
        Ok(DenseMatrix(&self.0 * &rhs.0))
    }

    pub fn matvec(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if self.cols() != x.len() {
            return Err(Error::dim(format!(
                "{}x{} matrix applied to a vector of length {}",
                self.rows(),
                self.cols(),
                x.len()
            )));
        }
        Ok(&self.0 * x)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// Leading `k` columns.
    pub fn leading_columns(&self, k: usize) -> Result<DenseMatrix> {
        if k > self.cols() {
            return Err(Error::dim(format!(
                "asked for {k} columns of a matrix with {}",
                self.cols()
            )));
        }
        Ok(DenseMatrix(self.0.columns(0, k).into_owned()))
    }

    /// Rows picked by `indices`, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<DenseMatrix> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.rows()) {
            return Err(Error::dim(format!(
                "row index {bad} out of range for {} rows",
                self.rows()
            )));
        }
        Ok(DenseMatrix(self.0.select_rows(indices)))
    }
}

impl Deref for DenseMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Column-pivoted QR factorization `A P = Q R`.
#[derive(Debug, Clone)]
pub struct PivotedQR {
    /// rows x k with orthonormal columns, k = min(rows, cols).
    pub q: DenseMatrix,
    /// k x cols, upper triangular.
    pub r: DenseMatrix,
    /// `perm[j]` is the original index of the column moved to position j.
    pub perm: Vec<usize>,
}

impl PivotedQR {
    /// The permutation as a matrix P with `A P = Q R`.
    pub fn permutation_matrix(&self) -> DenseMatrix {
        let n = self.perm.len();
        let mut p = DMatrix::zeros(n, n);
        for (j, &orig) in self.perm.iter().enumerate() {
            p[(orig, j)] = 1.0;
        }
        DenseMatrix(p)
    }
}

/// Householder QR with greedy column pivoting.
///
/// At step k the remaining column with the largest trailing Euclidean norm is
/// moved into position k. Norms are recomputed exactly at every step rather
/// than downdated, which is affordable for the small `m x N` matrices used in
/// sensor placement and keeps the greedy choice exact.
pub fn qr_column_pivot(a: &DenseMatrix) -> Result<PivotedQR> {
    let (rows, cols) = (a.rows(), a.cols());
    if rows == 0 || cols == 0 {
        return Err(Error::dim("column-pivoted QR of an empty matrix"));
    }
    let k = rows.min(cols);
    let mut r = a.0.clone();
    let mut perm: Vec<usize> = (0..cols).collect();
    let mut reflectors: Vec<Option<DVector<f64>>> = Vec::with_capacity(k);

    for j in 0..k {
        let norms2: Vec<f64> = (j..cols)
            .map(|c| r.view((j, c), (rows - j, 1)).norm_squared())
            .collect();
        let max2 = norms2.iter().copied().fold(0.0_f64, f64::max);
        let threshold = max2 * (1.0 - PIVOT_TIE_RTOL);
        let pivot = (j..cols)
            .filter(|&c| norms2[c - j] >= threshold)
            .min_by_key(|&c| perm[c])
            .expect("at least one candidate column");
        if pivot != j {
            r.swap_columns(j, pivot);
            perm.swap(j, pivot);
        }

        let x: DVector<f64> = r.column(j).rows(j, rows - j).into_owned();
        let xnorm = x.norm();
        if xnorm == 0.0 {
            reflectors.push(None);
            continue;
        }
        let alpha = if x[0] >= 0.0 { -xnorm } else { xnorm };
        let mut v = x;
        v[0] -= alpha;
        let vnorm = v.norm();
        if vnorm == 0.0 {
            reflectors.push(None);
            continue;
        }
        v /= vnorm;
        {
            let mut block = r.view_mut((j, j), (rows - j, cols - j));
            let w = block.tr_mul(&v);
            block.ger(-2.0, &v, &w, 1.0);
        }
        r[(j, j)] = alpha;
        for i in j + 1..rows {
            r[(i, j)] = 0.0;
        }
        reflectors.push(Some(v));
    }

    let mut q = DMatrix::identity(rows, k);
    for (j, v) in reflectors.iter().enumerate().rev() {
        if let Some(v) = v {
            let mut block = q.view_mut((j, 0), (rows - j, k));
            let w = block.tr_mul(v);
            block.ger(-2.0, v, &w, 1.0);
        }
    }
    let r = r.rows(0, k).into_owned();

    Ok(PivotedQR {
        q: DenseMatrix(q),
        r: DenseMatrix(r),
        perm,
    })
}

/// Thin singular value decomposition `A = U diag(s) V^T`.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DenseMatrix,
    /// Descending, nonnegative, length min(rows, cols).
    pub s: Vec<f64>,
    pub v: DenseMatrix,
}

/// One-sided (Hestenes) Jacobi on the columns of a tall matrix `a` (rows >=
/// cols). Returns `(U, s, V)` with `a = U diag(s) V^T`, `s` descending, and
/// `U` completed to orthonormal columns where `s` vanishes.
fn jacobi_svd_tall(a: &DMatrix<f64>, want_u: bool) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    const MAX_SWEEPS: usize = 80;
    let (rows, cols) = a.shape();
    let mut u = a.clone();
    let mut v = DMatrix::<f64>::identity(cols, cols);
    let tol = f64::EPSILON * (rows as f64).sqrt();
    // columns below this squared norm are numerically zero
    let negligible = (f64::EPSILON * a.norm()).powi(2);
    let mut converged = cols < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..cols - 1 {
            for q in p + 1..cols {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (u.column(p), u.column(q));
                    (cp.norm_squared(), cq.norm_squared(), cp.dot(&cq))
                };
                if alpha <= negligible || beta <= negligible || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = c * t;
                rotate_columns(&mut u, p, q, c, sn);
                rotate_columns(&mut v, p, q, c, sn);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::Contract("Jacobi SVD did not converge".into()));
    }

    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<f64> = (0..cols).map(|j| u.column(j).norm()).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let v = DMatrix::from_fn(cols, cols, |i, k| v[(i, order[k])]);
    if !want_u {
        return Ok((DMatrix::zeros(0, 0), s, v));
    }
    let s_max = s.first().copied().unwrap_or(0.0);
    let floor = default_rank_tol(rows, cols, s_max);
    let mut out = DMatrix::zeros(rows, cols);
    let mut missing = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        if s[k] > floor && s[k] > 0.0 {
            out.set_column(k, &(u.column(j) / s[k]));
        } else {
            missing.push(k);
        }
    }
    complete_orthonormal(&mut out, &missing);
    Ok((out, s, v))
}

fn rotate_columns(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let (x, y) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = c * x - s * y;
        m[(i, q)] = s * x + c * y;
    }
}

/// Fills the listed columns with unit vectors orthogonal to every other
/// column, drawing candidates from the standard basis.
fn complete_orthonormal(q: &mut DMatrix<f64>, missing: &[usize]) {
    let rows = q.nrows();
    let mut filled: Vec<bool> = vec![true; q.ncols()];
    for &k in missing {
        filled[k] = false;
        q.column_mut(k).fill(0.0);
    }
    let mut candidate = 0;
    for &k in missing {
        while candidate < rows {
            let mut w = DVector::<f64>::zeros(rows);
            w[candidate] = 1.0;
            candidate += 1;
            // two Gram-Schmidt passes
            for _ in 0..2 {
                for j in (0..q.ncols()).filter(|&j| filled[j]) {
                    let proj = q.column(j).dot(&w);
                    w.axpy(-proj, &q.column(j), 1.0);
                }
            }
            let n = w.norm();
            if n > 0.5 {
                q.set_column(k, &(w / n));
                filled[k] = true;
                break;
            }
        }
    }
}

fn svd_parts(a: &DMatrix<f64>, want_u: bool, want_v: bool) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    if a.nrows() >= a.ncols() {
        jacobi_svd_tall(a, want_u)
    } else {
        let (v, s, u) = jacobi_svd_tall(&a.transpose(), want_v)?;
        Ok((u, s, v))
    }
}

pub fn svd_thin(a: &DenseMatrix) -> Result<ThinSvd> {
    if a.is_empty() {
        return Err(Error::dim("SVD of an empty matrix"));
    }
    let (u, s, v) = svd_parts(&a.0, true, true)?;
    Ok(ThinSvd {
        u: DenseMatrix(u),
        s,
        v: DenseMatrix(v),
    })
}

/// Singular values only, descending.
pub fn singular_values(a: &DenseMatrix) -> Result<Vec<f64>> {
    if a.is_empty() {
        return Err(Error::dim("SVD of an empty matrix"));
    }
    Ok(svd_parts(&a.0, false, false)?.1)
}

/// Left singular vectors and singular values of a wide matrix, computed
/// through the right singular vectors of its transpose so the `K x K` factor
/// of a snapshot matrix is never formed.
pub fn left_singular(a: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>)> {
    if a.is_empty() {
        return Err(Error::dim("SVD of an empty matrix"));
    }
    if a.rows() > a.cols() {
        let t = svd_thin(a)?;
        return Ok((t.u, t.s));
    }
    // A^T = Q R shares its right singular vectors with the small factor R
    let at = a.0.transpose();
    let (_, s, v) = if a.cols() > 2 * a.rows() {
        jacobi_svd_tall(&at.qr().r(), false)?
    } else {
        jacobi_svd_tall(&at, false)?
    };
    Ok((DenseMatrix(v), s))
}

/// `max(rows, cols) * eps * s_max`.
pub fn default_rank_tol(rows: usize, cols: usize, s_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * s_max
}

/// Number of singular values above `tol` (default tolerance when `None`).
pub fn numerical_rank(s: &[f64], rows: usize, cols: usize, tol: Option<f64>) -> usize {
    let s_max = s.first().copied().unwrap_or(0.0);
    let tol = tol.unwrap_or_else(|| default_rank_tol(rows, cols, s_max));
    s.iter().filter(|&&v| v > tol).count()
}

/// Moore-Penrose pseudo-inverse. Singular values at or below `rank_tol` are
/// treated as zero; `None` selects [`default_rank_tol`].
pub fn pinv(a: &DenseMatrix, rank_tol: Option<f64>) -> Result<DenseMatrix> {
    if let Some(t) = rank_tol {
        if !(t >= 0.0) {
            return Err(Error::Input(format!("rank tolerance {t} must be >= 0")));
        }
    }
    if a.is_empty() {
        return Ok(DenseMatrix::zeros(a.cols(), a.rows()));
    }
    let ThinSvd { u, s, v } = svd_thin(a)?;
    let tol = rank_tol.unwrap_or_else(|| default_rank_tol(a.rows(), a.cols(), s[0]));
    let mut out = DMatrix::zeros(a.cols(), a.rows());
    for (i, &si) in s.iter().enumerate() {
        if si > tol {
            out.ger(1.0 / si, &v.column(i), &u.column(i), 1.0);
        }
    }
    DenseMatrix::new(out)
}

/// Orthonormal basis of the null space of `a`, one basis vector per column.
///
/// For wide matrices the input is padded with zero rows to square shape so the
/// thin SVD produces a complete set of right singular vectors.
pub fn nullspace_orthonormal(a: &DenseMatrix, rank_tol: Option<f64>) -> Result<DenseMatrix> {
    let (rows, cols) = (a.rows(), a.cols());
    if cols == 0 {
        return Ok(DenseMatrix::zeros(0, 0));
    }
    if rows == 0 {
        return Ok(DenseMatrix::identity(cols));
    }
    let padded = if rows < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(&a.0);
        DenseMatrix(p)
    } else {
        a.clone()
    };
    let ThinSvd { s, v, .. } = svd_thin(&padded)?;
    let tol = rank_tol.unwrap_or_else(|| default_rank_tol(rows, cols, s[0]));
    let rank = s.iter().filter(|&&si| si > tol).count();
    Ok(DenseMatrix(v.0.columns(rank, cols - rank).into_owned()))
}

/// Largest singular value.
pub fn spectral_norm(a: &DenseMatrix) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::dim("spectral norm of an empty matrix"));
    }
    Ok(singular_values(a)?[0])
}

/// Eigenvalues of a symmetric matrix, descending.
pub fn symmetric_eigenvalues(a: &DenseMatrix) -> Result<Vec<f64>> {
    if a.rows() != a.cols() {
        return Err(Error::dim(format!(
            "eigenvalues of a non-square {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    if a.is_empty() {
        return Ok(Vec::new());
    }
    let mut m = (&a.0 + a.0.transpose()) * 0.5;
    jacobi_eigen_in_place(&mut m)?;
    let mut vals: Vec<f64> = m.diagonal().iter().copied().collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    Ok(vals)
}

/// Cyclic Jacobi rotations until the off-diagonal part is negligible; the
/// eigenvalues are left on the diagonal.
fn jacobi_eigen_in_place(m: &mut DMatrix<f64>) -> Result<()> {
    const MAX_SWEEPS: usize = 100;
    let n = m.nrows();
    let scale = m.norm();
    let off_norm = |m: &DMatrix<f64>| {
        let total: f64 = m.iter().map(|v| v * v).sum();
        let diag: f64 = m.diagonal().iter().map(|v| v * v).sum();
        (total - diag).max(0.0).sqrt()
    };
    for _ in 0..MAX_SWEEPS {
        if off_norm(m) <= 1e-2 * f64::EPSILON * scale {
            return Ok(());
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate_columns(m, p, q, c, s);
                rotate_rows(m, p, q, c, s);
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
            }
        }
    }
    if off_norm(m) <= 1e-12 * scale {
        return Ok(());
    }
    Err(Error::Contract("Jacobi eigensolver did not converge".into()))
}

fn rotate_rows(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for j in 0..m.ncols() {
        let (x, y) = (m[(p, j)], m[(q, j)]);
        m[(p, j)] = c * x - s * y;
        m[(q, j)] = s * x + c * y;
    }
}

/// Frobenius norm of `Q^T Q - I`.
pub fn orthonormality_defect(q: &DMatrix<f64>) -> f64 {
    let k = q.ncols();
    (q.tr_mul(q) - DMatrix::<f64>::identity(k, k)).norm()
}
