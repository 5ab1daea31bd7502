//! Dense symmetric-matrix kernel.
//!
//! Every covariance, noise matrix and multiplier in the crate is a [`SymMatrix`].
//! The dimensions involved are antenna counts (at most a handful), so the
//! eigensolver is a cyclic Jacobi sweep: slow asymptotically but accurate to
//! machine precision on the small, possibly rank-deficient matrices the solvers
//! produce.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Maximum number of full Jacobi sweeps before giving up.
const MAX_SWEEPS: usize = 64;

/// Real symmetric matrix. Symmetry is enforced on construction by averaging
/// the matrix with its transpose, so `get(i, j) == get(j, i)` holds bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidInput("matrix dimension must be at least 1".into()));
        }
        Ok(Self::symmetrize(m))
    }

    /// Symmetrizes without checking shape; callers guarantee a square input.
    pub(crate) fn symmetrize(m: DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut out = m;
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = avg;
                out[(j, i)] = avg;
            }
        }
        SymMatrix(out)
    }

    pub fn from_row_slice(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// `scale * v vᵀ`
    pub fn outer(v: &DVector<f64>, scale: f64) -> Self {
        Self::symmetrize(v * v.transpose() * scale)
    }

    /// Gram matrix `Aᵀ A` of an arbitrary (possibly rectangular) matrix.
    pub fn gram(a: &DMatrix<f64>) -> Self {
        Self::symmetrize(a.transpose() * a)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// `A X Aᵀ` for a rectangular `A` with `A.ncols() == self.dim()`.
    pub fn congruence(&self, a: &DMatrix<f64>) -> Self {
        Self::symmetrize(a * &self.0 * a.transpose())
    }

    /// `tr(self · other)` for two symmetric matrices.
    pub fn inner(&self, other: &SymMatrix) -> f64 {
        self.0.component_mul(&other.0).sum()
    }

    /// `vᵀ X v`
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        (v.transpose() * &self.0 * v)[(0, 0)]
    }

    pub fn scale(&self, s: f64) -> Self {
        SymMatrix(&self.0 * s)
    }

    /// `self + s·I`
    pub fn shift(&self, s: f64) -> Self {
        let mut m = self.0.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += s;
        }
        SymMatrix(m)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    fn check_dims(&self, other: &SymMatrix) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.dim(),
                self.dim(),
                other.dim(),
                other.dim()
            )));
        }
        Ok(())
    }
}

impl Add for &SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &rhs.0)
    }
}

impl Add for SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: SymMatrix) -> SymMatrix {
        SymMatrix(self.0 + rhs.0)
    }
}

impl Sub for SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: SymMatrix) -> SymMatrix {
        SymMatrix(self.0 - rhs.0)
    }
}

impl Mul<f64> for &SymMatrix {
    type Output = SymMatrix;
    fn mul(self, rhs: f64) -> SymMatrix {
        self.scale(rhs)
    }
}

impl Neg for &SymMatrix {
    type Output = SymMatrix;
    fn neg(self) -> SymMatrix {
        self.scale(-1.0)
    }
}

/// Eigen-decomposition `A = V diag(λ) Vᵀ` with eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct EigDecomp {
    pub values: DVector<f64>,
    /// Orthonormal eigenvectors stored as columns, matching `values` order.
    pub vectors: DMatrix<f64>,
}

impl EigDecomp {
    /// Rebuilds `V diag(f(λ)) Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let mut scaled = self.vectors.clone();
        for (j, &lam) in self.values.iter().enumerate() {
            let w = f(lam);
            scaled.column_mut(j).scale_mut(w);
        }
        SymMatrix::symmetrize(scaled * self.vectors.transpose())
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.reconstruct_with(|l| l)
    }

    pub fn max(&self) -> f64 {
        self.values[0]
    }

    pub fn min(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn top_vector(&self) -> DVector<f64> {
        self.vectors.column(0).into_owned()
    }
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
pub fn eig_sym(a: &SymMatrix) -> Result<EigDecomp> {
    let n = a.dim();
    let mut m = a.0.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = m.norm();
    if !scale.is_finite() {
        return Err(Error::EigenNoConvergence { sweeps: 0, residual: f64::NAN });
    }
    let threshold = f64::EPSILON * scale;

    let off_norm = |m: &DMatrix<f64>| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += 2.0 * m[(i, j)] * m[(i, j)];
            }
        }
        s.sqrt()
    };

    let mut converged = n == 1;
    let mut sweeps = 0;
    while !converged && sweeps < MAX_SWEEPS {
        if off_norm(&m) <= threshold {
            converged = true;
            break;
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        let residual = off_norm(&m);
        if residual > threshold.max(1e-13 * (1.0 + scale)) || !residual.is_finite() {
            return Err(Error::EigenNoConvergence { sweeps, residual });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| m[(i, i)]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    Ok(EigDecomp { values, vectors })
}

/// Lower-triangular Cholesky factor, or `None` if the matrix is not
/// (numerically) positive definite.
pub fn cholesky(a: &SymMatrix) -> Option<DMatrix<f64>> {
    let n = a.dim();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a.0[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !d.is_finite() || d <= 0.0 {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a.0[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

/// Natural-log determinant of a positive definite matrix.
pub fn logdet_psd(a: &SymMatrix) -> Result<f64> {
    let l = cholesky(a).ok_or(Error::NotPositiveDefinite)?;
    Ok(2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Inverse of a positive definite matrix via its Cholesky factor.
pub fn inverse_pd(a: &SymMatrix) -> Result<SymMatrix> {
    let chol = nalgebra::linalg::Cholesky::new(a.0.clone()).ok_or(Error::NotPositiveDefinite)?;
    Ok(SymMatrix::symmetrize(chol.inverse()))
}

/// Nearest PSD matrix in Frobenius norm: negative eigenvalues are clipped to zero.
pub fn psd_project(a: &SymMatrix) -> Result<SymMatrix> {
    Ok(eig_sym(a)?.reconstruct_with(|l| l.max(0.0)))
}

/// Principal square root of the PSD part of `a`.
pub fn psd_sqrt(a: &SymMatrix) -> Result<SymMatrix> {
    Ok(eig_sym(a)?.reconstruct_with(|l| l.max(0.0).sqrt()))
}

pub fn min_eigenvalue(a: &SymMatrix) -> Result<f64> {
    Ok(eig_sym(a)?.min())
}

/// `a ⪯ b` in the PSD order: the smallest eigenvalue of `b − a` is at least `−tol`.
pub fn psd_leq(a: &SymMatrix, b: &SymMatrix, tol: f64) -> Result<bool> {
    a.check_dims(b)?;
    Ok(min_eigenvalue(&(b - a))? >= -tol)
}

/// Frobenius distance scaled by the reference: `‖a − reference‖_F / (1 + ‖reference‖_F)`.
pub fn rel_distance(a: &SymMatrix, reference: &SymMatrix) -> f64 {
    (a - reference).frobenius_norm() / (1.0 + reference.frobenius_norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m2(a: f64, b: f64, c: f64) -> SymMatrix {
        SymMatrix::from_row_slice(2, &[a, b, b, c]).unwrap()
    }

    #[test]
    fn construction_symmetrizes() {
        let s = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 3.0])).unwrap();
        assert_eq!(s.get(0, 1), 3.0);
        assert_eq!(s.get(1, 0), 3.0);
        assert!(SymMatrix::new(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let e = eig_sym(&SymMatrix::identity(3)).unwrap();
        for v in e.values.iter() {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-15);
        }
        let e = eig_sym(&SymMatrix::from_diagonal(&[1.0, 4.0])).unwrap();
        assert_abs_diff_eq!(e.values[0], 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.values[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.vectors[(1, 0)].abs(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.vectors[(0, 1)].abs(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn eig_two_by_two_characteristic_polynomial() {
        // λ² − 4λ + 3 = 0
        let e = eig_sym(&m2(2.0, 1.0, 2.0)).unwrap();
        assert_abs_diff_eq!(e.values[0], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.values[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn eig_rejects_non_finite() {
        let bad = m2(f64::NAN, 0.0, 1.0);
        assert!(matches!(eig_sym(&bad), Err(Error::EigenNoConvergence { .. })));
    }

    #[test]
    fn logdet_examples() {
        assert_abs_diff_eq!(logdet_psd(&SymMatrix::identity(4)).unwrap(), 0.0);
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(logdet_psd(&SymMatrix::from_diagonal(&[e, e])).unwrap(), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(logdet_psd(&m2(2.0, 1.0, 2.0)).unwrap(), 3f64.ln(), epsilon = 1e-14);
        assert_eq!(logdet_psd(&m2(1.0, 2.0, 1.0)), Err(Error::NotPositiveDefinite));
    }

    #[test]
    fn projection_examples() {
        let p = psd_project(&SymMatrix::from_diagonal(&[1.0, -1.0])).unwrap();
        assert!(rel_distance(&p, &SymMatrix::from_diagonal(&[1.0, 0.0])) < 1e-15);
        let p = psd_project(&m2(0.0, 1.0, 0.0)).unwrap();
        assert!(rel_distance(&p, &m2(0.5, 0.5, 0.5)) < 1e-15);
        let psd = m2(2.0, 1.0, 2.0);
        assert!(rel_distance(&psd_project(&psd).unwrap(), &psd) < 1e-10);
    }

    #[test]
    fn psd_order_examples() {
        let i = SymMatrix::identity(2);
        assert!(psd_leq(&i, &i.scale(2.0), 0.0).unwrap());
        assert!(!psd_leq(&i.scale(2.0), &i, 1e-9).unwrap());
        let a = SymMatrix::from_diagonal(&[1.0, 0.0]);
        assert!(psd_leq(&a, &a, 0.0).unwrap());
        assert!(psd_leq(&a, &SymMatrix::identity(3), 0.0).is_err());
    }

    #[test]
    fn inverse_and_sqrt() {
        let a = m2(2.0, 1.0, 2.0);
        let inv = inverse_pd(&a).unwrap();
        let prod = a.as_matrix() * inv.as_matrix();
        assert!((prod - DMatrix::identity(2, 2)).norm() < 1e-14);
        let r = psd_sqrt(&a).unwrap();
        let sq = SymMatrix::symmetrize(r.as_matrix() * r.as_matrix());
        assert!(rel_distance(&sq, &a) < 1e-14);
    }
}
