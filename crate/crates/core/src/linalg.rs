//! Dense linear-algebra kernels shared by the solvers.
//!
//! Everything is backed by `nalgebra` dense storage. Eigenvalues come back
//! ascending, singular values descending, and symmetric inputs are always
//! re-symmetrized before use.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Square real matrix that is symmetric by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    /// Wraps `m` after checking it is square and finite, replacing it by
    /// `(m + mᵀ) / 2`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                what: "symmetric matrix columns",
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("matrix has non-finite entries"));
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(SymmetricMatrix(sym))
    }

    pub fn from_row_slice(order: usize, data: &[f64]) -> Result<Self> {
        if data.len() != order * order {
            return Err(Error::DimensionMismatch {
                what: "symmetric matrix entries",
                expected: order * order,
                got: data.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(order, order, data))
    }

    pub fn identity(order: usize) -> Self {
        SymmetricMatrix(DMatrix::identity(order, order))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymmetricMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn scaled(&self, factor: f64) -> Self {
        SymmetricMatrix(&self.0 * factor)
    }

    /// `xᵀ M x`
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.0 * x))
    }
}

impl AsRef<DMatrix<f64>> for SymmetricMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Eigen-decomposition `M = U diag(σ) Uᵀ` with σ ascending.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn order(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let u = &self.eigenvectors;
        u * DMatrix::from_diagonal(&self.eigenvalues) * u.transpose()
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
pub fn sym_evd(m: &SymmetricMatrix) -> Result<Spectrum> {
    let n = m.order();
    if n == 0 {
        return Ok(Spectrum {
            eigenvalues: DVector::zeros(0),
            eigenvectors: DMatrix::zeros(0, 0),
        });
    }
    if m.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let eig = m.0.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
    })
}

/// Lower-triangular Cholesky factor `F` with `F Fᵀ = M`.
///
/// With `jitter = Some(eps)` the factorization is applied to
/// `M + eps · trace(M)/n · I` instead.
pub fn cholesky(m: &SymmetricMatrix, jitter: Option<f64>) -> Result<DMatrix<f64>> {
    let n = m.order();
    let mut a = m.0.clone();
    if let Some(eps) = jitter {
        let shift = eps * a.trace() / n.max(1) as f64;
        for i in 0..n {
            a[(i, i)] += shift;
        }
    }
    // Plain column-oriented factorization so the failing pivot can be reported.
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / djj;
        }
    }
    Ok(l)
}

/// Thin SVD `A = U diag(s) Vᵀ` with singular values sorted descending.
/// `U` is `m × p`, `V` is `n × p`, `p = min(m, n)`.
///
/// Computed by one-sided Jacobi rotations, which stay accurate on exactly
/// rank-deficient input.
pub fn thin_svd(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let (m, n) = a.shape();
    if m < n {
        let (u, s, v) = thin_svd(&a.transpose())?;
        return Ok((v, s, u));
    }
    if n == 0 {
        return Ok((DMatrix::zeros(m, 0), DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _ in 0..80 {
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut w, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let smax = norms[order[0]];
    let mut u = DMatrix::zeros(m, n);
    let mut vv = DMatrix::zeros(n, n);
    let mut s = DVector::zeros(n);
    let mut missing = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        s[dst] = norms[src];
        vv.set_column(dst, &v.column(src));
        if norms[src] > 0.0 && norms[src] > smax * f64::EPSILON * m as f64 {
            u.set_column(dst, &(w.column(src) / norms[src]));
        } else {
            missing.push(dst);
        }
    }
    complete_orthonormal(&mut u, &missing);
    Ok((u, s, vv))
}

fn rotate_columns(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let a = m[(i, p)];
        let b = m[(i, q)];
        m[(i, p)] = c * a - s * b;
        m[(i, q)] = s * a + c * b;
    }
}

/// Fills the listed columns of `u` with unit vectors orthogonal to all the
/// other columns.
fn complete_orthonormal(u: &mut DMatrix<f64>, missing: &[usize]) {
    let m = u.nrows();
    let mut filled: Vec<usize> = (0..u.ncols()).filter(|j| !missing.contains(j)).collect();
    let mut candidate = 0;
    for &col in missing {
        while candidate < m {
            let mut e = DVector::zeros(m);
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for &j in &filled {
                    let d = u.column(j).dot(&e);
                    e.axpy(-d, &u.column(j), 1.0);
                }
            }
            let nrm = e.norm();
            if nrm > 1e-8 {
                u.set_column(col, &(e / nrm));
                filled.push(col);
                break;
            }
        }
    }
}

/// Orthonormal basis of the numerically significant column span of
/// `columns`. Directions with singular value `<= tol · s_max` are dropped;
/// an all-zero input yields an `n × 0` matrix.
pub fn orthonormal_basis(columns: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let n = columns.nrows();
    if columns.ncols() == 0 {
        return Ok(DMatrix::zeros(n, 0));
    }
    let (u, s, _) = thin_svd(columns)?;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return Ok(DMatrix::zeros(n, 0));
    }
    let rank = s.iter().filter(|&&v| v > tol * smax).count();
    Ok(u.columns(0, rank).into_owned())
}

/// Ratio of the largest to the smallest eigenvalue of a psd matrix.
/// Returns `f64::INFINITY` when the smallest eigenvalue is numerically
/// non-positive.
pub fn condition_number(m: &SymmetricMatrix) -> Result<f64> {
    let spec = sym_evd(m)?;
    let n = spec.order();
    if n == 0 {
        return Err(Error::invalid("empty matrix"));
    }
    let lo = spec.eigenvalues[0];
    let hi = spec.eigenvalues[n - 1].max(spec.eigenvalues[0].abs());
    if hi == 0.0 {
        return Err(Error::invalid("zero matrix has no condition number"));
    }
    if lo <= hi * 1e-15 {
        return Ok(f64::INFINITY);
    }
    Ok(hi / lo)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Column-major vectorization.
pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_of`].
pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

/// `x ⊗ x` for a vector.
pub fn outer_vec(x: &DVector<f64>) -> DVector<f64> {
    vec_of(&(x * x.transpose()))
}

/// Solves `L v = rhs` for lower-triangular `L`.
pub fn solve_lower(l: &DMatrix<f64>, rhs: &DMatrix<f64>) -> DMatrix<f64> {
    l.solve_lower_triangular(rhs)
        .expect("triangular factor has nonzero diagonal")
}

/// Solves `Lᵀ v = rhs` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &DMatrix<f64>, rhs: &DMatrix<f64>) -> DMatrix<f64> {
    l.tr_solve_lower_triangular(rhs)
        .expect("triangular factor has nonzero diagonal")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_matrix, random_spd, random_symmetric, rng};

    #[test]
    fn evd_identity() {
        let s = sym_evd(&SymmetricMatrix::identity(3)).unwrap();
        assert_eq!(s.eigenvalues.as_slice(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn evd_diag_example() {
        let s = sym_evd(&SymmetricMatrix::from_diagonal(&[0.0, -1.0, 1.0])).unwrap();
        assert_eq!(s.eigenvalues.as_slice(), &[-1.0, 0.0, 1.0]);
        // columns are signed unit basis vectors e2, e1, e3
        for (col, axis) in [(0, 1), (1, 0), (2, 2)] {
            assert!((s.eigenvectors[(axis, col)].abs() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn evd_reconstructs_random() {
        let mut r = rng(1);
        for n in [5, 40, 200] {
            let m = random_symmetric(&mut r, n);
            let s = sym_evd(&m).unwrap();
            let rel = (s.reconstruct() - m.as_matrix()).norm() / m.as_matrix().norm();
            assert!(rel < 1e-8, "n={n} rel={rel}");
            let ortho = (s.eigenvectors.transpose() * &s.eigenvectors - DMatrix::identity(n, n)).norm();
            assert!(ortho < 1e-10);
            assert!(s.eigenvalues.as_slice().windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn evd_rejects_nan() {
        let m = SymmetricMatrix::new(DMatrix::from_element(2, 2, f64::NAN));
        assert!(matches!(m, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn cholesky_cases() {
        let f = cholesky(&SymmetricMatrix::identity(3), None).unwrap();
        assert_eq!(f, DMatrix::identity(3, 3));
        let f = cholesky(&SymmetricMatrix::identity(3).scaled(4.0), None).unwrap();
        assert!((f - DMatrix::identity(3, 3) * 2.0).norm() < 1e-15);
        let mut r = rng(2);
        let m = random_spd(&mut r, 12);
        let f = cholesky(&m, None).unwrap();
        let rel = (&f * f.transpose() - m.as_matrix()).norm() / m.as_matrix().norm();
        assert!(rel < 1e-10);
    }

    #[test]
    fn cholesky_semidefinite_needs_jitter() {
        let m = SymmetricMatrix::from_diagonal(&[1.0, 0.0]);
        assert!(matches!(
            cholesky(&m, None),
            Err(Error::NotPositiveDefinite { pivot: 1, .. })
        ));
        assert!(cholesky(&m, Some(1e-8)).is_ok());
    }

    #[test]
    fn svd_cases() {
        let (_, s, _) = thin_svd(&DMatrix::identity(4, 4)).unwrap();
        assert!(s.iter().all(|&v| (v - 1.0).abs() < 1e-14));

        let u = DVector::from_vec(vec![0.6, 0.8, 0.0]);
        let v = DVector::from_vec(vec![0.0, 1.0]);
        let (_, s, _) = thin_svd(&(&u * v.transpose())).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-14 && s[1].abs() < 1e-14);

        let mut r = rng(3);
        let a = random_matrix(&mut r, 6, 3);
        let (uu, s, vv) = thin_svd(&a).unwrap();
        let rec = &uu * DMatrix::from_diagonal(&s) * vv.transpose();
        assert!((rec - &a).norm() / a.norm() < 1e-8);
        assert!(s[0] >= s[1] && s[1] >= s[2]);
        let wide = a.transpose();
        let (uu, s, vv) = thin_svd(&wide).unwrap();
        assert_eq!((uu.shape(), vv.shape()), ((3, 3), (6, 3)));
        assert!((&uu * DMatrix::from_diagonal(&s) * vv.transpose() - &wide).norm() < 1e-10);
    }

    #[test]
    fn basis_cases() {
        assert_eq!(orthonormal_basis(&DMatrix::zeros(4, 3), 1e-12).unwrap().ncols(), 0);
        let b = orthonormal_basis(&DMatrix::identity(3, 3), 1e-12).unwrap();
        assert_eq!(b.ncols(), 3);
        assert!((b.transpose() * &b - DMatrix::identity(3, 3)).norm() < 1e-12);

        let v = DVector::from_vec(vec![1.0, 2.0, 2.0]);
        let dup = DMatrix::from_columns(&[v.clone(), v.clone()]);
        let b = orthonormal_basis(&dup, 1e-12).unwrap();
        assert_eq!(b.ncols(), 1);
        let unit = &v / v.norm();
        assert!((b.column(0).dot(&unit).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn basis_projects_inputs_onto_themselves() {
        let mut r = rng(4);
        let a = random_matrix(&mut r, 9, 3);
        let cols = DMatrix::from_columns(&[
            a.column(0).into_owned(),
            a.column(1).into_owned(),
            a.column(2).into_owned(),
            a.column(0) * 2.0 - a.column(1),
        ]);
        let b = orthonormal_basis(&cols, 1e-12).unwrap();
        assert_eq!(b.ncols(), 3);
        assert!((b.transpose() * &b - DMatrix::identity(3, 3)).norm() < 1e-10);
        let proj = &b * (b.transpose() * &cols);
        assert!((proj - &cols).norm() < 1e-8);
    }

    #[test]
    fn condition_numbers() {
        assert_eq!(condition_number(&SymmetricMatrix::identity(3)).unwrap(), 1.0);
        let c = condition_number(&SymmetricMatrix::from_diagonal(&[1.0, 100.0])).unwrap();
        assert!((c - 100.0).abs() < 1e-12);
        let c = condition_number(&SymmetricMatrix::from_diagonal(&[1.0, 1e-18])).unwrap();
        assert!(c.is_infinite());
        assert!(condition_number(&SymmetricMatrix::from_diagonal(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn vec_roundtrip_and_kron() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(vec_of(&m).as_slice(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert_eq!(unvec(&vec_of(&m), 2, 3), m);
        let x = DVector::from_vec(vec![1.0, 2.0]);
        let xx = outer_vec(&x);
        let k = kron(&DMatrix::from_column_slice(2, 1, x.as_slice()), &DMatrix::from_column_slice(2, 1, x.as_slice()));
        assert_eq!(xx.as_slice(), k.as_slice());
    }

    #[test]
    fn svd_exact_rank_deficiency() {
        // Third column is an exact combination of the first two.
        let mut r = rng(31);
        let a = random_matrix(&mut r, 100, 2);
        let c = a.column(0) * 0.3 - a.column(1) * 0.7;
        let m = DMatrix::from_columns(&[a.column(0).into_owned(), a.column(1).into_owned(), c]);
        let (u, s, v) = thin_svd(&m).unwrap();
        let recon = &u * DMatrix::from_diagonal(&s) * v.transpose();
        assert!((recon - &m).norm() < 1e-13 * m.norm());
        assert!((u.transpose() * &u - DMatrix::identity(3, 3)).norm() < 1e-13);
        assert!(s[2] < 1e-14 * s[0]);
        let basis = orthonormal_basis(&m, 1e-11).unwrap();
        assert_eq!(basis.ncols(), 2);
        assert!((&m - &basis * (basis.transpose() * &m)).norm() < 1e-13 * m.norm());
    }
}
