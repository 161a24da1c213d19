//! Seeded generators for random test instances and solver initialization.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::SymmetricMatrix;

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn random_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Uniformly distributed point on the unit sphere.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    loop {
        let v = random_vector(rng, n);
        let nrm = v.norm();
        if nrm > 1e-12 {
            return v / nrm;
        }
    }
}

/// Symmetric matrix with i.i.d. Gaussian upper triangle.
pub fn random_symmetric<R: Rng + ?Sized>(rng: &mut R, n: usize) -> SymmetricMatrix {
    let a = random_matrix(rng, n, n);
    SymmetricMatrix::new(&a + a.transpose()).expect("finite square matrix")
}

/// `AᵀA + I` for Gaussian `A`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, n: usize) -> SymmetricMatrix {
    let a = random_matrix(rng, n, n);
    SymmetricMatrix::new(a.transpose() * &a + DMatrix::identity(n, n)).expect("finite square matrix")
}

/// Matrix with orthonormal columns (Q factor of a Gaussian matrix).
pub fn random_orthonormal<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    assert!(cols <= rows, "cannot fit {cols} orthonormal columns in dimension {rows}");
    let a = random_matrix(rng, rows, cols);
    let q = a.qr().q();
    q.columns(0, cols).into_owned()
}

/// Positive definite matrix with a random eigenbasis and eigenvalues
/// log-spaced from 1 to `condition`.
pub fn random_psd_with_condition<R: Rng + ?Sized>(rng: &mut R, n: usize, condition: f64) -> SymmetricMatrix {
    let u = random_orthonormal(rng, n, n);
    let d = DVector::from_fn(n, |i, _| {
        let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
        condition.powf(t)
    });
    SymmetricMatrix::new(&u * DMatrix::from_diagonal(&d) * u.transpose()).expect("finite square matrix")
}
