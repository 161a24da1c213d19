//! Bundled example problems, written by `demo-problems`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use sphereqp::cgevd::CgevdProblem;
use sphereqp::random::{random_matrix, random_orthonormal, random_symmetric, random_unit_vector, random_vector, rng};
use sphereqp::tensor::SymTensor4;
use sphereqp::SymmetricMatrix;

use crate::error::CliResult;
use crate::problem::{rows_of, Dims, FileOptions, Kind, ProblemFile, TensorData};

fn diag(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(values))
}

/// Indefinite 2×2 problem whose minimizers form a sign pair.
pub fn example2() -> ProblemFile {
    ProblemFile {
        q: Some(rows_of(&diag(&[-1.0, 1.0]))),
        b: Some(vec![0.0, 1.8]),
        ..ProblemFile::empty(Kind::ScqpIneq)
    }
}

/// Same matrix with a larger linear term; the minimizer is unique.
pub fn example3() -> ProblemFile {
    ProblemFile {
        q: Some(rows_of(&diag(&[-1.0, 1.0]))),
        b: Some(vec![0.0, 3.0]),
        ..ProblemFile::empty(Kind::Scqp)
    }
}

/// A QCQP whose only constraint is the unit sphere.
pub fn single_sphere(seed: u64) -> ProblemFile {
    let mut r = rng(seed);
    let k = 6;
    ProblemFile {
        q: Some(rows_of(random_symmetric(&mut r, k).as_matrix())),
        b: Some(random_vector(&mut r, k).as_slice().to_vec()),
        h: Some(vec![rows_of(&DMatrix::identity(k, k))]),
        ..ProblemFile::empty(Kind::Qcqp)
    }
}

/// `K = 10`, three ellipsoids through a common random unit vector.
pub fn planted_qcqp(seed: u64) -> ProblemFile {
    let mut r = rng(seed);
    let (k, m) = (10, 3);
    let a = random_matrix(&mut r, k, k);
    let q = a.transpose() * &a;
    let b = random_vector(&mut r, k);
    let point = random_unit_vector(&mut r, k);
    let h = (0..m)
        .map(|_| {
            let kappa = 10f64.powf(r.random_range(1.0..4.0));
            let u = random_orthonormal(&mut r, k, k);
            let d = DVector::from_fn(k, |i, _| kappa.powf(i as f64 / (k - 1) as f64));
            let hm = &u * DMatrix::from_diagonal(&d) * u.transpose();
            let hm = (&hm + hm.transpose()) * 0.5;
            let scale = point.dot(&(&hm * &point));
            rows_of(&(hm / scale))
        })
        .collect();
    ProblemFile {
        q: Some(rows_of(&q)),
        b: Some(b.as_slice().to_vec()),
        h: Some(h),
        options: Some(FileOptions {
            gamma_fraction: Some(0.01),
            carrier: Some("frobenius".into()),
            ..FileOptions::default()
        }),
        ..ProblemFile::empty(Kind::Qcqp)
    }
}

/// Exact rank-1 tensor `v⁽⁴⁾` with a random unit `v`.
pub fn v4(seed: u64) -> ProblemFile {
    let mut r = rng(seed);
    let dim = 4;
    let v = random_unit_vector(&mut r, dim);
    ProblemFile {
        tensor: Some(TensorData {
            dim,
            data: SymTensor4::rank1(1.0, &v).to_flat(),
            symmetrize: false,
            normalize: false,
        }),
        ..ProblemFile::empty(Kind::Rank1Sym4)
    }
}

fn regression(seed: u64, rows: usize, cols: usize) -> ProblemFile {
    let mut r = rng(seed);
    let a = random_matrix(&mut r, rows, cols);
    let y = random_vector(&mut r, rows);
    let floor = sphereqp::regression::residual_floor(&a, &y).expect("finite data");
    ProblemFile {
        a: Some(rows_of(&a)),
        y: Some(y.as_slice().to_vec()),
        delta: Some(floor + 0.5 * (y.norm() - floor)),
        ..ProblemFile::empty(Kind::BoundedRegression)
    }
}

pub fn regression_tall(seed: u64) -> ProblemFile {
    regression(seed, 20, 5)
}

pub fn regression_wide(seed: u64) -> ProblemFile {
    regression(seed, 5, 12)
}

/// Between- and within-class scatter of three Gaussian classes in 12
/// dimensions, as a minimization with a `4 × 3` structure.
pub fn discriminant(seed: u64) -> CliResult<ProblemFile> {
    let mut r = rng(seed);
    let (i, j, classes, per_class) = (4, 3, 3, 30);
    let n = i * j;
    let mix = random_matrix(&mut r, n, n) / (n as f64).sqrt();
    let mut means = Vec::with_capacity(classes);
    let mut within = DMatrix::zeros(n, n);
    for _ in 0..classes {
        let mean = random_vector(&mut r, n) * 2.0;
        let samples: Vec<DVector<f64>> = (0..per_class)
            .map(|_| &mean + &mix * random_vector(&mut r, n))
            .collect();
        let mu = samples.iter().fold(DVector::zeros(n), |a, s| a + s) / per_class as f64;
        for s in &samples {
            let d = s - &mu;
            within += &d * d.transpose();
        }
        means.push(mu);
    }
    let grand = means.iter().fold(DVector::zeros(n), |a, m| a + m) / classes as f64;
    let mut between = DMatrix::zeros(n, n);
    for m in &means {
        let d = m - &grand;
        between += &d * d.transpose() * per_class as f64;
    }
    let dims = Dims { i, j, r: 2, s: 2 };
    let (p, _) = CgevdProblem::maximizing(
        SymmetricMatrix::new(between)?,
        SymmetricMatrix::new(within)?,
        dims.i,
        dims.j,
        dims.r,
        dims.s,
    )?;
    Ok(ProblemFile {
        q: Some(rows_of(p.q().as_matrix())),
        bmat: Some(rows_of(p.b().as_matrix())),
        dims: Some(dims),
        ..ProblemFile::empty(Kind::Cgevd)
    })
}

/// File names and contents written by `demo-problems`.
pub fn all(seed: u64) -> CliResult<Vec<(&'static str, ProblemFile)>> {
    Ok(vec![
        ("example2.json", example2()),
        ("example3.json", example3()),
        ("single_sphere.json", single_sphere(seed)),
        ("planted_qcqp.json", planted_qcqp(seed)),
        ("v4.json", v4(seed)),
        ("regression_tall.json", regression_tall(seed)),
        ("regression_wide.json", regression_wide(seed)),
        ("discriminant.json", discriminant(seed)?),
    ])
}
