//! Synthetic image deblurring with a unit-norm image and a scalar gain.
//!
//! The estimate is `αx` with `‖x‖ = 1`. For fixed `x` the best gain is
//! `α = bᵀx / xᵀQx`; for fixed `α` the best `x` minimizes
//! `α²xᵀQx − 2αbᵀx` over the sphere, where `Q = HᵀH` and `b = Hᵀy`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;
use sphereqp::linalg::{sym_evd, vec_of};
use sphereqp::random::rng;
use sphereqp::scqp::{solve_rotated, ScqpOptions};
use sphereqp::SymmetricMatrix;

use crate::error::{CliError, CliResult};

/// Pixels above and below each pixel covered by the motion blur.
pub const BLUR_REACH: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeconvSettings {
    pub size: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for DeconvSettings {
    fn default() -> Self {
        DeconvSettings {
            size: 32,
            seed: 0,
            tol: 1e-10,
            max_iters: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeconvReport {
    pub size: usize,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub alpha: f64,
    /// `|α − bᵀx / xᵀQx|` for the final iterate.
    pub alpha_stationarity: f64,
    pub psnr_blurred: f64,
    pub psnr_reconstructed: f64,
    /// `‖y − αHx‖²` after initialization and after every iteration.
    pub objective_trace: Vec<f64>,
    pub max_norm_error: f64,
    #[serde(skip)]
    pub image: DMatrix<f64>,
    #[serde(skip)]
    pub blurred: DMatrix<f64>,
    #[serde(skip)]
    pub reconstructed: DMatrix<f64>,
}

/// Column blur of an `n`-pixel column: each output pixel averages the input
/// pixels up to [`BLUR_REACH`] above and below it, with the window truncated
/// at the image border and the weights renormalized.
pub fn blur_block(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |r, c| {
        let lo = r.saturating_sub(BLUR_REACH);
        let hi = (r + BLUR_REACH).min(n - 1);
        if (lo..=hi).contains(&c) {
            1.0 / (hi - lo + 1) as f64
        } else {
            0.0
        }
    })
}

/// Grayscale test image in `[0, 1]`: a smooth background with seeded
/// rectangles and discs.
pub fn synthetic_image(n: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    let nf = n as f64;
    let mut img = DMatrix::from_fn(n, n, |i, j| 0.15 + 0.25 * (i as f64 + 0.5 * j as f64) / (1.5 * nf));
    for _ in 0..3 {
        let (r0, c0) = (r.random_range(0..n / 2), r.random_range(0..n / 2));
        let (h, w) = (r.random_range(n / 8..n / 2), r.random_range(n / 8..n / 2));
        let level: f64 = r.random_range(0.4..0.95);
        for i in r0..(r0 + h).min(n) {
            for j in c0..(c0 + w).min(n) {
                img[(i, j)] = level;
            }
        }
    }
    for _ in 0..2 {
        let (ci, cj) = (r.random_range(0.2..0.8) * nf, r.random_range(0.2..0.8) * nf);
        let rad = r.random_range(0.08..0.2) * nf;
        let level: f64 = r.random_range(0.0..1.0);
        for i in 0..n {
            for j in 0..n {
                let (di, dj) = (i as f64 - ci, j as f64 - cj);
                if di * di + dj * dj <= rad * rad {
                    img[(i, j)] = level;
                }
            }
        }
    }
    img
}

/// Peak signal-to-noise ratio in dB for images with peak value 1.
pub fn psnr(reference: &DMatrix<f64>, estimate: &DMatrix<f64>) -> f64 {
    let mse = (reference - estimate).norm_squared() / reference.len() as f64;
    10.0 * (1.0 / mse).log10()
}

pub fn run(settings: &DeconvSettings) -> CliResult<DeconvReport> {
    let n = settings.size;
    if !(16..=64).contains(&n) {
        return Err(CliError::field("size", format!("must lie in 16..=64, got {n}")));
    }
    let image = synthetic_image(n, settings.seed);
    let hb = blur_block(n);
    let blurred = &hb * &image;

    // Q = I ⊗ HbᵀHb acts on each image column; its eigenbasis is V in every
    // column, so rotated coordinates are the entries of VᵀX, ordered by
    // eigenvalue (row-major).
    let spec = sym_evd(&SymmetricMatrix::new(hb.transpose() * &hb)?)?;
    let v = spec.eigenvectors.clone();
    let lambda = DVector::from_iterator(n * n, (0..n * n).map(|p| spec.eigenvalues[p / n]));
    let rotate = |m: &DMatrix<f64>| DVector::from_column_slice((v.transpose() * m).transpose().as_slice());
    let unrotate = |w: &DVector<f64>| vec_of(&(&v * DMatrix::from_row_slice(n, n, w.as_slice())));

    let bmat = hb.transpose() * &blurred;
    let b = vec_of(&bmat);
    let beta = rotate(&bmat);
    let qform = |x: &DVector<f64>| (&hb * DMatrix::from_column_slice(n, n, x.as_slice())).norm_squared();
    let objective = |alpha: f64, x: &DVector<f64>| {
        (&blurred - &hb * DMatrix::from_column_slice(n, n, x.as_slice()) * alpha).norm_squared()
    };

    let floor = blurred.norm_squared();
    let mut x = &b / b.norm();
    let mut alpha = b.dot(&x) / qform(&x);
    let mut trace = vec![objective(alpha, &x)];
    let mut converged = false;
    let mut iterations = 0;
    let mut max_norm_error: f64 = 0.0;
    let opts = ScqpOptions::default();
    for it in 1..=settings.max_iters {
        iterations = it;
        let sigma = &lambda * (2.0 * alpha * alpha);
        let lin = &beta * (-2.0 * alpha);
        x = solve_rotated(&sigma, &lin, unrotate, &opts)?.x;
        max_norm_error = max_norm_error.max((x.norm() - 1.0).abs());
        alpha = b.dot(&x) / qform(&x);
        let f = objective(alpha, &x);
        let prev = *trace.last().expect("trace starts with the initial objective");
        trace.push(f);
        if (prev - f).abs() <= settings.tol * prev.abs().max(f64::EPSILON * floor) {
            converged = true;
            break;
        }
    }
    let reconstructed = DMatrix::from_column_slice(n, n, x.as_slice()) * alpha;
    Ok(DeconvReport {
        size: n,
        seed: settings.seed,
        iterations,
        converged,
        alpha_stationarity: (alpha - b.dot(&x) / qform(&x)).abs(),
        alpha,
        psnr_blurred: psnr(&image, &blurred),
        psnr_reconstructed: psnr(&image, &reconstructed),
        objective_trace: trace,
        max_norm_error,
        image,
        blurred,
        reconstructed,
    })
}
