//! Brute-force reference solutions used to check the solvers.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Product of two polynomials given as coefficient lists, highest degree first.
pub fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    let mut out = vec![0.0; n];
    for (i, x) in a.iter().rev().enumerate() {
        out[n - 1 - i] += x;
    }
    for (i, x) in b.iter().rev().enumerate() {
        out[n - 1 - i] += x;
    }
    out
}

/// Real roots of a polynomial (highest degree first) via companion-matrix eigenvalues.
pub fn poly_real_roots(p: &[f64], imag_tol: f64) -> Vec<f64> {
    let lead = p[0];
    let n = p.len() - 1;
    let mut comp = DMatrix::zeros(n, n);
    for j in 0..n {
        comp[(0, j)] = -p[j + 1] / lead;
    }
    for i in 1..n {
        comp[(i, i - 1)] = 1.0;
    }
    let mut roots: Vec<f64> = comp
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= imag_tol)
        .map(|z| z.re)
        .collect();
    roots.sort_by(f64::total_cmp);
    roots
}

/// Numerator of the secular equation:
/// `Π(λ−s_k)² − Σ c_k² Π_{j≠k}(λ−s_j)²`.
pub fn secular_polynomial(s: &[f64], c: &[f64]) -> Vec<f64> {
    let sq = |sk: f64| vec![1.0, -2.0 * sk, sk * sk];
    let mut all = vec![1.0];
    for &sk in s {
        all = poly_mul(&all, &sq(sk));
    }
    let mut out = all;
    for k in 0..s.len() {
        let mut term = vec![-c[k] * c[k]];
        for (j, &sj) in s.iter().enumerate() {
            if j != k {
                term = poly_mul(&term, &sq(sj));
            }
        }
        out = poly_add(&out, &term);
    }
    out
}

/// Bisection on `f(λ) = 1 − Σ c_k²/(λ − s_k)²` over `(lo, hi)`, assuming
/// `f(lo) > 0 > f(hi)`.
pub fn secular_root_bisect(s: &[f64], c: &[f64], mut lo: f64, mut hi: f64) -> f64 {
    let f = |l: f64| 1.0 - s.iter().zip(c).map(|(sk, ck)| ck * ck / ((l - sk) * (l - sk))).sum::<f64>();
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Bisection for the root of `t⁴ + 2dt³ + (d²−1)t² − 2c²dt − c²d²` on `[|c|, 1]`.
pub fn quartic_root_bisect(c: f64, d: f64) -> f64 {
    let p = |t: f64| t.powi(4) + 2.0 * d * t.powi(3) + (d * d - 1.0) * t * t - 2.0 * c * c * d * t - c * c * d * d;
    let (mut lo, mut hi) = (c.abs(), 1.0);
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if p(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn sphere_point(angles: &[f64]) -> DVector<f64> {
    match angles.len() {
        1 => DVector::from_vec(vec![angles[0].cos(), angles[0].sin()]),
        2 => {
            let (th, ph) = (angles[0], angles[1]);
            DVector::from_vec(vec![th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()])
        }
        _ => unreachable!("grid oracle supports dimensions 2 and 3"),
    }
}

/// Minimum of `½xᵀQx + bᵀx` over the unit circle or sphere by a dense angle
/// grid (about 10⁶ points) followed by repeated local grid refinement.
pub fn sphere_grid_min(q: &DMatrix<f64>, b: &DVector<f64>) -> (f64, DVector<f64>) {
    let k = b.len();
    let obj = |x: &DVector<f64>| 0.5 * x.dot(&(q * x)) + b.dot(x);
    let pi = std::f64::consts::PI;
    let (mut best, mut angles, mut steps) = match k {
        2 => {
            let n = 1_000_000;
            let h = 2.0 * pi / n as f64;
            let mut best = (f64::INFINITY, 0.0);
            for i in 0..n {
                let th = i as f64 * h;
                let v = obj(&sphere_point(&[th]));
                if v < best.0 {
                    best = (v, th);
                }
            }
            (best.0, vec![best.1], vec![h])
        }
        3 => {
            let (nt, np) = (1000, 1000);
            let (ht, hp) = (pi / nt as f64, 2.0 * pi / np as f64);
            let mut best = (f64::INFINITY, 0.0, 0.0);
            for i in 0..=nt {
                for j in 0..np {
                    let (th, ph) = (i as f64 * ht, j as f64 * hp);
                    let v = obj(&sphere_point(&[th, ph]));
                    if v < best.0 {
                        best = (v, th, ph);
                    }
                }
            }
            (best.0, vec![best.1, best.2], vec![ht, hp])
        }
        _ => panic!("grid oracle supports dimensions 2 and 3"),
    };
    let m = 10i32;
    for _ in 0..60 {
        let center = angles.clone();
        let offsets: Vec<f64> = (-m..=m).map(|i| i as f64 / m as f64).collect();
        if k == 2 {
            for &o in &offsets {
                let a = [center[0] + o * 2.0 * steps[0]];
                let v = obj(&sphere_point(&a));
                if v < best {
                    best = v;
                    angles = a.to_vec();
                }
            }
        } else {
            for &o1 in &offsets {
                for &o2 in &offsets {
                    let a = [center[0] + o1 * 2.0 * steps[0], center[1] + o2 * 2.0 * steps[1]];
                    let v = obj(&sphere_point(&a));
                    if v < best {
                        best = v;
                        angles = a.to_vec();
                    }
                }
            }
        }
        for s in steps.iter_mut() {
            *s *= 0.4;
        }
    }
    (best, sphere_point(&angles))
}

/// Minimum-norm `x` with `‖y − Ax‖ = δ` along the Tikhonov path
/// `x(ν) = (AᵀA + νI)⁻¹Aᵀy`, by bisection on `log ν`.
pub fn tikhonov_min_norm(a: &DMatrix<f64>, y: &DVector<f64>, delta: f64) -> DVector<f64> {
    let (m, n) = a.shape();
    let x_of = |nu: f64| -> DVector<f64> {
        if n <= m {
            let g = a.transpose() * a + DMatrix::identity(n, n) * nu;
            g.lu().solve(&(a.transpose() * y)).expect("regularized system is invertible")
        } else {
            let g = a * a.transpose() + DMatrix::identity(m, m) * nu;
            a.transpose() * g.lu().solve(y).expect("regularized system is invertible")
        }
    };
    let res = |nu: f64| (y - a * x_of(nu)).norm();
    let scale = (a.transpose() * a).norm().max(1e-300);
    let (mut lo, mut hi) = ((scale * 1e-16).ln(), (scale * 1e16).ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if res(mid.exp()) < delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    x_of((0.5 * (lo + hi)).exp())
}

/// Sum of the `r` smallest generalized eigenvalues of `(Q, B)` with `B` pd.
pub fn gevd_smallest_sum(q: &DMatrix<f64>, b: &DMatrix<f64>, r: usize) -> f64 {
    let l = b.clone().cholesky().expect("B is positive definite").l();
    let linv = l.clone().try_inverse().expect("triangular factor is invertible");
    let c = &linv * q * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut ev: Vec<f64> = c.symmetric_eigenvalues().iter().cloned().collect();
    ev.sort_by(f64::total_cmp);
    ev[..r].iter().sum()
}

/// Kinds of small random sphere problems used by the optimality suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantedCase {
    Generic,
    DuplicateEigenvalue,
    ZeroCoefficient,
    ZeroLeadingCoefficient,
}

pub const PLANTED_CASES: [PlantedCase; 4] = [
    PlantedCase::Generic,
    PlantedCase::DuplicateEigenvalue,
    PlantedCase::ZeroCoefficient,
    PlantedCase::ZeroLeadingCoefficient,
];

/// Random `(Q, b)` of order `k` built from an explicit eigenbasis so that
/// duplicate eigenvalues and vanishing rotated coefficients can be planted.
pub fn planted_problem<R: rand::Rng>(rng: &mut R, k: usize, case: PlantedCase) -> (DMatrix<f64>, DVector<f64>) {
    let u = sphereqp::random::random_orthonormal(rng, k, k);
    let mut sigma: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
    sigma.sort_by(f64::total_cmp);
    let mut beta: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
    match case {
        PlantedCase::Generic => {}
        PlantedCase::DuplicateEigenvalue => {
            let i = rng.random_range(0..k - 1);
            sigma[i + 1] = sigma[i];
        }
        PlantedCase::ZeroCoefficient => {
            let i = rng.random_range(1..k);
            beta[i] = 0.0;
        }
        PlantedCase::ZeroLeadingCoefficient => {
            beta[0] = 0.0;
            if k > 2 && rng.random_bool(0.3) {
                sigma[1] = sigma[0];
                beta[1] = 0.0;
            }
        }
    }
    let magnitude = 10f64.powf(rng.random_range(-1.5..1.0));
    let beta = DVector::from_vec(beta);
    let beta = &beta * (magnitude / beta.norm());
    let q = &u * DMatrix::from_diagonal(&DVector::from_vec(sigma)) * u.transpose();
    let q = (&q + q.transpose()) * 0.5;
    (q, &u * beta)
}

/// Random ellipsoid-constrained problem with a known feasible point.
///
/// `Q = AᵀA` for Gaussian `A`, `b` Gaussian (or zero), and each `H_m` has a
/// random eigenbasis with eigenvalues log-spaced up to a condition number
/// `10^U(1, 4)`, rescaled so that the planted unit vector satisfies
/// `xᵀH_m x = 1`.
pub struct PlantedQcqp {
    pub q: DMatrix<f64>,
    pub b: DVector<f64>,
    pub h: Vec<DMatrix<f64>>,
    pub feasible: DVector<f64>,
}

pub fn planted_qcqp<R: rand::Rng>(rng: &mut R, k: usize, m: usize, zero_b: bool) -> PlantedQcqp {
    use sphereqp::random::{random_matrix, random_orthonormal, random_unit_vector, random_vector};
    let a = random_matrix(rng, k, k);
    let q = a.transpose() * &a;
    let b = if zero_b { DVector::zeros(k) } else { random_vector(rng, k) };
    let feasible = random_unit_vector(rng, k);
    let h = (0..m)
        .map(|_| {
            let kappa: f64 = 10f64.powf(rng.random_range(1.0..4.0));
            let u = random_orthonormal(rng, k, k);
            let d = DVector::from_fn(k, |i, _| kappa.powf(i as f64 / (k - 1).max(1) as f64));
            let hm = &u * DMatrix::from_diagonal(&d) * u.transpose();
            let hm = (&hm + hm.transpose()) * 0.5;
            let scale = feasible.dot(&(&hm * &feasible));
            hm / scale
        })
        .collect();
    PlantedQcqp { q, b, h, feasible }
}

/// Entry of an order-4 tensor stored flat with the first index fastest.
pub fn tensor_entry(flat: &[f64], dim: usize, idx: [usize; 4]) -> f64 {
    flat[idx[0] + dim * (idx[1] + dim * (idx[2] + dim * idx[3]))]
}

/// `Σ y_ijkl x_i x_j x_k x_l` by explicit loops.
pub fn tensor_inner_loops(flat: &[f64], dim: usize, x: &[f64]) -> f64 {
    let mut s = 0.0;
    for l in 0..dim {
        for k in 0..dim {
            for j in 0..dim {
                for i in 0..dim {
                    s += tensor_entry(flat, dim, [i, j, k, l]) * x[i] * x[j] * x[k] * x[l];
                }
            }
        }
    }
    s
}

/// `‖𝒴 − λx⁽⁴⁾‖_F²` by explicit loops.
pub fn tensor_residual_loops(flat: &[f64], dim: usize, weight: f64, x: &[f64]) -> f64 {
    let mut s = 0.0;
    for l in 0..dim {
        for k in 0..dim {
            for j in 0..dim {
                for i in 0..dim {
                    let d = tensor_entry(flat, dim, [i, j, k, l]) - weight * x[i] * x[j] * x[k] * x[l];
                    s += d * d;
                }
            }
        }
    }
    s
}

/// Largest `|⟨𝒴, x⁽⁴⁾⟩|` over the unit sphere in three dimensions: a
/// spherical-coordinate grid followed by projected gradient ascent of
/// `±⟨𝒴, x⁽⁴⁾⟩` from the best grid points of each sign.
pub fn tensor_sphere_max3(flat: &[f64]) -> f64 {
    let f = |x: &[f64]| tensor_inner_loops(flat, 3, x);
    let grad = |x: &[f64]| -> [f64; 3] {
        let mut g = [0.0; 3];
        for l in 0..3 {
            for k in 0..3 {
                for j in 0..3 {
                    for i in 0..3 {
                        g[i] += 4.0 * tensor_entry(flat, 3, [i, j, k, l]) * x[j] * x[k] * x[l];
                    }
                }
            }
        }
        g
    };
    let (nt, np) = (180, 360);
    let mut points: Vec<(f64, [f64; 3])> = Vec::with_capacity(nt * np);
    for a in 0..nt {
        let theta = std::f64::consts::PI * (a as f64 + 0.5) / nt as f64;
        for b in 0..np {
            let phi = 2.0 * std::f64::consts::PI * b as f64 / np as f64;
            let x = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
            points.push((f(&x), x));
        }
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut seeds: Vec<(f64, [f64; 3])> = points[..20].iter().map(|p| (-1.0, p.1)).collect();
    seeds.extend(points[points.len() - 20..].iter().map(|p| (1.0, p.1)));
    let mut best: f64 = 0.0;
    for (sign, mut x) in seeds {
        for _ in 0..20000 {
            let g = grad(&x);
            let mut next = [x[0] + sign * 0.05 * g[0], x[1] + sign * 0.05 * g[1], x[2] + sign * 0.05 * g[2]];
            let n = (next[0] * next[0] + next[1] * next[1] + next[2] * next[2]).sqrt();
            next.iter_mut().for_each(|v| *v /= n);
            let moved = (0..3).map(|i| (next[i] - x[i]).abs()).fold(0.0, f64::max);
            x = next;
            if moved < 1e-14 {
                break;
            }
        }
        best = best.max(f(&x).abs());
    }
    best
}

/// Scatter matrices of Gaussian classes with random means in dimension `n`.
pub struct Discriminant {
    pub between: DMatrix<f64>,
    pub within: DMatrix<f64>,
}

pub fn discriminant_data<R: rand::Rng + ?Sized>(rng: &mut R, n: usize, classes: usize, per_class: usize) -> Discriminant {
    let mut means = Vec::with_capacity(classes);
    let mut within = DMatrix::zeros(n, n);
    let mix = sphereqp::random::random_matrix(rng, n, n) / (n as f64).sqrt();
    for _ in 0..classes {
        let mean = sphereqp::random::random_vector(rng, n) * 2.0;
        let samples: Vec<DVector<f64>> = (0..per_class)
            .map(|_| &mean + &mix * sphereqp::random::random_vector(rng, n))
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
    Discriminant { between, within }
}

/// `tr(XᵀS_bX) / tr(XᵀS_wX)`
pub fn fisher_ratio(x: &DMatrix<f64>, d: &Discriminant) -> f64 {
    (x.transpose() * &d.between * x).trace() / (x.transpose() * &d.within * x).trace()
}
