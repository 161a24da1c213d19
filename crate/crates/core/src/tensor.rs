//! Best rank-1 approximation `λ·x∘x∘x∘x` of a symmetric order-4 tensor.
//!
//! With `z = x ⊗ x` the inner product `⟨𝒴, x⁽⁴⁾⟩` becomes the quadratic form
//! `zᵀQz` of the mode-(1,2) matricization, and `‖z‖ = 1` whenever `‖x‖ = 1`.
//! An augmented Lagrangian on the coupling `z = x ⊗ x` then alternates a
//! sphere-constrained QP in `z` with a leading-eigenvector problem in `x`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{outer_vec, sym_evd, unvec, Spectrum, SymmetricMatrix};
use crate::qcqp::{GammaController, GammaPolicy, TraceRecord};
use crate::random::{rng, random_unit_vector};
use crate::scqp::{solve_with_spectrum, ScqpOptions};

const SYMMETRY_TOL: f64 = 1e-10;

/// All 24 orderings of four tensor modes.
fn permutations() -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    let distinct = (0..4).all(|i| (0..i).all(|j| p[i] != p[j]));
                    if distinct {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

/// Fully symmetric order-4 tensor stored as its mode-(1,2) matricization:
/// entry `y(i₁,i₂,i₃,i₄)` sits at row `i₁ + I·i₂`, column `i₃ + I·i₄`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensor4 {
    dim: usize,
    qmat: SymmetricMatrix,
}

impl SymTensor4 {
    /// Accepts a matricization whose tensor is invariant under all index
    /// permutations to within `1e-10`.
    pub fn from_matricization(dim: usize, qmat: DMatrix<f64>) -> Result<Self> {
        let n = dim * dim;
        if dim == 0 {
            return Err(Error::invalid("tensor dimension must be positive"));
        }
        if qmat.nrows() != n || qmat.ncols() != n {
            return Err(Error::DimensionMismatch {
                what: "matricization order",
                expected: n,
                got: qmat.nrows().max(qmat.ncols()),
            });
        }
        if qmat.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("tensor has non-finite entries"));
        }
        let scale = qmat.amax().max(1.0);
        let perms = permutations();
        let at = |idx: [usize; 4]| qmat[(idx[0] + dim * idx[1], idx[2] + dim * idx[3])];
        for col in 0..n {
            for row in 0..n {
                let idx = [row % dim, row / dim, col % dim, col / dim];
                let v = at(idx);
                for p in &perms {
                    let w = at([idx[p[0]], idx[p[1]], idx[p[2]], idx[p[3]]]);
                    if (v - w).abs() > SYMMETRY_TOL * scale {
                        return Err(Error::invalid(format!(
                            "tensor is not symmetric at index {idx:?} (permutation {p:?} differs by {:e})",
                            (v - w).abs()
                        )));
                    }
                }
            }
        }
        Ok(SymTensor4 {
            dim,
            qmat: SymmetricMatrix::new(qmat)?,
        })
    }

    /// Averages a raw `I⁴` array (first index fastest) over all 24 index
    /// permutations, optionally rescaling to unit Frobenius norm.
    pub fn symmetrize(dim: usize, raw: &[f64], unit_norm: bool) -> Result<Self> {
        let n = dim * dim;
        if raw.len() != n * n {
            return Err(Error::DimensionMismatch {
                what: "tensor entries",
                expected: n * n,
                got: raw.len(),
            });
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("tensor has non-finite entries"));
        }
        let perms = permutations();
        let flat = |idx: [usize; 4]| idx[0] + dim * (idx[1] + dim * (idx[2] + dim * idx[3]));
        let mut m = DMatrix::zeros(n, n);
        for col in 0..n {
            for row in 0..n {
                let idx = [row % dim, row / dim, col % dim, col / dim];
                let sum: f64 = perms
                    .iter()
                    .map(|p| raw[flat([idx[p[0]], idx[p[1]], idx[p[2]], idx[p[3]]])])
                    .sum();
                m[(row, col)] = sum / 24.0;
            }
        }
        if unit_norm {
            let nrm = m.norm();
            if nrm > 0.0 {
                m /= nrm;
            }
        }
        Ok(SymTensor4 {
            dim,
            qmat: SymmetricMatrix::new(m)?,
        })
    }

    /// `w·v⁽⁴⁾`
    pub fn rank1(weight: f64, v: &DVector<f64>) -> Self {
        let vv = outer_vec(v);
        let m = &vv * vv.transpose() * weight;
        SymTensor4 {
            dim: v.len(),
            qmat: SymmetricMatrix::new(m).expect("finite outer product"),
        }
    }

    /// Symmetrized Gaussian tensor with unit Frobenius norm.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Self {
        let raw = crate::random::random_vector(rng, dim.pow(4));
        Self::symmetrize(dim, raw.as_slice(), true).expect("finite Gaussian entries")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matricization(&self) -> &SymmetricMatrix {
        &self.qmat
    }

    pub fn get(&self, i1: usize, i2: usize, i3: usize, i4: usize) -> f64 {
        self.qmat.as_matrix()[(i1 + self.dim * i2, i3 + self.dim * i4)]
    }

    /// Entries with the first index fastest.
    pub fn to_flat(&self) -> Vec<f64> {
        self.qmat.as_matrix().as_slice().to_vec()
    }

    pub fn negated(&self) -> Self {
        SymTensor4 {
            dim: self.dim,
            qmat: self.qmat.scaled(-1.0),
        }
    }

    /// `⟨𝒴, x⁽⁴⁾⟩`
    pub fn inner(&self, x: &DVector<f64>) -> f64 {
        self.qmat.quad_form(&outer_vec(x))
    }

    /// `‖𝒴‖_F²`
    pub fn norm_sq(&self) -> f64 {
        self.qmat.as_matrix().norm_squared()
    }

    /// `C_ij = Σ_k y(i,j,k,k)`
    pub fn contraction(&self) -> SymmetricMatrix {
        let i = self.dim;
        let m = self.qmat.as_matrix();
        let c = DMatrix::from_fn(i, i, |a, b| (0..i).map(|k| m[(a + i * b, k + i * k)]).sum());
        SymmetricMatrix::new(c).expect("finite contraction")
    }

    /// `𝒴 ×₂ x ×₃ x ×₄ x`
    pub fn apply3(&self, x: &DVector<f64>) -> DVector<f64> {
        let t = self.qmat.as_matrix() * outer_vec(x);
        unvec(&t, self.dim, self.dim) * x
    }
}

/// `‖𝒴 − λx⁽⁴⁾‖_F²` through its expansion in inner products.
pub fn residual(t: &SymTensor4, weight: f64, direction: &DVector<f64>) -> f64 {
    let n2 = direction.norm_squared();
    t.norm_sq() + weight * weight * n2.powi(4) - 2.0 * weight * t.inner(direction)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rank1Options {
    pub gamma0: f64,
    pub gamma_policy: GammaPolicy,
    pub alpha_step: f64,
    pub patience: usize,
    /// Stop once `‖z − x ⊗ x‖` falls below this.
    pub tol: f64,
    pub max_iters: usize,
    pub record_trace: bool,
    pub scqp: ScqpOptions,
}

impl Default for Rank1Options {
    fn default() -> Self {
        Rank1Options {
            gamma0: 0.3,
            gamma_policy: GammaPolicy::Adaptive,
            alpha_step: 2.0,
            patience: 50,
            tol: 1e-10,
            max_iters: 20_000,
            record_trace: true,
            scqp: ScqpOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Minimizes `⟨𝒴, x⁽⁴⁾⟩`, giving the most negative weight.
    Negative,
    /// Minimizes `⟨−𝒴, x⁽⁴⁾⟩`, giving the most positive weight.
    Positive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rank1Result {
    /// `λ = ⟨𝒴, x⁽⁴⁾⟩`
    pub weight: f64,
    /// Unit vector, sign fixed so the first significant entry is positive.
    pub direction: DVector<f64>,
    /// `‖𝒴‖_F² − λ²`
    pub error: f64,
    /// `‖𝒴 − λx⁽⁴⁾‖_F²`
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
    pub branch: Branch,
    /// Trace of the returned branch; `objective` is `⟨𝒴, x⁽⁴⁾⟩`.
    pub trace: Vec<TraceRecord>,
}

fn fix_sign(mut v: DVector<f64>) -> DVector<f64> {
    let cut = 1e-12 * v.amax();
    if let Some(&first) = v.iter().find(|x| x.abs() > cut) {
        if first < 0.0 {
            v.neg_mut();
        }
    }
    v
}

fn leading_eigenvector(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    let spec = sym_evd(&SymmetricMatrix::new(m.clone())?)?;
    let last = spec.order() - 1;
    Ok(fix_sign(spec.eigenvectors.column(last).into_owned()))
}

/// `z`-step: minimizes `½zᵀWz + (y − γ x⊗x)ᵀz` over `‖z‖ = 1`, where
/// `spectrum` is the eigendecomposition of `W`.
pub fn z_update(
    spectrum: &Spectrum,
    xx: &DVector<f64>,
    y: &DVector<f64>,
    gamma: f64,
    opts: &ScqpOptions,
) -> Result<DVector<f64>> {
    let lin = y - xx * gamma;
    Ok(solve_with_spectrum(spectrum, 1.0, 0.0, &lin, opts)?.x)
}

/// `x`-step: unit leading eigenvector of `sym(Z + Y/γ)`, with `Z`, `Y` the
/// `I×I` reshapes of `z`, `y`.
pub fn x_update(z: &DVector<f64>, y: &DVector<f64>, gamma: f64, dim: usize) -> Result<DVector<f64>> {
    let t = unvec(&(z + y / gamma), dim, dim);
    leading_eigenvector(&((&t + t.transpose()) * 0.5))
}

struct BranchRun {
    x: DVector<f64>,
    converged: bool,
    iterations: usize,
    trace: Vec<TraceRecord>,
}

/// Minimizes `zᵀWz` over `z = x ⊗ x`, `‖x‖ = 1`, where `W` is the (scaled)
/// matricization of one branch; `sign` maps its objective back to `⟨𝒴, x⁽⁴⁾⟩`.
fn run_branch(
    dim: usize,
    w: &SymmetricMatrix,
    spectrum: &Spectrum,
    x0: DVector<f64>,
    sign: f64,
    unscale: f64,
    opts: &Rank1Options,
) -> Result<BranchRun> {
    let mut x = x0;
    let mut xx = outer_vec(&x);
    let mut y = DVector::zeros(dim * dim);
    let mut gamma = opts.gamma0;
    let mut controller = GammaController::new(opts.gamma0, opts.alpha_step, opts.patience).grow_when_balanced();
    let mut best = (w.quad_form(&xx), x.clone());
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=opts.max_iters {
        iterations = it;
        let z = z_update(spectrum, &xx, &y, gamma, &opts.scqp)?;
        x = x_update(&z, &y, gamma, dim)?;
        let xx_new = outer_vec(&x);

        let gap = &z - &xx_new;
        y += &gap * gamma;
        let primal = gap.norm();
        let dual = gamma * (&xx_new - &xx).norm();
        xx = xx_new;

        let obj = w.quad_form(&xx);
        if obj < best.0 {
            best = (obj, x.clone());
        }
        if opts.record_trace {
            trace.push(TraceRecord {
                iteration: it,
                objective: sign * unscale * obj,
                feasibility: (z.norm() - 1.0).abs(),
                primal_residual: primal,
                gamma,
            });
        }
        if primal < opts.tol {
            converged = true;
            break;
        }
        if opts.gamma_policy == GammaPolicy::Adaptive {
            controller.observe(&mut gamma, primal, dual);
        }
    }
    Ok(BranchRun {
        x: best.1,
        converged,
        iterations,
        trace,
    })
}

fn finish(t: &SymTensor4, direction: DVector<f64>, branch: Branch, run: BranchRun) -> Rank1Result {
    let direction = fix_sign(direction);
    let weight = t.inner(&direction);
    Rank1Result {
        error: (t.norm_sq() - weight * weight).max(0.0),
        residual: residual(t, weight, &direction).max(0.0),
        weight,
        direction,
        converged: run.converged,
        iterations: run.iterations,
        branch,
        trace: run.trace,
    }
}

/// Runs the splitting on both sign branches and keeps the larger `|λ|`.
///
/// Each branch starts from the eigenvector of the contraction `Σ_k y(i,j,k,k)`
/// that is extremal in the direction that branch minimizes.
pub fn best_rank1(t: &SymTensor4, opts: &Rank1Options) -> Result<Rank1Result> {
    if !(opts.gamma0 > 0.0) {
        return Err(Error::invalid(format!("gamma0 must be positive, got {}", opts.gamma0)));
    }
    let dim = t.dim;
    let spec = sym_evd(&t.qmat)?;
    let scale = spec.eigenvalues.amax();
    if scale == 0.0 {
        let mut e = DVector::zeros(dim);
        e[0] = 1.0;
        let run = BranchRun {
            x: e.clone(),
            converged: true,
            iterations: 0,
            trace: Vec::new(),
        };
        return Ok(finish(t, e, Branch::Positive, run));
    }

    let contraction = sym_evd(&t.contraction())?;
    let mut results = Vec::with_capacity(2);
    for (branch, sign) in [(Branch::Negative, 1.0), (Branch::Positive, -1.0)] {
        let w = t.qmat.scaled(sign / scale);
        let n = spec.order();
        let order: Vec<usize> = if sign > 0.0 { (0..n).collect() } else { (0..n).rev().collect() };
        let spectrum = Spectrum {
            eigenvalues: DVector::from_iterator(n, order.iter().map(|&k| sign * spec.eigenvalues[k] / scale)),
            eigenvectors: DMatrix::from_fn(n, n, |r, c| spec.eigenvectors[(r, order[c])]),
        };
        let init_col = if sign > 0.0 { 0 } else { dim - 1 };
        let x0 = fix_sign(contraction.eigenvectors.column(init_col).into_owned());
        let run = run_branch(dim, &w, &spectrum, x0, sign, scale, opts)?;
        let x = run.x.clone();
        results.push(finish(t, x, branch, run));
    }
    let pos = results.pop().expect("two branches");
    let neg = results.pop().expect("two branches");
    Ok(if pos.weight.abs() >= neg.weight.abs() { pos } else { neg })
}

/// Shifted symmetric higher-order power iteration from random starts,
/// run on both `𝒴` and `−𝒴`. Returns the best `|λ|` found.
pub fn power_oracle(t: &SymTensor4, restarts: usize, seed: u64) -> Rank1Result {
    let dim = t.dim;
    let spectral = sym_evd(&t.qmat).map(|s| s.eigenvalues.amax()).unwrap_or(0.0);
    let alpha = 3.0 * spectral.max(f64::MIN_POSITIVE);
    let mut rng = rng(seed);
    let mut best: Option<(f64, DVector<f64>, usize)> = None;
    let mut total = 0;
    for _ in 0..restarts.max(1) {
        let start = random_unit_vector(&mut rng, dim);
        for sign in [1.0, -1.0] {
            let mut x = start.clone();
            let mut lambda = sign * t.inner(&x);
            for _ in 0..2000 {
                total += 1;
                let mut next = t.apply3(&x) * sign + &x * alpha;
                let nrm = next.norm();
                if nrm == 0.0 {
                    break;
                }
                next /= nrm;
                let lam = sign * t.inner(&next);
                let done = (lam - lambda).abs() <= 1e-15 * alpha;
                x = next;
                lambda = lam;
                if done {
                    break;
                }
            }
            let w = t.inner(&x);
            if best.as_ref().is_none_or(|b| w.abs() > b.0.abs()) {
                best = Some((w, x, total));
            }
        }
    }
    let (w, x, _) = best.expect("at least one restart");
    let branch = if w >= 0.0 { Branch::Positive } else { Branch::Negative };
    let run = BranchRun {
        x: x.clone(),
        converged: true,
        iterations: total,
        trace: Vec::new(),
    };
    finish(t, x, branch, run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::rng;

    #[test]
    fn matricization_round_trip() {
        let mut r = rng(3);
        let t = SymTensor4::random(&mut r, 3);
        let back = SymTensor4::from_matricization(3, t.matricization().as_matrix().clone()).unwrap();
        assert_eq!(back, t);
        assert!((t.norm_sq() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_matricization_rejected() {
        let mut m = DMatrix::zeros(4, 4);
        m[(1, 0)] = 1.0;
        m[(0, 1)] = 1.0;
        assert!(SymTensor4::from_matricization(2, m).is_err());
    }

    #[test]
    fn zero_tensor_gives_zero_weight() {
        let t = SymTensor4::from_matricization(2, DMatrix::zeros(4, 4)).unwrap();
        let r = best_rank1(&t, &Rank1Options::default()).unwrap();
        assert_eq!(r.weight, 0.0);
        assert_eq!(r.residual, 0.0);
    }
}
