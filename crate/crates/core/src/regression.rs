//! Minimum-norm regression with a prescribed residual,
//! `min ‖x‖²  s.t.  ‖y − Ax‖ = δ`.
//!
//! After an SVD `A = U diag(s) Vᵀ` the residual splits into the part outside
//! the range of `A`, which is fixed, and a part `ŷ − diag(s)Vᵀx` which is
//! reparameterized as `δ̂ z` with `‖z‖ = 1`. The norm of `x` then becomes a
//! sphere-constrained quadratic in `z`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::linalg::{orthonormal_basis, thin_svd, SymmetricMatrix};
use crate::random::rng;
use crate::scqp::{self, ScqpOptions, ScqpProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    a: DMatrix<f64>,
    y: DVector<f64>,
    delta: f64,
}

impl RegressionProblem {
    pub fn new(a: DMatrix<f64>, y: DVector<f64>, delta: f64) -> Result<Self> {
        if a.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                what: "observation length",
                expected: a.nrows(),
                got: y.len(),
            });
        }
        if a.ncols() == 0 || a.nrows() == 0 {
            return Err(Error::invalid("empty regressor matrix"));
        }
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(Error::invalid(format!("bound must be finite and nonnegative, got {delta}")));
        }
        if a.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("regression data has non-finite entries"));
        }
        Ok(RegressionProblem { a, y, delta })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn residual(&self, x: &DVector<f64>) -> f64 {
        (&self.y - &self.a * x).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundStatus {
    /// `δ >= ‖y‖`: `x = 0` already meets the bound.
    ZeroSolution,
    /// `‖Π⊥y‖ <= δ < ‖y‖`.
    Feasible { residual_floor: f64 },
    /// `δ < ‖Π⊥y‖`: no `x` reaches the bound.
    Infeasible { residual_floor: f64 },
}

/// Smallest achievable residual `‖Π⊥_A y‖`.
pub fn residual_floor(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    let basis = orthonormal_basis(a, 1e-12)?;
    let proj = &basis * (basis.transpose() * y);
    Ok((y - proj).norm())
}

pub fn validate_bound(p: &RegressionProblem) -> Result<BoundStatus> {
    let floor = residual_floor(&p.a, &p.y)?;
    Ok(if p.delta >= p.y.norm() {
        BoundStatus::ZeroSolution
    } else if p.delta < floor {
        BoundStatus::Infeasible { residual_floor: floor }
    } else {
        BoundStatus::Feasible { residual_floor: floor }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionOptions {
    /// Singular values at or below `rank_tol · s_max` are dropped.
    pub rank_tol: f64,
    /// Relative decrease of `‖x‖` per pass below which the subset iteration stops.
    pub tol: f64,
    pub max_passes: usize,
    pub max_subset: usize,
    /// Subsets whose regressor block has a larger condition number are skipped.
    pub max_condition: f64,
    pub seed: u64,
    pub scqp: ScqpOptions,
}

impl Default for RegressionOptions {
    fn default() -> Self {
        RegressionOptions {
            rank_tol: 1e-12,
            tol: 1e-10,
            max_passes: 500,
            max_subset: 8,
            max_condition: 1e12,
            seed: 0,
            scqp: ScqpOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSolution {
    pub x: DVector<f64>,
    pub status: BoundStatus,
    pub residual: f64,
    pub passes: usize,
    /// `‖x‖` after the initial point and after every accepted subset update.
    pub norm_trace: Vec<f64>,
    /// Largest `|‖y − Ax‖ − δ|` over all iterates.
    pub max_constraint_error: f64,
}

/// Closed-form solution through the SVD of `A`; rank-deficient matrices are
/// compressed to their numerical range first.
pub fn solve_tall(p: &RegressionProblem, opts: &RegressionOptions) -> Result<DVector<f64>> {
    let (u, s, v) = thin_svd(&p.a)?;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let k = p.a.ncols();
    if smax == 0.0 {
        return Ok(DVector::zeros(k));
    }
    let rank = s.iter().filter(|&&v| v > opts.rank_tol * smax).count();
    let u = u.columns(0, rank);
    let v = v.columns(0, rank);
    let s = s.rows(0, rank).into_owned();
    let y_hat = u.transpose() * &p.y;
    let floor2 = (p.y.norm_squared() - y_hat.norm_squared()).max(0.0);
    let gap = p.delta * p.delta - floor2;
    if gap < -1e-12 * p.y.norm_squared().max(f64::MIN_POSITIVE) {
        return Err(Error::invalid(format!(
            "bound {} is below the residual floor {}",
            p.delta,
            floor2.sqrt()
        )));
    }
    let delta_hat = gap.max(0.0).sqrt();
    let inv2 = s.map(|v| 1.0 / (v * v));
    let least_squares = |yh: &DVector<f64>| &v * yh.component_div(&s);
    // δ̂² is only known to rounding of ‖y‖²; below that the bound sits on the floor.
    if gap <= 8.0 * f64::EPSILON * p.y.norm_squared() {
        return Ok(least_squares(&y_hat));
    }
    if delta_hat >= y_hat.norm() {
        return Ok(DVector::zeros(k));
    }
    let q = SymmetricMatrix::from_diagonal((inv2.clone() * (2.0 * delta_hat)).as_slice());
    let b = -(inv2.component_mul(&y_hat)) * 2.0;
    let sol = scqp::solve(&ScqpProblem::new(q, b)?, &opts.scqp)?;
    Ok(least_squares(&(y_hat - sol.x * delta_hat)))
}

/// Point on the bound obtained by shrinking the minimum-norm least-squares
/// solution toward zero.
pub fn feasible_start(p: &RegressionProblem, opts: &RegressionOptions) -> Result<DVector<f64>> {
    let (u, s, v) = thin_svd(&p.a)?;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let rank = s.iter().filter(|&&v| v > opts.rank_tol * smax).count();
    let y_hat = u.columns(0, rank).transpose() * &p.y;
    let x_ls = v.columns(0, rank) * y_hat.component_div(&s.rows(0, rank));
    let pnorm = y_hat.norm();
    let floor2 = (p.y.norm_squared() - pnorm * pnorm).max(0.0);
    if pnorm == 0.0 {
        return Err(Error::invalid("observation is orthogonal to the range of the regressors"));
    }
    // ‖y − τAx_LS‖² = floor² + (1 − τ)²‖ŷ‖²
    let tau = 1.0 - ((p.delta * p.delta - floor2).max(0.0)).sqrt() / pnorm;
    Ok(x_ls * tau.clamp(0.0, 1.0))
}

/// Iterative refinement over random column subsets, each solved in closed
/// form while all other entries stay fixed.
pub fn solve_wide(p: &RegressionProblem, x0: DVector<f64>, opts: &RegressionOptions) -> Result<RegressionSolution> {
    let (m, k) = p.a.shape();
    let size = m.min(opts.max_subset).max(2).min(k);
    let mut rng = rng(opts.seed);
    let mut x = x0;
    let mut norm_trace = vec![x.norm()];
    let mut max_err = (p.residual(&x) - p.delta).abs();
    let mut passes = 0;
    let mut tried = 0;
    let mut well_conditioned = 0;

    for _ in 0..opts.max_passes {
        passes += 1;
        let start = x.norm();
        let mut order: Vec<usize> = (0..k).collect();
        order.shuffle(&mut rng);
        let mut subsets: Vec<Vec<usize>> = order.chunks(size).map(|c| c.to_vec()).collect();
        if let Some(last) = subsets.last_mut() {
            // Top up a short final chunk with other indices.
            let mut i = 0;
            while last.len() < size.min(k) {
                if !last.contains(&order[i]) {
                    last.push(order[i]);
                }
                i += 1;
            }
        }
        for subset in subsets {
            if subset.iter().all(|&i| x[i] == 0.0) {
                continue;
            }
            let a_sub = p.a.select_columns(&subset);
            let x_sub = x.select_rows(&subset);
            let r_sub = &p.y - &p.a * &x + &a_sub * &x_sub;
            if r_sub.norm() <= p.delta {
                continue;
            }
            tried += 1;
            let (_, sv, _) = thin_svd(&a_sub)?;
            let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
            let smax = sv.iter().cloned().fold(0.0, f64::max);
            if !(smin > 0.0 && smax / smin < opts.max_condition) {
                continue;
            }
            well_conditioned += 1;
            let sub = RegressionProblem::new(a_sub, r_sub, p.delta)?;
            let candidate = solve_tall(&sub, opts)?;
            if candidate.norm() <= x_sub.norm() {
                for (i, &j) in subset.iter().enumerate() {
                    x[j] = candidate[i];
                }
                norm_trace.push(x.norm());
                max_err = max_err.max((p.residual(&x) - p.delta).abs());
            }
        }
        if tried > 0 && well_conditioned == 0 {
            return Err(Error::DegenerateRegressor(tried));
        }
        let end = x.norm();
        if start == 0.0 || (start - end) / start < opts.tol {
            break;
        }
    }
    Ok(RegressionSolution {
        residual: p.residual(&x),
        x,
        status: validate_bound(p)?,
        passes,
        norm_trace,
        max_constraint_error: max_err,
    })
}

/// Dispatches between the zero solution, the closed form and the subset
/// iteration (for more columns than rows).
pub fn solve(p: &RegressionProblem, opts: &RegressionOptions) -> Result<RegressionSolution> {
    let status = validate_bound(p)?;
    let k = p.a.ncols();
    match status {
        BoundStatus::ZeroSolution => Ok(RegressionSolution {
            x: DVector::zeros(k),
            status,
            residual: p.y.norm(),
            passes: 0,
            norm_trace: vec![0.0],
            max_constraint_error: 0.0,
        }),
        BoundStatus::Infeasible { residual_floor } => Err(Error::invalid(format!(
            "bound {} is below the residual floor {residual_floor}",
            p.delta
        ))),
        BoundStatus::Feasible { .. } if k > p.a.nrows() => {
            let x0 = feasible_start(p, opts)?;
            solve_wide(p, x0, opts)
        }
        BoundStatus::Feasible { .. } => {
            let x = solve_tall(p, opts)?;
            let residual = p.residual(&x);
            Ok(RegressionSolution {
                norm_trace: vec![x.norm()],
                max_constraint_error: (residual - p.delta).abs(),
                x,
                status,
                residual,
                passes: 0,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_matrix, random_vector};

    #[test]
    fn identity_regressor() {
        let y = DVector::from_vec(vec![3.0, 4.0]);
        let p = RegressionProblem::new(DMatrix::identity(2, 2), y.clone(), 2.0).unwrap();
        assert_eq!(validate_bound(&p).unwrap(), BoundStatus::Feasible { residual_floor: 0.0 });
        let x = solve_tall(&p, &RegressionOptions::default()).unwrap();
        assert!((x - y * (1.0 - 2.0 / 5.0)).norm() < 1e-12);
    }

    #[test]
    fn large_bound_gives_zero() {
        let y = DVector::from_vec(vec![3.0, 4.0]);
        let p = RegressionProblem::new(DMatrix::identity(2, 2), y, 7.5).unwrap();
        assert_eq!(validate_bound(&p).unwrap(), BoundStatus::ZeroSolution);
        assert_eq!(solve(&p, &RegressionOptions::default()).unwrap().x.norm(), 0.0);
    }

    #[test]
    fn floor_matches_least_squares() {
        let mut r = rng(41);
        let a = random_matrix(&mut r, 6, 3);
        let y = random_vector(&mut r, 6);
        let ls = a.clone().svd(true, true).solve(&y, 1e-14).unwrap();
        let floor = residual_floor(&a, &y).unwrap();
        assert!((floor - (&y - &a * ls).norm()).abs() < 1e-10);
    }

    #[test]
    fn bound_at_floor_gives_least_squares() {
        let mut r = rng(42);
        let a = random_matrix(&mut r, 7, 3);
        let y = random_vector(&mut r, 7);
        let floor = residual_floor(&a, &y).unwrap();
        let p = RegressionProblem::new(a.clone(), y.clone(), floor).unwrap();
        let x = solve_tall(&p, &RegressionOptions::default()).unwrap();
        let ls = a.svd(true, true).solve(&y, 1e-14).unwrap();
        assert!((x - ls).norm() < 1e-8);
    }

    #[test]
    fn infeasible_bound_is_reported() {
        let mut r = rng(43);
        let a = random_matrix(&mut r, 6, 2);
        let y = random_vector(&mut r, 6);
        let floor = residual_floor(&a, &y).unwrap();
        let p = RegressionProblem::new(a, y, 0.5 * floor).unwrap();
        assert!(matches!(validate_bound(&p).unwrap(), BoundStatus::Infeasible { .. }));
        assert!(solve(&p, &RegressionOptions::default()).is_err());
    }

    #[test]
    fn feasible_start_hits_bound() {
        let mut r = rng(44);
        let a = random_matrix(&mut r, 4, 10);
        let y = random_vector(&mut r, 4);
        let p = RegressionProblem::new(a, y.clone(), 0.4 * y.norm()).unwrap();
        let x0 = feasible_start(&p, &RegressionOptions::default()).unwrap();
        assert!((p.residual(&x0) - p.delta()).abs() < 1e-10);
    }
}
