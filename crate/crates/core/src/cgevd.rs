//! Generalized eigenvalue problems whose eigenvectors share a low-rank
//! factor: `min tr(XᵀQX)  s.t.  XᵀBX = I_R` with `x_r = vec(G_r Aᵀ)`.
//!
//! The solver alternates an ordinary GEVD for the `G_r` (with `A` fixed)
//! and a QCQP with `R(R+1)/2` quadratic constraints for `vec(Aᵀ)` (with
//! the `G_r` fixed).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, kron, solve_lower, solve_lower_transpose, sym_evd, unvec, vec_of, SymmetricMatrix};
use crate::qcqp::{self, CarrierPolicy, QcqpOptions, QcqpProblem};
use crate::random::{random_orthonormal, rng};

#[derive(Debug, Clone, PartialEq)]
pub struct CgevdProblem {
    q: SymmetricMatrix,
    b: SymmetricMatrix,
    i: usize,
    j: usize,
    r: usize,
    s: usize,
}

impl CgevdProblem {
    /// `q` positive semidefinite and `b` positive definite, both of order
    /// `I·J`; `R` eigenvectors with inner rank `S ≤ min(I, J)`.
    pub fn new(q: SymmetricMatrix, b: SymmetricMatrix, i: usize, j: usize, r: usize, s: usize) -> Result<Self> {
        let n = i * j;
        if n == 0 {
            return Err(Error::invalid("dimensions I and J must be positive"));
        }
        for (what, got) in [("Q order", q.order()), ("B order", b.order())] {
            if got != n {
                return Err(Error::DimensionMismatch { what, expected: n, got });
            }
        }
        if r == 0 {
            return Err(Error::invalid("R must be at least 1"));
        }
        if s == 0 || s > i.min(j) {
            return Err(Error::invalid(format!("S must lie in 1..={}, got {s}", i.min(j))));
        }
        if r > i * s {
            return Err(Error::invalid(format!("R = {r} exceeds I·S = {}", i * s)));
        }
        cholesky(&b, None)?;
        let spec = sym_evd(&q)?;
        let scale = spec.eigenvalues.amax().max(1.0);
        if spec.eigenvalues[0] < -1e-10 * scale {
            return Err(Error::invalid(format!(
                "Q must be positive semidefinite (smallest eigenvalue {:e})",
                spec.eigenvalues[0]
            )));
        }
        Ok(CgevdProblem { q, b, i, j, r, s })
    }

    /// Problem whose minimizers maximize `tr(XᵀMX)` under `XᵀBX = I_R`.
    ///
    /// Uses `Q = c·B − M` with `c` the largest generalized eigenvalue of
    /// `(M, B)`, so `Q` is positive semidefinite and
    /// `tr(XᵀQX) = c·R − tr(XᵀMX)` on the feasible set. Returns `c`.
    pub fn maximizing(
        m: SymmetricMatrix,
        b: SymmetricMatrix,
        i: usize,
        j: usize,
        r: usize,
        s: usize,
    ) -> Result<(Self, f64)> {
        if m.order() != b.order() {
            return Err(Error::DimensionMismatch {
                what: "M order",
                expected: b.order(),
                got: m.order(),
            });
        }
        let l = cholesky(&b, None)?;
        let c = solve_lower(&l, m.as_matrix());
        let c = solve_lower(&l, &c.transpose());
        let top = sym_evd(&SymmetricMatrix::new(c)?)?.eigenvalues.max();
        let q = SymmetricMatrix::new(b.as_matrix() * top - m.as_matrix())?;
        let q = clip_psd(q)?;
        Ok((Self::new(q, b, i, j, r, s)?, top))
    }

    pub fn q(&self) -> &SymmetricMatrix {
        &self.q
    }

    pub fn b(&self) -> &SymmetricMatrix {
        &self.b
    }

    /// `(I, J, R, S)`
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.i, self.j, self.r, self.s)
    }

    pub fn objective(&self, x: &DMatrix<f64>) -> f64 {
        (x.transpose() * self.q.as_matrix() * x).trace()
    }

    /// `‖XᵀBX − I_R‖_F`
    pub fn feasibility(&self, x: &DMatrix<f64>) -> f64 {
        let g = x.transpose() * self.b.as_matrix() * x;
        (g - DMatrix::identity(x.ncols(), x.ncols())).norm()
    }
}

/// Rounds eigenvalues below zero (from cancellation) up to zero.
fn clip_psd(q: SymmetricMatrix) -> Result<SymmetricMatrix> {
    let spec = sym_evd(&q)?;
    if spec.eigenvalues[0] >= 0.0 {
        return Ok(q);
    }
    let values = spec.eigenvalues.map(|v| v.max(0.0));
    let u = &spec.eigenvectors;
    SymmetricMatrix::new(u * DMatrix::from_diagonal(&values) * u.transpose())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgevdState {
    /// `R` matrices of size `I×S`.
    pub g: Vec<DMatrix<f64>>,
    /// `J×S`
    pub a: DMatrix<f64>,
    pub objective: f64,
    pub feasibility: f64,
}

impl CgevdState {
    pub fn x(&self) -> DMatrix<f64> {
        assemble_x(&self.g, &self.a)
    }
}

/// `[vec(G_1), …, vec(G_R)]`
pub fn stack_g(g: &[DMatrix<f64>]) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = g.iter().map(vec_of).collect();
    DMatrix::from_columns(&cols)
}

/// Inverse of [`stack_g`].
pub fn unstack_g(stacked: &DMatrix<f64>, i: usize, s: usize) -> Vec<DMatrix<f64>> {
    stacked
        .column_iter()
        .map(|c| unvec(&c.into_owned(), i, s))
        .collect()
}

/// `X = (A ⊗ I_I) G`, whose column `r` is `vec(G_r Aᵀ)`.
pub fn assemble_x(g: &[DMatrix<f64>], a: &DMatrix<f64>) -> DMatrix<f64> {
    let i = g.first().map_or(0, |m| m.nrows());
    kron(a, &DMatrix::identity(i, i)) * stack_g(g)
}

/// Replaces `A` by the Q factor of its QR decomposition and `G_r` by
/// `G_r Rᵀ`, leaving every `G_r Aᵀ` unchanged.
pub fn orthonormalize(a: &DMatrix<f64>, g: &[DMatrix<f64>]) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let s = a.ncols();
    let qr = a.clone().qr();
    let q = qr.q().columns(0, s).into_owned();
    let r = qr.r();
    let g = g.iter().map(|gr| gr * r.transpose()).collect();
    (q, g)
}

/// `(Q_G, B_G)` with `Q_G = (Aᵀ ⊗ I) Q (A ⊗ I)` and likewise for `B`.
pub fn g_system(p: &CgevdProblem, a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = kron(a, &DMatrix::identity(p.i, p.i));
    let qg = k.transpose() * p.q.as_matrix() * &k;
    let bg = k.transpose() * p.b.as_matrix() * &k;
    (qg, bg)
}

/// `R` smallest generalized eigenvectors of `(Q_G, B_G)`, normalized so
/// `GᵀB_G G = I_R`. Returns the new `G_r` and the sum of the eigenvalues.
///
/// When `B_G` is not numerically positive definite and `jitter` is given,
/// `B_G + jitter·tr(B_G)/n·I` is factored instead.
pub fn update_g(p: &CgevdProblem, a: &DMatrix<f64>, jitter: Option<f64>) -> Result<(Vec<DMatrix<f64>>, f64)> {
    let (qg, bg) = g_system(p, a);
    let bg = SymmetricMatrix::new(bg)?;
    let l = match cholesky(&bg, None) {
        Ok(l) => l,
        Err(Error::NotPositiveDefinite { pivot, value }) => match jitter {
            Some(eps) => cholesky(&bg, Some(eps)).map_err(|_| {
                Error::DegenerateStructure(format!(
                    "B_G is singular even with jitter {eps:e} (pivot {pivot} = {value:e})"
                ))
            })?,
            None => {
                return Err(Error::DegenerateStructure(format!(
                    "B_G is not positive definite (pivot {pivot} = {value:e})"
                )))
            }
        },
        Err(e) => return Err(e),
    };
    let c = solve_lower(&l, &qg);
    let c = solve_lower(&l, &c.transpose());
    let spec = sym_evd(&SymmetricMatrix::new(c)?)?;
    let v = spec.eigenvectors.columns(0, p.r).into_owned();
    let g = solve_lower_transpose(&l, &v);
    let objective = spec.eigenvalues.rows(0, p.r).sum();
    Ok((unstack_g(&g, p.i, p.s), objective))
}

/// `(I_J ⊗ G_r)ᵀ M (I_J ⊗ G_s)`
fn a_block(m: &DMatrix<f64>, gr: &DMatrix<f64>, gs: &DMatrix<f64>, j: usize) -> DMatrix<f64> {
    let eye = DMatrix::identity(j, j);
    kron(&eye, gr).transpose() * m * kron(&eye, gs)
}

/// `Q_A = Σ_r (I_J ⊗ G_r)ᵀ Q (I_J ⊗ G_r)`
pub fn q_a(p: &CgevdProblem, g: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = p.j * p.s;
    g.iter()
        .fold(DMatrix::zeros(n, n), |acc, gr| acc + a_block(p.q.as_matrix(), gr, gr, p.j))
}

/// `B_{r,s} = (I_J ⊗ G_r)ᵀ B (I_J ⊗ G_s)`
pub fn b_rs(p: &CgevdProblem, g: &[DMatrix<f64>], r: usize, s: usize) -> DMatrix<f64> {
    a_block(p.b.as_matrix(), &g[r], &g[s], p.j)
}

/// QCQP in `vec(Aᵀ)`: ellipsoids `B_{r,r}` and homogeneous constraints
/// `sym(B_{r,s})` for `s < r`.
pub fn a_problem(p: &CgevdProblem, g: &[DMatrix<f64>]) -> Result<QcqpProblem> {
    let n = p.j * p.s;
    let h = (0..p.r)
        .map(|r| SymmetricMatrix::new(b_rs(p, g, r, r)))
        .collect::<Result<Vec<_>>>()?;
    let mut off = Vec::new();
    for r in 0..p.r {
        for s in 0..r {
            off.push(SymmetricMatrix::new(b_rs(p, g, r, s))?);
        }
    }
    QcqpProblem::new(SymmetricMatrix::new(q_a(p, g))?, DVector::zeros(n), h)?.with_homogeneous(off)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgevdOptions {
    /// Stop when the relative objective decrease of a sweep falls below this.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Seed for the random orthonormal `A₀`.
    pub seed: u64,
    pub init_a: Option<DMatrix<f64>>,
    /// Used only when `B_G` fails to factor.
    pub jitter: Option<f64>,
    /// Largest constraint residual for which an `A` candidate is considered.
    pub accept_feasibility: f64,
    /// Relative slack in the accept-if-better comparison.
    pub accept_tol: f64,
    pub qcqp: QcqpOptions,
}

impl Default for CgevdOptions {
    fn default() -> Self {
        CgevdOptions {
            tol: 1e-8,
            max_sweeps: 100,
            seed: 0,
            init_a: None,
            jitter: Some(1e-12),
            accept_feasibility: 1e-6,
            accept_tol: 1e-12,
            qcqp: QcqpOptions {
                carrier: CarrierPolicy::GivenIndex(0),
                record_trace: false,
                ..QcqpOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AUpdate {
    pub a: DMatrix<f64>,
    pub accepted: bool,
    pub qcqp_converged: bool,
    pub qcqp_iterations: usize,
    pub qcqp_feasibility: f64,
}

/// Solves the QCQP for `vec(Aᵀ)` warm-started at the current `A`, and keeps
/// the current `A` unless the candidate is feasible and not worse.
pub fn update_a(p: &CgevdProblem, state: &CgevdState, opts: &CgevdOptions) -> Result<AUpdate> {
    let problem = a_problem(p, &state.g)?;
    let current = vec_of(&state.a.transpose());
    let qcqp_opts = QcqpOptions {
        warm_start: Some(current.clone()),
        ..opts.qcqp.clone()
    };
    let keep = |converged, iterations, feasibility| AUpdate {
        a: state.a.clone(),
        accepted: false,
        qcqp_converged: converged,
        qcqp_iterations: iterations,
        qcqp_feasibility: feasibility,
    };
    let sol = match qcqp::solve(&problem, &qcqp_opts) {
        Ok(sol) => sol,
        Err(Error::NotPositiveDefinite { .. }) => return Ok(keep(false, 0, f64::INFINITY)),
        Err(e) => return Err(e),
    };
    let before = problem.q().quad_form(&current);
    let after = problem.q().quad_form(&sol.x);
    let better = after <= before + opts.accept_tol * before.abs().max(1.0);
    if !(sol.feasibility <= opts.accept_feasibility) || !better {
        return Ok(keep(sol.converged, sol.iterations, sol.feasibility));
    }
    Ok(AUpdate {
        a: unvec(&sol.x, p.s, p.j).transpose(),
        accepted: true,
        qcqp_converged: sol.converged,
        qcqp_iterations: sol.iterations,
        qcqp_feasibility: sol.feasibility,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub sweep: usize,
    pub objective: f64,
    pub feasibility: f64,
    pub accepted: bool,
    pub qcqp_iterations: usize,
    pub qcqp_feasibility: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgevdSolution {
    pub state: CgevdState,
    pub sweeps: usize,
    pub converged: bool,
    /// An `A` candidate was rejected and the iteration stopped.
    pub stalled: bool,
    pub history: Vec<SweepRecord>,
}

fn refit(p: &CgevdProblem, a: &DMatrix<f64>, jitter: Option<f64>) -> Result<CgevdState> {
    let (a, _) = orthonormalize(a, &[]);
    let (g, _) = update_g(p, &a, jitter)?;
    let x = assemble_x(&g, &a);
    Ok(CgevdState {
        objective: p.objective(&x),
        feasibility: p.feasibility(&x),
        g,
        a,
    })
}

/// Alternates the `G` and `A` updates.
///
/// Every sweep solves for a new `A`, refits `G` to it, and accepts the pair
/// only if the objective does not increase, so the recorded objectives are
/// non-increasing and every recorded state satisfies `XᵀBX = I_R`.
pub fn solve(p: &CgevdProblem, opts: &CgevdOptions) -> Result<CgevdSolution> {
    let a0 = match &opts.init_a {
        Some(a) => {
            if a.nrows() != p.j || a.ncols() != p.s {
                return Err(Error::DimensionMismatch {
                    what: "initial A rows",
                    expected: p.j,
                    got: a.nrows(),
                });
            }
            a.clone()
        }
        None => random_orthonormal(&mut rng(opts.seed), p.j, p.s),
    };
    let mut state = refit(p, &a0, opts.jitter)?;
    let mut history = vec![SweepRecord {
        sweep: 0,
        objective: state.objective,
        feasibility: state.feasibility,
        accepted: true,
        qcqp_iterations: 0,
        qcqp_feasibility: 0.0,
    }];
    let mut converged = false;
    let mut stalled = false;
    let mut sweeps = 0;

    for sweep in 1..=opts.max_sweeps {
        sweeps = sweep;
        let upd = update_a(p, &state, opts)?;
        let mut record = SweepRecord {
            sweep,
            objective: state.objective,
            feasibility: state.feasibility,
            accepted: false,
            qcqp_iterations: upd.qcqp_iterations,
            qcqp_feasibility: upd.qcqp_feasibility,
        };
        if !upd.accepted {
            stalled = true;
            history.push(record);
            break;
        }
        let candidate = refit(p, &upd.a, opts.jitter)?;
        let prev = state.objective;
        if candidate.objective > prev + opts.accept_tol * prev.abs().max(1.0) {
            stalled = true;
            history.push(record);
            break;
        }
        state = candidate;
        record.objective = state.objective;
        record.feasibility = state.feasibility;
        record.accepted = true;
        history.push(record);
        if prev - state.objective <= opts.tol * prev.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    Ok(CgevdSolution {
        state,
        sweeps,
        converged,
        stalled,
        history,
    })
}
