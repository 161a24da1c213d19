//! Quadratic programs over an intersection of ellipsoids,
//! `min ½xᵀQx + bᵀx  s.t.  xᵀH_m x = 1`, by an augmented Lagrangian splitting.
//!
//! One positive definite matrix (the carrier) is factored as `F Fᵀ` and
//! turns its ellipsoid into the unit sphere under `x̃ = Fᵀx`. Every other
//! constraint becomes a homogeneous condition `x̃ᵀD̃_n x̃ = 0`, i.e. a
//! linear condition on `x̃ ⊗ x̃`. The splitting `z = x̃ ⊗ x̃` then alternates
//! a sphere-constrained QP in `x̃` with an orthogonal projection in `z`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{
    cholesky, orthonormal_basis, outer_vec, solve_lower, solve_lower_transpose, sym_evd, unvec, vec_of, Spectrum,
    SymmetricMatrix,
};
use crate::scqp::{self, ScqpOptions, ScqpProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct QcqpProblem {
    q: SymmetricMatrix,
    b: DVector<f64>,
    h: Vec<SymmetricMatrix>,
    homogeneous: Vec<SymmetricMatrix>,
    reported: usize,
}

impl QcqpProblem {
    pub fn new(q: SymmetricMatrix, b: DVector<f64>, h: Vec<SymmetricMatrix>) -> Result<Self> {
        let k = q.order();
        if k == 0 {
            return Err(Error::invalid("empty problem"));
        }
        if b.len() != k {
            return Err(Error::DimensionMismatch {
                what: "linear term length",
                expected: k,
                got: b.len(),
            });
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("linear term has non-finite entries"));
        }
        if h.is_empty() {
            return Err(Error::invalid("at least one constraint matrix is required"));
        }
        for hm in &h {
            if hm.order() != k {
                return Err(Error::DimensionMismatch {
                    what: "constraint matrix order",
                    expected: k,
                    got: hm.order(),
                });
            }
        }
        Ok(QcqpProblem {
            q,
            b,
            h,
            homogeneous: Vec::new(),
            reported: k,
        })
    }

    /// Problem with inequality constraints `xᵀH_m x <= 1`.
    ///
    /// Each inequality gets a slack `s_m` with `xᵀH_m x + s_m² = 1`; the
    /// returned problem lives in `K + M` variables and reports only `x`.
    pub fn with_inequalities(q: SymmetricMatrix, b: DVector<f64>, h: Vec<SymmetricMatrix>) -> Result<Self> {
        let base = QcqpProblem::new(q, b, h)?;
        let k = base.q.order();
        let m = base.h.len();
        let n = k + m;
        let mut qe = DMatrix::zeros(n, n);
        qe.view_mut((0, 0), (k, k)).copy_from(base.q.as_matrix());
        let mut be = DVector::zeros(n);
        be.rows_mut(0, k).copy_from(&base.b);
        let mut he = Vec::with_capacity(m);
        for (i, hm) in base.h.iter().enumerate() {
            let mut e = DMatrix::zeros(n, n);
            e.view_mut((0, 0), (k, k)).copy_from(hm.as_matrix());
            e[(k + i, k + i)] = 1.0;
            he.push(SymmetricMatrix::new(e)?);
        }
        let mut lifted = QcqpProblem::new(SymmetricMatrix::new(qe)?, be, he)?;
        lifted.reported = k;
        Ok(lifted)
    }

    /// Adds constraints `xᵀN_j x = 0`.
    pub fn with_homogeneous(mut self, n: Vec<SymmetricMatrix>) -> Result<Self> {
        for nj in &n {
            if nj.order() != self.dim() {
                return Err(Error::DimensionMismatch {
                    what: "homogeneous constraint order",
                    expected: self.dim(),
                    got: nj.order(),
                });
            }
        }
        self.homogeneous.extend(n);
        Ok(self)
    }

    pub fn q(&self) -> &SymmetricMatrix {
        &self.q
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn constraints(&self) -> &[SymmetricMatrix] {
        &self.h
    }

    pub fn homogeneous(&self) -> &[SymmetricMatrix] {
        &self.homogeneous
    }

    /// Number of optimization variables (including slacks).
    pub fn dim(&self) -> usize {
        self.q.order()
    }

    /// Length of the reported solution.
    pub fn reported_dim(&self) -> usize {
        self.reported
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * self.q.quad_form(x) + self.b.dot(x)
    }

    /// `xᵀH_m x − 1` for each ellipsoid followed by `xᵀN_j x` for each
    /// homogeneous constraint.
    pub fn constraint_residuals(&self, x: &DVector<f64>) -> Vec<f64> {
        self.h
            .iter()
            .map(|hm| hm.quad_form(x) - 1.0)
            .chain(self.homogeneous.iter().map(|n| n.quad_form(x)))
            .collect()
    }

    /// Largest absolute constraint residual.
    pub fn feasibility(&self, x: &DVector<f64>) -> f64 {
        self.constraint_residuals(x).iter().fold(0.0, |a, r| a.max(r.abs()))
    }

    fn min_condition(&self) -> f64 {
        self.h
            .iter()
            .filter_map(|hm| pd_condition(hm).ok().flatten())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Condition number if the matrix is numerically positive definite.
fn pd_condition(m: &SymmetricMatrix) -> Result<Option<f64>> {
    let spec = sym_evd(m)?;
    let n = spec.order();
    let lo = spec.eigenvalues[0];
    let hi = spec.eigenvalues[n - 1];
    if hi > 0.0 && lo > 1e-12 * hi {
        Ok(Some(hi / lo))
    } else {
        Ok(None)
    }
}

fn min_eigenvalue(m: &SymmetricMatrix) -> Result<f64> {
    Ok(sym_evd(m)?.eigenvalues[0])
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &DVector<f64>) -> DVector<f64> {
    let mut u: Vec<f64> = v.iter().cloned().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.map(|x| (x - theta).max(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsdCombination {
    pub matrix: SymmetricMatrix,
    pub weights: DVector<f64>,
    /// Projected-gradient fixed-point residual of the weights.
    pub kkt_residual: f64,
}

/// Convex combination `Σ α_n H_n` of minimum Frobenius norm.
pub fn generate_psd_combination(h: &[SymmetricMatrix]) -> Result<PsdCombination> {
    let m = h.len();
    if m == 0 {
        return Err(Error::invalid("at least one matrix is required"));
    }
    let k = h[0].order();
    if let Some(bad) = h.iter().find(|hm| hm.order() != k) {
        return Err(Error::DimensionMismatch {
            what: "constraint matrix order",
            expected: k,
            got: bad.order(),
        });
    }
    let mut g = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let v = h[i].as_matrix().dot(h[j].as_matrix());
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    let weights = simplex_qp(&g)?;
    let kkt_residual = simplex_residual(&normalized(&g)?, &weights);
    let mut combo = DMatrix::zeros(k, k);
    for (hm, a) in h.iter().zip(weights.iter()) {
        combo += hm.as_matrix() * *a;
    }
    Ok(PsdCombination {
        matrix: SymmetricMatrix::new(combo)?,
        weights,
        kkt_residual,
    })
}

fn normalized(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let top = sym_evd(&SymmetricMatrix::new(g.clone())?)?.eigenvalues.max();
    Ok(if top > 0.0 { g / top } else { g.clone() })
}

/// `‖α − P(α − ∇f(α)/L)‖` for `f = αᵀGα` with `L = 2`, `G` normalized.
fn simplex_residual(g: &DMatrix<f64>, alpha: &DVector<f64>) -> f64 {
    let grad = g * alpha * 2.0;
    (alpha - project_simplex(&(alpha - grad / 2.0))).norm()
}

/// `min αᵀGα` over the simplex: accelerated projected gradient from the
/// uniform point, then an equality-constrained solve on the detected support.
fn simplex_qp(g_raw: &DMatrix<f64>) -> Result<DVector<f64>> {
    let m = g_raw.nrows();
    let g = normalized(g_raw)?;
    let f = |a: &DVector<f64>| a.dot(&(&g * a));
    let mut alpha = DVector::from_element(m, 1.0 / m as f64);
    if m == 1 {
        return Ok(alpha);
    }
    let mut yk = alpha.clone();
    let mut t = 1.0_f64;
    for _ in 0..200_000 {
        let grad = &g * &yk * 2.0;
        let next = project_simplex(&(&yk - grad / 2.0));
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if f(&next) > f(&alpha) {
            // Restart the momentum.
            yk = alpha.clone();
            t = 1.0;
            continue;
        }
        yk = &next + (&next - &alpha) * ((t - 1.0) / t_next);
        alpha = next;
        t = t_next;
        if simplex_residual(&g, &alpha) < 1e-13 {
            break;
        }
    }
    if let Some(polished) = polish_support(&g, &alpha) {
        if simplex_residual(&g, &polished) <= simplex_residual(&g, &alpha) && f(&polished) <= f(&alpha) + 1e-15 {
            alpha = polished;
        }
    }
    Ok(alpha)
}

fn polish_support(g: &DMatrix<f64>, alpha: &DVector<f64>) -> Option<DVector<f64>> {
    let support: Vec<usize> = (0..alpha.len()).filter(|&i| alpha[i] > 1e-12).collect();
    let s = support.len();
    let mut kkt = DMatrix::zeros(s + 1, s + 1);
    let mut rhs = DVector::zeros(s + 1);
    for (a, &i) in support.iter().enumerate() {
        for (b, &j) in support.iter().enumerate() {
            kkt[(a, b)] = 2.0 * g[(i, j)];
        }
        kkt[(a, s)] = 1.0;
        kkt[(s, a)] = 1.0;
    }
    rhs[s] = 1.0;
    let sol = kkt.clone().lu().solve(&rhs)?;
    if (&kkt * &sol - &rhs).norm() > 1e-12 || sol.rows(0, s).iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return None;
    }
    let mut out = DVector::zeros(alpha.len());
    for (a, &i) in support.iter().enumerate() {
        out[i] = sol[a];
    }
    Some(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CarrierPolicy {
    GivenIndex(usize),
    MinCondition,
    Frobenius,
}

/// The positive definite matrix whose ellipsoid becomes the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct Carrier {
    pub matrix: SymmetricMatrix,
    /// Index into the constraint list, if the carrier is one of them.
    pub index: Option<usize>,
    /// Combination weights for the Frobenius policy.
    pub weights: Option<DVector<f64>>,
    pub condition: f64,
}

pub fn select_sphere_matrix(h: &[SymmetricMatrix], policy: CarrierPolicy) -> Result<Carrier> {
    if h.is_empty() {
        return Err(Error::invalid("at least one constraint matrix is required"));
    }
    match policy {
        CarrierPolicy::GivenIndex(i) => {
            let hm = h
                .get(i)
                .ok_or_else(|| Error::invalid(format!("carrier index {i} out of range (have {})", h.len())))?;
            match pd_condition(hm)? {
                Some(condition) => Ok(Carrier {
                    matrix: hm.clone(),
                    index: Some(i),
                    weights: None,
                    condition,
                }),
                None => Err(Error::NotPositiveDefinite {
                    pivot: i,
                    value: min_eigenvalue(hm)?,
                }),
            }
        }
        CarrierPolicy::MinCondition => {
            let mut best: Option<(usize, f64)> = None;
            for (i, hm) in h.iter().enumerate() {
                if let Some(c) = pd_condition(hm)? {
                    if best.is_none_or(|(_, bc)| c < bc) {
                        best = Some((i, c));
                    }
                }
            }
            match best {
                Some((i, condition)) => Ok(Carrier {
                    matrix: h[i].clone(),
                    index: Some(i),
                    weights: None,
                    condition,
                }),
                None => Err(Error::NotPositiveDefinite {
                    pivot: 0,
                    value: min_eigenvalue(&h[0])?,
                }),
            }
        }
        CarrierPolicy::Frobenius => {
            let combo = generate_psd_combination(h)?;
            match pd_condition(&combo.matrix)? {
                Some(condition) => Ok(Carrier {
                    matrix: combo.matrix,
                    index: None,
                    weights: Some(combo.weights),
                    condition,
                }),
                None => Err(Error::NotPositiveDefinite {
                    pivot: 0,
                    value: min_eigenvalue(&combo.matrix)?,
                }),
            }
        }
    }
}

/// The problem in carrier coordinates `x̃ = Fᵀx`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReparamProblem {
    /// Lower-triangular factor with `F Fᵀ = carrier`.
    pub f: DMatrix<f64>,
    pub q: SymmetricMatrix,
    pub b: DVector<f64>,
    /// Columns `vec(D̃_n)`.
    pub d: DMatrix<f64>,
    /// Orthonormal basis of the column space of `d`.
    pub d_basis: DMatrix<f64>,
}

impl ReparamProblem {
    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// `x = F⁻ᵀx̃`
    pub fn to_original(&self, xt: &DVector<f64>) -> DVector<f64> {
        let rhs = DMatrix::from_column_slice(xt.len(), 1, xt.as_slice());
        solve_lower_transpose(&self.f, &rhs).column(0).into_owned()
    }

    /// `x̃ = Fᵀx`
    pub fn to_reparam(&self, x: &DVector<f64>) -> DVector<f64> {
        self.f.transpose() * x
    }

    /// Orthogonal projection onto the complement of `span(D)`.
    pub fn project(&self, w: &DVector<f64>) -> DVector<f64> {
        if self.d_basis.ncols() == 0 {
            return w.clone();
        }
        let p = w - &self.d_basis * (self.d_basis.transpose() * w);
        // A second pass removes the rounding left by the first.
        &p - &self.d_basis * (self.d_basis.transpose() * &p)
    }

    /// `F⁻¹ M F⁻ᵀ`
    pub fn congruence(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let left = solve_lower(&self.f, m);
        solve_lower(&self.f, &left.transpose()).transpose()
    }
}

pub fn reparameterize(p: &QcqpProblem, carrier: &Carrier, jitter: Option<f64>) -> Result<ReparamProblem> {
    if carrier.matrix.order() != p.dim() {
        return Err(Error::DimensionMismatch {
            what: "carrier order",
            expected: p.dim(),
            got: carrier.matrix.order(),
        });
    }
    let f = cholesky(&carrier.matrix, jitter)?;
    let mut rp = ReparamProblem {
        f,
        q: SymmetricMatrix::identity(0),
        b: DVector::zeros(0),
        d: DMatrix::zeros(0, 0),
        d_basis: DMatrix::zeros(0, 0),
    };
    let k = p.dim();
    let b = solve_lower(&rp.f, &DMatrix::from_column_slice(k, 1, p.b.as_slice()));
    rp.b = b.column(0).into_owned();
    rp.q = SymmetricMatrix::new(rp.congruence(p.q.as_matrix()))?;

    let mut columns: Vec<DVector<f64>> = Vec::new();
    for (n, hm) in p.h.iter().enumerate() {
        if carrier.index == Some(n) {
            continue;
        }
        let dn = rp.congruence(&(carrier.matrix.as_matrix() - hm.as_matrix()));
        columns.push(vec_of(&((&dn + dn.transpose()) * 0.5)));
    }
    for nj in &p.homogeneous {
        let dn = rp.congruence(nj.as_matrix());
        columns.push(vec_of(&((&dn + dn.transpose()) * 0.5)));
    }
    rp.d = if columns.is_empty() {
        DMatrix::zeros(k * k, 0)
    } else {
        DMatrix::from_columns(&columns)
    };
    rp.d_basis = orthonormal_basis(&rp.d, 1e-11)?;
    Ok(rp)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateMode {
    Exact,
    /// Linearized penalty with proximal weight `μ`, raised at each step to
    /// [`majorizing_mu`] when that is larger.
    Linearized { mu: f64 },
}

/// Smallest proximal weight for which the linearized surrogate bounds the
/// penalty `½‖xxᵀ − T‖²` from above on the unit sphere, `2 − 2λ_min(T)`,
/// with `λ_min` replaced by its Gershgorin lower bound.
pub fn majorizing_mu(t: &DMatrix<f64>) -> f64 {
    let lower = (0..t.nrows())
        .map(|i| t[(i, i)] - (0..t.ncols()).filter(|&j| j != i).map(|j| t[(i, j)].abs()).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    2.0 - 2.0 * lower
}

/// Default proximal weight of the linearized update.
pub const DEFAULT_MU: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaPolicy {
    Fixed,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaInit {
    Absolute(f64),
    /// Multiple of the smallest condition number among the constraint matrices.
    ConditionFraction(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QcqpOptions {
    pub gamma0: GammaInit,
    pub gamma_policy: GammaPolicy,
    /// Factor applied to `γ` by the adaptive policy.
    pub alpha_step: f64,
    /// Iterations without a 1% improvement of the best primal residual
    /// before the adaptive policy acts.
    pub patience: usize,
    pub mode: UpdateMode,
    pub max_iters: usize,
    /// Bound on the primal residual `‖x̃⊗x̃ − z‖`.
    pub tol: f64,
    /// Bound on the largest constraint residual.
    pub feas_tol: f64,
    /// Bound on the change `‖z_k − z_{k−1}‖`.
    pub step_tol: f64,
    pub carrier: CarrierPolicy,
    pub jitter: Option<f64>,
    /// Initial point in original coordinates.
    pub warm_start: Option<DVector<f64>>,
    pub record_trace: bool,
    pub scqp: ScqpOptions,
}

impl Default for QcqpOptions {
    fn default() -> Self {
        QcqpOptions {
            gamma0: GammaInit::ConditionFraction(0.1),
            gamma_policy: GammaPolicy::Adaptive,
            alpha_step: 2.0,
            patience: 50,
            mode: UpdateMode::Exact,
            max_iters: 100_000,
            tol: 1e-8,
            feas_tol: 1e-8,
            step_tol: 1e-8,
            carrier: CarrierPolicy::MinCondition,
            jitter: None,
            warm_start: None,
            record_trace: true,
            scqp: ScqpOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub objective: f64,
    pub feasibility: f64,
    pub primal_residual: f64,
    pub gamma: f64,
}

/// Iterates of the splitting, all in carrier coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub x: DVector<f64>,
    pub z: DVector<f64>,
    pub y: DVector<f64>,
    pub gamma: f64,
}

impl AdmmState {
    /// `x̃ ⊗ x̃ − z`
    pub fn primal_residual(&self) -> f64 {
        (outer_vec(&self.x) - &self.z).norm()
    }

    /// `sym(reshape(z − y/γ))`
    pub fn target(&self) -> DMatrix<f64> {
        let k = self.x.len();
        let t = unvec(&(&self.z - &self.y / self.gamma), k, k);
        (&t + t.transpose()) * 0.5
    }
}

/// The x-step. `cache` must hold the spectrum of `rp.q` in linearized mode.
pub fn update_x(
    state: &AdmmState,
    rp: &ReparamProblem,
    mode: UpdateMode,
    cache: Option<&Spectrum>,
    opts: &ScqpOptions,
) -> Result<scqp::ScqpSolution> {
    let k = rp.dim();
    let g = state.gamma;
    let tx = state.target();
    match mode {
        UpdateMode::Exact => {
            let m = rp.q.as_matrix() + DMatrix::identity(k, k) * g - tx * (2.0 * g);
            let sub = ScqpProblem::new(SymmetricMatrix::new(m)?, rp.b.clone())?;
            scqp::solve(&sub, opts)
        }
        UpdateMode::Linearized { mu } => {
            let owned;
            let spectrum = match cache {
                Some(s) => s,
                None => {
                    owned = sym_evd(&rp.q)?;
                    &owned
                }
            };
            let mu = mu.max(majorizing_mu(&tx));
            let xo = &state.x;
            let lin = &rp.b + xo * (g * (2.0 - mu)) - (tx * xo) * (2.0 * g);
            scqp::solve_with_spectrum(spectrum, 1.0, g * mu, &lin, opts)
        }
    }
}

/// `z = Π⊥_D(x̃⊗x̃ + y/γ)`
pub fn update_z(state: &AdmmState, rp: &ReparamProblem) -> DVector<f64> {
    rp.project(&(outer_vec(&state.x) + &state.y / state.gamma))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QcqpSolution {
    /// Reported variables in original coordinates (slacks removed).
    pub x: DVector<f64>,
    /// All variables in original coordinates.
    pub x_full: DVector<f64>,
    pub objective: f64,
    pub residuals: Vec<f64>,
    pub feasibility: f64,
    pub primal_residual: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gamma: f64,
    pub carrier_index: Option<usize>,
    pub carrier_weights: Option<DVector<f64>>,
    pub trace: Vec<TraceRecord>,
}

/// Ratio by which one residual must exceed the other before `γ` moves.
const DOMINANCE: f64 = 10.0;

/// Residual-balancing step-size rule: when the best primal residual has not
/// improved by 1% within `patience` iterations, `γ` grows if the primal
/// residual dominates and shrinks if the dual residual does.
#[derive(Debug, Clone)]
pub(crate) struct GammaController {
    alpha: f64,
    patience: usize,
    floor: f64,
    ceiling: f64,
    best: f64,
    window_best: f64,
    since: usize,
    grow_when_balanced: bool,
}

impl GammaController {
    pub(crate) fn new(gamma0: f64, alpha: f64, patience: usize) -> Self {
        GammaController {
            alpha,
            patience: patience.max(1),
            floor: gamma0 * 1e-8,
            ceiling: gamma0 * 1e8,
            best: f64::INFINITY,
            window_best: f64::INFINITY,
            since: 0,
            grow_when_balanced: false,
        }
    }

    /// On a stall with neither residual dominating, grow `γ` instead of
    /// leaving it unchanged.
    pub(crate) fn grow_when_balanced(mut self) -> Self {
        self.grow_when_balanced = true;
        self
    }

    pub(crate) fn observe(&mut self, gamma: &mut f64, primal: f64, dual: f64) {
        self.best = self.best.min(primal);
        self.since += 1;
        if self.since < self.patience {
            return;
        }
        if self.best > 0.99 * self.window_best {
            if dual > DOMINANCE * primal {
                *gamma = (*gamma / self.alpha).max(self.floor);
            } else if primal > DOMINANCE * dual || self.grow_when_balanced {
                *gamma = (*gamma * self.alpha).min(self.ceiling);
            }
        }
        self.window_best = self.best;
        self.since = 0;
    }
}

pub fn solve(p: &QcqpProblem, opts: &QcqpOptions) -> Result<QcqpSolution> {
    let carrier = select_sphere_matrix(&p.h, opts.carrier)?;
    solve_with_carrier(p, &carrier, opts)
}

pub fn solve_with_carrier(p: &QcqpProblem, carrier: &Carrier, opts: &QcqpOptions) -> Result<QcqpSolution> {
    if !(opts.alpha_step > 1.0) {
        return Err(Error::invalid(format!("alpha_step must exceed 1, got {}", opts.alpha_step)));
    }
    if let UpdateMode::Linearized { mu } = opts.mode {
        if !(mu > 0.0) {
            return Err(Error::invalid(format!("mu must be positive, got {mu}")));
        }
    }
    let mut rp = reparameterize(p, carrier, opts.jitter)?;
    // γ is measured against an objective of unit size.
    let objective_scale = {
        let ev = sym_evd(&rp.q)?.eigenvalues;
        let s = ev.amax().max(rp.b.norm());
        if s > 0.0 {
            s
        } else {
            1.0
        }
    };
    rp.q = rp.q.scaled(1.0 / objective_scale);
    rp.b /= objective_scale;
    let gamma0 = match opts.gamma0 {
        GammaInit::Absolute(g) => g,
        GammaInit::ConditionFraction(f) => {
            let kappa = p.min_condition();
            f * if kappa.is_finite() { kappa } else { carrier.condition }
        }
    };
    if !(gamma0 > 0.0) || !gamma0.is_finite() {
        return Err(Error::invalid(format!("initial gamma must be positive, got {gamma0}")));
    }
    let cache = match opts.mode {
        UpdateMode::Linearized { .. } => Some(sym_evd(&rp.q)?),
        UpdateMode::Exact => None,
    };

    let x0 = match &opts.warm_start {
        Some(w) => {
            if w.len() != p.dim() {
                return Err(Error::DimensionMismatch {
                    what: "warm start length",
                    expected: p.dim(),
                    got: w.len(),
                });
            }
            let xt = rp.to_reparam(w);
            let n = xt.norm();
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::invalid("warm start must be a nonzero finite vector"));
            }
            xt / n
        }
        None => scqp::solve(&ScqpProblem::new(rp.q.clone(), rp.b.clone())?, &opts.scqp)?.x,
    };
    let k = rp.dim();
    let mut state = AdmmState {
        z: DVector::zeros(k * k),
        y: DVector::zeros(k * k),
        x: x0,
        gamma: gamma0,
    };
    state.z = update_z(&state, &rp);

    let evaluate = |xt: &DVector<f64>| {
        let x = rp.to_original(xt);
        (p.objective(&x), p.feasibility(&x), x)
    };

    let mut trace = Vec::new();
    let mut best = (f64::INFINITY, state.x.clone(), 0.0, 0usize);
    let mut controller = GammaController::new(gamma0, opts.alpha_step, opts.patience);
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=opts.max_iters {
        iterations = it;
        let sol = update_x(&state, &rp, opts.mode, cache.as_ref(), &opts.scqp)?;
        state.x = sol.x;
        let z_prev = state.z.clone();
        state.z = update_z(&state, &rp);
        let xx = outer_vec(&state.x);
        state.y += (&xx - &state.z) * state.gamma;

        let primal = (&xx - &state.z).norm();
        let step = (&state.z - &z_prev).norm();
        let (objective, feasibility, _) = evaluate(&state.x);
        if opts.record_trace {
            trace.push(TraceRecord {
                iteration: it,
                objective,
                feasibility,
                primal_residual: primal,
                gamma: state.gamma,
            });
        }
        let merit = feasibility.max(primal);
        if merit <= best.0 {
            best = (merit, state.x.clone(), state.gamma, it);
        }
        if primal <= opts.tol && feasibility <= opts.feas_tol && step <= opts.step_tol {
            converged = true;
            best = (merit, state.x.clone(), state.gamma, it);
            break;
        }

        if opts.gamma_policy == GammaPolicy::Adaptive {
            let dual = state.gamma * step;
            controller.observe(&mut state.gamma, primal, dual);
        }
    }

    let xt = if converged { state.x.clone() } else { best.1.clone() };
    let (objective, feasibility, x_full) = evaluate(&xt);
    let primal = if converged {
        state.primal_residual()
    } else {
        (outer_vec(&xt) - rp.project(&outer_vec(&xt))).norm()
    };
    Ok(QcqpSolution {
        x: x_full.rows(0, p.reported_dim()).into_owned(),
        residuals: p.constraint_residuals(&x_full),
        x_full,
        objective,
        feasibility,
        primal_residual: primal,
        converged,
        iterations,
        gamma: if converged { state.gamma } else { best.2 },
        carrier_index: carrier.index,
        carrier_weights: carrier.weights.clone(),
        trace,
    })
}
