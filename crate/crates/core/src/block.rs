//! Block-coordinate solver for large sphere-constrained problems.
//!
//! The variables are split into segments `x(I_l) = α_l x̃_l` with unit
//! directions `x̃_l` and scales `Σ α_l² = 1`. Each step solves a small sphere
//! problem for one direction, then a two-variable sphere problem for the
//! scale of that segment against the rest.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{sym_evd, Spectrum, SymmetricMatrix};
use crate::random::rng;
use crate::scqp::{self, Multiplicity, ScqpOptions, ScqpProblem, ScqpSolution};

/// Disjoint cover of `0..K` with the spectrum of each diagonal block cached.
#[derive(Debug, Clone)]
pub struct BlockPartition {
    pub segments: Vec<Vec<usize>>,
    pub spectra: Vec<Spectrum>,
}

impl BlockPartition {
    /// Random shuffle of `0..K` cut into consecutive chunks of at most `max_block`.
    pub fn random<R: Rng + ?Sized>(q: &SymmetricMatrix, max_block: usize, rng: &mut R) -> Result<Self> {
        let k = q.order();
        if max_block == 0 {
            return Err(Error::invalid("max_block must be positive"));
        }
        let mut idx: Vec<usize> = (0..k).collect();
        idx.shuffle(rng);
        let segments: Vec<Vec<usize>> = idx.chunks(max_block).map(|c| c.to_vec()).collect();
        Self::from_segments(q, segments)
    }

    pub fn from_segments(q: &SymmetricMatrix, segments: Vec<Vec<usize>>) -> Result<Self> {
        let k = q.order();
        let mut seen = vec![false; k];
        for &i in segments.iter().flatten() {
            if i >= k || seen[i] {
                return Err(Error::invalid(format!("segments are not a disjoint cover (index {i})")));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("segments do not cover every index"));
        }
        let spectra = segments
            .iter()
            .map(|seg| sym_evd(&SymmetricMatrix::new(q.as_matrix().select_rows(seg).select_columns(seg))?))
            .collect::<Result<Vec<_>>>()?;
        Ok(BlockPartition { segments, spectra })
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockOptions {
    pub max_block: usize,
    pub max_outer: usize,
    pub max_sweeps: usize,
    /// Relative objective decrease below which a sweep (or a partition) stops.
    pub tol: f64,
    /// Direction updates are skipped for segments with `|α_l|` below this.
    pub min_scale: f64,
    /// When progress stalls, reflect `x` across the smallest eigenvector of
    /// `Q` if that lowers the objective.
    pub reflect: bool,
    pub seed: u64,
    pub scqp: ScqpOptions,
}

impl Default for BlockOptions {
    fn default() -> Self {
        BlockOptions {
            max_block: 64,
            max_outer: 20,
            max_sweeps: 1000,
            tol: 1e-10,
            min_scale: 1e-14,
            reflect: true,
            seed: 0,
            scqp: ScqpOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlockResult {
    pub solution: ScqpSolution,
    /// Objective after every direction or scale update.
    pub objective_trace: Vec<f64>,
    /// Largest `|‖x‖ − 1|` observed after any update.
    pub max_norm_error: f64,
    pub sweeps: usize,
    pub partitions: usize,
    pub reflections: usize,
}

fn objective(q: &DMatrix<f64>, b: &DVector<f64>, x: &DVector<f64>) -> f64 {
    0.5 * x.dot(&(q * x)) + b.dot(x)
}

/// Replaces the direction of segment `l` by the minimizer of the global
/// objective with every other entry of `x` held fixed.
pub fn update_direction(
    partition: &BlockPartition,
    l: usize,
    x: &mut DVector<f64>,
    q: &SymmetricMatrix,
    b: &DVector<f64>,
    opts: &BlockOptions,
) -> Result<()> {
    let seg = &partition.segments[l];
    let xl = x.select_rows(seg);
    let alpha = xl.norm();
    if alpha < opts.min_scale {
        return Ok(());
    }
    let qm = q.as_matrix();
    let qx = qm * &*x;
    let qll_xl = qm.select_rows(seg).select_columns(seg) * &xl;
    // b_l + Q_{l,l̄} x_{l̄}
    let g = b.select_rows(seg) + qx.select_rows(seg) - qll_xl;
    let sol = scqp::solve_with_spectrum(&partition.spectra[l], alpha * alpha, 0.0, &(g * alpha), &opts.scqp)?;
    for (i, &k) in seg.iter().enumerate() {
        x[k] = alpha * sol.x[i];
    }
    Ok(())
}

/// Re-balances the scale of segment `l` against the rest of the vector by
/// solving a two-variable sphere problem, keeping all directions fixed.
pub fn update_scales(
    partition: &BlockPartition,
    l: usize,
    x: &mut DVector<f64>,
    q: &SymmetricMatrix,
    b: &DVector<f64>,
    opts: &BlockOptions,
) -> Result<()> {
    let k = x.len();
    let seg = &partition.segments[l];
    if seg.len() == k {
        return Ok(());
    }
    let qm = q.as_matrix();
    let mut in_seg = vec![false; k];
    for &i in seg {
        in_seg[i] = true;
    }
    let mut xl = DVector::zeros(k);
    let mut xr = DVector::zeros(k);
    for i in 0..k {
        if in_seg[i] {
            xl[i] = x[i];
        } else {
            xr[i] = x[i];
        }
    }
    let (al, ar) = (xl.norm(), xr.norm());
    let dir_l = if al > 0.0 { xl / al } else { return Ok(()) };
    let dir_r = if ar > 0.0 {
        xr / ar
    } else {
        // The rest of the vector is zero; reopen it along the steepest
        // descent direction of the objective restricted to it.
        let grad = qm * &dir_l + b;
        let mut d = DVector::zeros(k);
        for i in 0..k {
            if !in_seg[i] {
                d[i] = -grad[i];
            }
        }
        let n = d.norm();
        if n > 0.0 {
            d / n
        } else {
            let m = (k - seg.len()) as f64;
            DVector::from_fn(k, |i, _| if in_seg[i] { 0.0 } else { 1.0 / m.sqrt() })
        }
    };
    let qdl = qm * &dir_l;
    let qdr = qm * &dir_r;
    let t = DMatrix::from_row_slice(
        2,
        2,
        &[dir_l.dot(&qdl), dir_l.dot(&qdr), dir_r.dot(&qdl), dir_r.dot(&qdr)],
    );
    let u = DVector::from_vec(vec![b.dot(&dir_l), b.dot(&dir_r)]);
    let before = objective(qm, b, x);
    let sol = scqp::solve(&ScqpProblem::new(SymmetricMatrix::new(t)?, u)?, &opts.scqp)?;
    let candidate = &dir_l * sol.x[0] + &dir_r * sol.x[1];
    if objective(qm, b, &candidate) <= before {
        *x = candidate;
    }
    Ok(())
}

/// Unit eigenvector for the smallest eigenvalue of `Q` by power iteration on
/// `ρI − Q`, with `ρ` a Gershgorin bound on the spectrum.
pub fn smallest_eigenvector<R: Rng + ?Sized>(q: &DMatrix<f64>, rng: &mut R, max_iters: usize, tol: f64) -> DVector<f64> {
    let k = q.nrows();
    let rho = q.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut v = crate::random::random_unit_vector(rng, k);
    for _ in 0..max_iters {
        let w = &v * rho - q * &v;
        let n = w.norm();
        if n == 0.0 {
            break;
        }
        let w = w / n;
        let done = (&w - &v).norm() < tol;
        v = w;
        if done {
            break;
        }
    }
    v
}

/// Householder reflection of `x` across the hyperplane orthogonal to `v`,
/// kept only if it lowers the objective. Returns whether `x` changed.
fn reflect_if_better(q: &DMatrix<f64>, b: &DVector<f64>, v: &DVector<f64>, x: &mut DVector<f64>) -> bool {
    let along = v.dot(x);
    if along * v.dot(b) <= 0.0 {
        return false;
    }
    let candidate = &*x - v * (2.0 * along);
    if objective(q, b, &candidate) < objective(q, b, x) {
        *x = candidate;
        true
    } else {
        false
    }
}

/// Block-coordinate minimization of `½xᵀQx + bᵀx` over `‖x‖ = 1`.
pub fn solve_blocked(p: &ScqpProblem, opts: &BlockOptions) -> Result<BlockResult> {
    let q = p.q();
    let b = p.b();
    let k = p.dim();
    if k < 2 {
        return Err(Error::invalid("block solver needs at least two variables"));
    }
    if opts.max_block >= k {
        let solution = scqp::solve(p, &opts.scqp)?;
        return Ok(BlockResult {
            objective_trace: vec![solution.objective],
            max_norm_error: (solution.x.norm() - 1.0).abs(),
            solution,
            sweeps: 0,
            partitions: 0,
            reflections: 0,
        });
    }
    let qm = q.as_matrix();
    let mut x = if b.norm() > 0.0 {
        -b / b.norm()
    } else {
        DVector::from_fn(k, |i, _| if i == 0 { 1.0 } else { 0.0 })
    };
    let mut rng = rng(opts.seed);
    let mut trace = vec![objective(qm, b, &x)];
    let mut max_norm_error: f64 = 0.0;
    let mut sweeps = 0;
    let mut partitions = 0;
    let mut reflections = 0;
    let mut lowest: Option<DVector<f64>> = None;
    let rel = |old: f64, new: f64| (old - new) / old.abs().max(1.0);

    for _ in 0..opts.max_outer {
        partitions += 1;
        let partition = BlockPartition::random(q, opts.max_block, &mut rng)?;
        let outer_start = *trace.last().expect("trace is non-empty");
        for _ in 0..opts.max_sweeps {
            sweeps += 1;
            let sweep_start = *trace.last().expect("trace is non-empty");
            for l in 0..partition.len() {
                update_direction(&partition, l, &mut x, q, b, opts)?;
                max_norm_error = max_norm_error.max((x.norm() - 1.0).abs());
                trace.push(objective(qm, b, &x));
                update_scales(&partition, l, &mut x, q, b, opts)?;
                max_norm_error = max_norm_error.max((x.norm() - 1.0).abs());
                trace.push(objective(qm, b, &x));
            }
            if rel(sweep_start, *trace.last().expect("trace is non-empty")) < opts.tol {
                break;
            }
        }
        if rel(outer_start, *trace.last().expect("trace is non-empty")) < opts.tol {
            if !opts.reflect {
                break;
            }
            let v = lowest.get_or_insert_with(|| smallest_eigenvector(qm, &mut rng, 100_000, 1e-13));
            if !reflect_if_better(qm, b, v, &mut x) {
                break;
            }
            reflections += 1;
            max_norm_error = max_norm_error.max((x.norm() - 1.0).abs());
            trace.push(objective(qm, b, &x));
        }
    }

    let multiplier = x.dot(&(qm * &x + b));
    let objective = objective(qm, b, &x);
    Ok(BlockResult {
        solution: ScqpSolution {
            x,
            multiplier,
            objective,
            multiplicity: Multiplicity::Unique,
            alternates: Vec::new(),
            bracket: None,
        },
        objective_trace: trace,
        max_norm_error,
        sweeps,
        partitions,
        reflections,
    })
}
