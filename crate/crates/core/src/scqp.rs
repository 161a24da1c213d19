//! Quadratic programs over the unit sphere,
//! `min ½xᵀQx + bᵀx  s.t.  ‖x‖ = 1`, solved in closed form.
//!
//! The problem is diagonalized, shifted and scaled so that the smallest
//! eigenvalue becomes 1 and the rotated linear term has unit norm. Repeated
//! eigenvalues are merged into a single coordinate and the remaining
//! problem is solved through the minimum root of the secular equation, with
//! the hard case (zero weight on the smallest eigenvalue) handled explicitly.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{sym_evd, Spectrum, SymmetricMatrix};
use crate::secular::{solve_min_root, CanonicalSpectrum, RootOptions, SecularBracket};

#[derive(Debug, Clone, PartialEq)]
pub struct ScqpProblem {
    q: SymmetricMatrix,
    b: DVector<f64>,
}

impl ScqpProblem {
    pub fn new(q: SymmetricMatrix, b: DVector<f64>) -> Result<Self> {
        if q.order() != b.len() {
            return Err(Error::DimensionMismatch {
                what: "linear term length",
                expected: q.order(),
                got: b.len(),
            });
        }
        if q.order() == 0 {
            return Err(Error::invalid("empty problem"));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("linear term has non-finite entries"));
        }
        Ok(ScqpProblem { q, b })
    }

    pub fn q(&self) -> &SymmetricMatrix {
        &self.q
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// `½xᵀQx + bᵀx`
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * self.q.quad_form(x) + self.b.dot(x)
    }

    /// `‖(Q − λI)x + b‖`
    pub fn kkt_residual(&self, x: &DVector<f64>, multiplier: f64) -> f64 {
        (self.q.as_matrix() * x - x * multiplier + &self.b).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScqpOptions {
    /// Rotated coefficients with `|c_l| <= zero_tol · max(1, ‖c‖∞)` are treated as zero.
    pub zero_tol: f64,
    /// Scaled eigenvalues closer than `dup_tol · max(1, s_K)` are merged.
    pub dup_tol: f64,
    pub root: RootOptions,
}

impl Default for ScqpOptions {
    fn default() -> Self {
        ScqpOptions {
            zero_tol: 1e-12,
            dup_tol: 1e-10,
            root: RootOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Multiplicity {
    Unique,
    /// Two minimizers differing in the sign of one component.
    SignPair,
    /// A continuum of minimizers; the solution is one representative.
    SphereFamily,
}

impl Multiplicity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Multiplicity::Unique => "unique",
            Multiplicity::SignPair => "sign_pair",
            Multiplicity::SphereFamily => "sphere_family",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScqpSolution {
    pub x: DVector<f64>,
    /// `λ` with `(Q − λI)x + b = 0`.
    pub multiplier: f64,
    pub objective: f64,
    pub multiplicity: Multiplicity,
    /// Other global minimizers (the sign partner, or one more member of a family).
    pub alternates: Vec<DVector<f64>>,
    pub bracket: Option<SecularBracket>,
}

/// Shifted, scaled and rotated form of a problem.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalScqp {
    /// `(σ − σ₁)/‖b‖ + 1`, with `s[0] == 1` exactly.
    pub s: DVector<f64>,
    /// `Uᵀb/‖b‖` after zero thresholding.
    pub c: DVector<f64>,
    /// `‖b‖`
    pub scale: f64,
    /// `σ₁`
    pub shift: f64,
    /// Indices `l > 0` whose coefficient was thresholded to zero.
    pub zero_index_set: Vec<usize>,
    /// Partition of `0..K` into runs of numerically equal `s`.
    pub groups: Vec<Vec<usize>>,
}

/// Problem with duplicate eigenvalues merged: one coordinate per group.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedScqp {
    pub s: Vec<f64>,
    /// Group norms `‖c_{I_j}‖`.
    pub c: Vec<f64>,
    pub groups: Vec<Vec<usize>>,
}

impl ReducedScqp {
    /// Spreads group values `z_j` back over the original coordinates in
    /// proportion to `c_{I_j}`; groups with zero coefficients receive `z_j`
    /// on their first index.
    pub fn expand(&self, canon: &CanonicalScqp, z: &[f64]) -> DVector<f64> {
        let mut x = DVector::zeros(canon.c.len());
        for (j, group) in self.groups.iter().enumerate() {
            if z[j] == 0.0 {
                continue;
            }
            if self.c[j] > 0.0 {
                for &k in group {
                    x[k] = z[j] * canon.c[k] / self.c[j];
                }
            } else {
                x[group[0]] = z[j];
            }
        }
        x
    }
}

/// Diagonalizes `Q` and returns its spectrum together with the canonical form.
pub fn canonicalize(p: &ScqpProblem, opts: &ScqpOptions) -> Result<(Spectrum, CanonicalScqp)> {
    let spectrum = sym_evd(&p.q)?;
    let beta = spectrum.eigenvectors.transpose() * &p.b;
    let canon = canonicalize_coefficients(&spectrum.eigenvalues, &beta, opts)?;
    Ok((spectrum, canon))
}

/// Canonical form from ascending eigenvalues `σ` and the rotated linear
/// term `β = Uᵀb`.
pub fn canonicalize_coefficients(
    sigma: &DVector<f64>,
    beta: &DVector<f64>,
    opts: &ScqpOptions,
) -> Result<CanonicalScqp> {
    let k = sigma.len();
    if beta.len() != k {
        return Err(Error::DimensionMismatch {
            what: "rotated linear term length",
            expected: k,
            got: beta.len(),
        });
    }
    if k == 0 {
        return Err(Error::invalid("empty problem"));
    }
    let scale = beta.norm();
    if scale == 0.0 {
        return Err(Error::ZeroLinearTerm);
    }
    let shift = sigma[0];
    let mut s = sigma.map(|v| (v - shift) / scale + 1.0);
    s[0] = 1.0;
    let mut c = beta / scale;
    let cut = opts.zero_tol * c.amax().max(1.0);
    let mut zero_index_set = Vec::new();
    for l in 0..k {
        if c[l].abs() <= cut {
            c[l] = 0.0;
            if l > 0 {
                zero_index_set.push(l);
            }
        }
    }
    let gap = opts.dup_tol * s[k - 1].max(1.0);
    let mut groups: Vec<Vec<usize>> = vec![vec![0]];
    for l in 1..k {
        let last = groups.last_mut().expect("at least one group");
        if s[l] - s[*last.last().expect("non-empty group")] <= gap {
            last.push(l);
        } else {
            groups.push(vec![l]);
        }
    }
    Ok(CanonicalScqp {
        s,
        c,
        scale,
        shift,
        zero_index_set,
        groups,
    })
}

/// Merges each group of equal eigenvalues into one coordinate.
pub fn reduce_duplicates(canon: &CanonicalScqp) -> ReducedScqp {
    let s = canon.groups.iter().map(|g| canon.s[g[0]]).collect();
    let c = canon
        .groups
        .iter()
        .map(|g| g.iter().map(|&k| canon.c[k] * canon.c[k]).sum::<f64>().sqrt())
        .collect();
    ReducedScqp {
        s,
        c,
        groups: canon.groups.clone(),
    }
}

/// Minimizer in canonical coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalSolution {
    /// Minimizer with the free component (if any) set to zero.
    pub base: DVector<f64>,
    /// Unit direction and magnitude of the component whose sign is free.
    pub free: Option<(DVector<f64>, f64)>,
    /// `λ_c − 1`, the canonical multiplier relative to the smallest eigenvalue.
    pub lambda_offset: f64,
    pub multiplicity: Multiplicity,
    pub bracket: Option<SecularBracket>,
}

/// Solves `min ½ x̃ᵀdiag(s)x̃ + cᵀx̃` over the unit sphere.
pub fn solve_canonical(canon: &CanonicalScqp, opts: &ScqpOptions) -> Result<CanonicalSolution> {
    let red = reduce_duplicates(canon);
    let m = red.s.len();
    let mut z = vec![0.0; m];

    if red.c[0] != 0.0 {
        let active: Vec<usize> = (0..m).filter(|&j| red.c[j] != 0.0).collect();
        let (root, bracket) = solve_active(&red, &active, opts)?;
        for &j in &active {
            z[j] = -red.c[j] / (root + (red.s[j] - 1.0));
        }
        let base = normalized(red.expand(canon, &z));
        return Ok(CanonicalSolution {
            base,
            free: None,
            lambda_offset: -root,
            multiplicity: Multiplicity::Unique,
            bracket: Some(bracket),
        });
    }

    let active: Vec<usize> = (1..m).filter(|&j| red.c[j] != 0.0).collect();
    if active.is_empty() {
        return Err(Error::Internal("all canonical coefficients vanished".into()));
    }
    let d: f64 = active
        .iter()
        .map(|&j| (red.c[j] / (red.s[j] - 1.0)).powi(2))
        .sum();
    if d <= 1.0 {
        for &j in &active {
            z[j] = red.c[j] / (1.0 - red.s[j]);
        }
        let base = red.expand(canon, &z);
        let z0 = (1.0 - d).max(0.0).sqrt();
        if z0 == 0.0 {
            return Ok(CanonicalSolution {
                base: normalized(base),
                free: None,
                lambda_offset: 0.0,
                multiplicity: Multiplicity::Unique,
                bracket: None,
            });
        }
        let mut dir = DVector::zeros(canon.c.len());
        dir[red.groups[0][0]] = 1.0;
        let multiplicity = if red.groups[0].len() > 1 {
            Multiplicity::SphereFamily
        } else {
            Multiplicity::SignPair
        };
        return Ok(CanonicalSolution {
            base,
            free: Some((dir, z0)),
            lambda_offset: 0.0,
            multiplicity,
            bracket: None,
        });
    }

    let (root, bracket) = solve_active(&red, &active, opts)?;
    let s_first = red.s[active[0]];
    for &j in &active {
        z[j] = -red.c[j] / (root + (red.s[j] - s_first));
    }
    let base = normalized(red.expand(canon, &z));
    Ok(CanonicalSolution {
        base,
        free: None,
        lambda_offset: (s_first - 1.0) - root,
        multiplicity: Multiplicity::Unique,
        bracket: Some(SecularBracket {
            lower: bracket.lower + s_first - 1.0,
            upper: bracket.upper + s_first - 1.0,
            terms_used: bracket.terms_used,
        }),
    })
}

/// Secular root `t` of the sub-problem restricted to `active` groups,
/// re-shifted so that its smallest eigenvalue is 1.
fn solve_active(red: &ReducedScqp, active: &[usize], opts: &ScqpOptions) -> Result<(f64, SecularBracket)> {
    let s_first = red.s[active[0]];
    let mut s: Vec<f64> = active.iter().map(|&j| red.s[j] - s_first + 1.0).collect();
    s[0] = 1.0;
    let c: Vec<f64> = active.iter().map(|&j| red.c[j]).collect();
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let c = c.into_iter().map(|v| v / norm).collect();
    let spec = CanonicalSpectrum::new(s, c)?;
    let root = solve_min_root(&spec, &opts.root)?;
    Ok((root.t, root.bracket))
}

fn normalized(v: DVector<f64>) -> DVector<f64> {
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        v
    }
}

fn first_significant_sign(v: &DVector<f64>) -> f64 {
    let cut = 1e-12 * v.amax();
    match v.iter().find(|x| x.abs() > cut) {
        Some(&x) if x < 0.0 => -1.0,
        _ => 1.0,
    }
}

/// Solves the problem using a precomputed spectrum of a matrix `M`, for the
/// quadratic term `scale · M + shift · I` (`scale > 0`).
pub fn solve_with_spectrum(
    spectrum: &Spectrum,
    scale: f64,
    shift: f64,
    b: &DVector<f64>,
    opts: &ScqpOptions,
) -> Result<ScqpSolution> {
    if !(scale > 0.0) {
        return Err(Error::invalid(format!("spectrum scale must be positive, got {scale}")));
    }
    if b.len() != spectrum.order() {
        return Err(Error::DimensionMismatch {
            what: "linear term length",
            expected: spectrum.order(),
            got: b.len(),
        });
    }
    let u = &spectrum.eigenvectors;
    let sigma = spectrum.eigenvalues.map(|v| scale * v + shift);
    let beta = u.transpose() * b;
    solve_rotated(&sigma, &beta, |v| u * v, opts)
}

/// Solves the problem given in an orthonormal eigenbasis: `sigma` holds the
/// eigenvalues of the quadratic term in ascending order, `beta` the rotated
/// linear term, and `to_original` maps eigenbasis coordinates back.
pub fn solve_rotated<F>(sigma: &DVector<f64>, beta: &DVector<f64>, to_original: F, opts: &ScqpOptions) -> Result<ScqpSolution>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if beta.len() != sigma.len() {
        return Err(Error::DimensionMismatch {
            what: "rotated linear term length",
            expected: sigma.len(),
            got: beta.len(),
        });
    }
    let objective = |xt: &DVector<f64>| {
        0.5 * xt.iter().zip(sigma.iter()).map(|(x, s)| s * x * x).sum::<f64>() + beta.dot(xt)
    };

    if beta.norm() == 0.0 {
        let mut xt = DVector::zeros(sigma.len());
        xt[0] = 1.0;
        let mut x = to_original(&xt);
        x *= first_significant_sign(&x);
        return Ok(ScqpSolution {
            objective: objective(&xt),
            alternates: vec![-&x],
            x,
            multiplier: sigma[0],
            multiplicity: Multiplicity::SphereFamily,
            bracket: None,
        });
    }

    let canon = canonicalize_coefficients(sigma, beta, opts)?;
    let sol = solve_canonical(&canon, opts)?;
    let multiplier = canon.shift + canon.scale * sol.lambda_offset;
    let map = |bracket: SecularBracket| SecularBracket {
        lower: canon.shift + canon.scale * (bracket.lower - 1.0),
        upper: canon.shift + canon.scale * (bracket.upper - 1.0),
        terms_used: bracket.terms_used,
    };
    match sol.free {
        None => Ok(ScqpSolution {
            objective: objective(&sol.base),
            x: to_original(&sol.base),
            multiplier,
            multiplicity: sol.multiplicity,
            alternates: Vec::new(),
            bracket: sol.bracket.map(map),
        }),
        Some((dir, z0)) => {
            let free = to_original(&dir);
            let sign = first_significant_sign(&free);
            let xt = &sol.base + &dir * (sign * z0);
            let alt_t = &sol.base - &dir * (sign * z0);
            Ok(ScqpSolution {
                objective: objective(&xt),
                x: to_original(&xt),
                multiplier,
                multiplicity: sol.multiplicity,
                alternates: vec![to_original(&alt_t)],
                bracket: None,
            })
        }
    }
}

/// Global minimizer of `½xᵀQx + bᵀx` over `‖x‖ = 1`.
pub fn solve(p: &ScqpProblem, opts: &ScqpOptions) -> Result<ScqpSolution> {
    let spectrum = sym_evd(&p.q)?;
    let mut sol = solve_with_spectrum(&spectrum, 1.0, 0.0, &p.b, opts)?;
    sol.objective = p.objective(&sol.x);
    Ok(sol)
}

/// Global minimizer of `½xᵀQx + bᵀx` over the ball `‖x‖ <= 1`.
///
/// The ball is lifted to a sphere in one more dimension with a slack
/// coordinate carrying a zero eigenvalue and a zero linear coefficient.
pub fn solve_inequality(p: &ScqpProblem, opts: &ScqpOptions) -> Result<ScqpSolution> {
    let k = p.dim();
    let mut qe = DMatrix::zeros(k + 1, k + 1);
    qe.view_mut((1, 1), (k, k)).copy_from(p.q.as_matrix());
    let mut be = DVector::zeros(k + 1);
    be.rows_mut(1, k).copy_from(&p.b);
    let lifted = ScqpProblem::new(SymmetricMatrix::new(qe)?, be)?;
    let sol = solve(&lifted, opts)?;
    let x = sol.x.rows(1, k).into_owned();
    let mut alternates: Vec<DVector<f64>> = Vec::new();
    for alt in &sol.alternates {
        let a = alt.rows(1, k).into_owned();
        let tol = 1e-12 * (1.0 + x.norm());
        if (&a - &x).norm() > tol && alternates.iter().all(|o| (o - &a).norm() > tol) {
            alternates.push(a);
        }
    }
    let multiplicity = if alternates.is_empty() {
        Multiplicity::Unique
    } else {
        sol.multiplicity
    };
    Ok(ScqpSolution {
        objective: p.objective(&x),
        x,
        multiplier: sol.multiplier,
        multiplicity,
        alternates,
        bracket: sol.bracket,
    })
}

/// Minimizer of the matrix problem `½tr(XᵀQX) + tr(BᵀX)` over `‖X‖_F = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSolution {
    pub x: DMatrix<f64>,
    pub multiplier: f64,
    pub objective: f64,
    pub multiplicity: Multiplicity,
}

pub fn solve_matrix(q: &SymmetricMatrix, b: &DMatrix<f64>, opts: &ScqpOptions) -> Result<MatrixSolution> {
    let n = q.order();
    if b.nrows() != n {
        return Err(Error::DimensionMismatch {
            what: "linear term rows",
            expected: n,
            got: b.nrows(),
        });
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("linear term has non-finite entries"));
    }
    if b.norm() == 0.0 {
        return Err(Error::ZeroLinearTerm);
    }
    let spectrum = sym_evd(q)?;
    let u = &spectrum.eigenvectors;
    // Row i of UᵀB, i.e. (Bᵀu_i)ᵀ.
    let rotated = u.transpose() * b;
    let c = DVector::from_iterator(n, rotated.row_iter().map(|r| r.norm()));
    let diag = Spectrum {
        eigenvalues: spectrum.eigenvalues.clone(),
        eigenvectors: DMatrix::identity(n, n),
    };
    let sol = solve_with_spectrum(&diag, 1.0, 0.0, &c, opts)?;
    let mut y = DMatrix::zeros(n, b.ncols());
    for i in 0..n {
        if sol.x[i] == 0.0 {
            continue;
        }
        if c[i] > 0.0 {
            let row = rotated.row(i) * (sol.x[i] / c[i]);
            y.set_row(i, &row);
        } else {
            y[(i, 0)] = sol.x[i];
        }
    }
    let x = u * y;
    let objective = 0.5 * (x.transpose() * q.as_matrix() * &x).trace() + (b.transpose() * &x).trace();
    Ok(MatrixSolution {
        x,
        multiplier: sol.multiplier,
        objective,
        multiplicity: sol.multiplicity,
    })
}
