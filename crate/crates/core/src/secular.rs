//! The scalar secular equation `f'(λ) = 1 − Σ c_k² / (λ − s_k)²` and its
//! minimum root.
//!
//! Internally the root is located in the variable `t = 1 − λ`, where the
//! equation reads `g(t) = 1 − c₁²/t² − Σ_{k≥2} c_k²/(d_k + t)²` with
//! `d_k = s_k − 1`. On `t > 0` the function `g` is increasing and concave,
//! which makes a left-started Newton iteration monotone.

use crate::error::{Error, Result};

/// Shifted and scaled spectrum `s` (strictly ascending, `s[0] == 1`) with a
/// unit-norm coefficient vector `c` whose entries are all nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalSpectrum {
    s: Vec<f64>,
    c: Vec<f64>,
}

impl CanonicalSpectrum {
    pub fn new(s: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::invalid("empty spectrum"));
        }
        if s.len() != c.len() {
            return Err(Error::DimensionMismatch {
                what: "secular coefficients",
                expected: s.len(),
                got: c.len(),
            });
        }
        if s.iter().chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("spectrum has non-finite entries"));
        }
        if s[0] != 1.0 {
            return Err(Error::invalid(format!("s[0] must equal 1, got {}", s[0])));
        }
        if let Some(w) = s.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "s must be strictly ascending (s[{}] = {} >= s[{}] = {})",
                w,
                s[w],
                w + 1,
                s[w + 1]
            )));
        }
        if let Some(k) = c.iter().position(|&v| v == 0.0) {
            return Err(Error::invalid(format!("c[{k}] is zero")));
        }
        let norm2: f64 = c.iter().map(|v| v * v).sum();
        if (norm2 - 1.0).abs() > 2e-12 {
            return Err(Error::invalid(format!("c must have unit norm, got {}", norm2.sqrt())));
        }
        Ok(CanonicalSpectrum { s, c })
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    /// Evaluates `g(t) = f'(1 − t)`.
    pub fn eval_t(&self, t: f64) -> f64 {
        self.terms().eval(t).0
    }

    fn terms(&self) -> Terms {
        Terms {
            c2: self.c.iter().map(|v| v * v).collect(),
            d: self.s.iter().map(|v| v - 1.0).collect(),
        }
    }
}

/// Bounds `lower <= λ* <= upper` on the minimum root together with the
/// number of exactly-kept terms of the truncated equation that produced them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecularBracket {
    pub lower: f64,
    pub upper: f64,
    pub terms_used: usize,
}

impl SecularBracket {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, lambda: f64) -> bool {
        self.lower <= lambda && lambda <= self.upper
    }
}

/// Minimum root of the secular equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecularRoot {
    /// `1 − λ*`, kept separately because it carries more relative precision.
    pub t: f64,
    pub lambda: f64,
    pub bracket: SecularBracket,
    pub residual: f64,
    pub iterations: usize,
}

/// Settings for [`solve_min_root`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Bisection stops once the relative bracket width falls below this.
    pub bisection_width: f64,
    /// `None` picks the truncation length automatically.
    pub terms: Option<usize>,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions {
            tol: 1e-12,
            max_iters: 200,
            bisection_width: 1e-6,
            terms: None,
        }
    }
}

/// `1 − Σ c_k² / (λ − s_k)²`.
pub fn eval_secular(lambda: f64, spec: &CanonicalSpectrum) -> Result<f64> {
    let mut acc = 1.0;
    for (&s, &c) in spec.s.iter().zip(&spec.c) {
        let den = lambda - s;
        if den.abs() < 1e-300 {
            return Err(Error::Pole(lambda));
        }
        acc -= (c / den) * (c / den);
    }
    if !acc.is_finite() {
        return Err(Error::Pole(lambda));
    }
    Ok(acc)
}

/// Lumped one-term quartic `t⁴ + 2dt³ + (d²−1)t² − 2c₁²dt − c₁²d²`.
pub fn one_term_quartic(t: f64, c1: f64, d: f64) -> f64 {
    let c2 = c1 * c1;
    (((t + 2.0 * d) * t + (d * d - 1.0)) * t - 2.0 * c2 * d) * t - c2 * d * d
}

/// Root of the one-term quartic on `[|c₁|, 1]`, returned as the pair of
/// endpoints of a bisection interval of width at most a few ulps.
fn quartic_root(c1: f64, d: f64) -> Result<(f64, f64)> {
    let mut lo = c1.abs();
    let mut hi = 1.0;
    let plo = one_term_quartic(lo, c1, d);
    let phi = one_term_quartic(hi, c1, d);
    if plo > 0.0 || phi < 0.0 {
        return Err(Error::Internal(format!(
            "one-term quartic has no sign change on [|c1|, 1] (c1 = {c1}, d = {d})"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if one_term_quartic(mid, c1, d) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, hi))
}

/// Brackets from the one-term equations with the whole tail placed at `s₂`
/// (lower bound) and at `s_K` (upper bound).
pub fn bracket_one_term(spec: &CanonicalSpectrum) -> Result<SecularBracket> {
    let k = spec.len();
    if k < 2 {
        return Err(Error::invalid("one-term bracket needs at least two terms"));
    }
    let c1 = spec.c[0];
    let d1 = spec.s[1] - 1.0;
    let d2 = spec.s[k - 1] - 1.0;
    let (_, t1_hi) = quartic_root(c1, d1)?;
    let (t2_lo, _) = quartic_root(c1, d2)?;
    let limit = 1.0 - c1.abs();
    Ok(SecularBracket {
        lower: (1.0 - t1_hi).clamp(0.0, limit),
        upper: (1.0 - t2_lo).clamp(0.0, limit),
        terms_used: 1,
    })
}

/// Brackets from truncated equations that keep the first `l` terms exactly
/// and lump the remaining mass at `s[l]` (lower) or `s[K−1]` (upper).
pub fn bracket_truncated(spec: &CanonicalSpectrum, l: usize) -> Result<SecularBracket> {
    let k = spec.len();
    if l < 1 || l + 2 > k {
        return Err(Error::invalid(format!(
            "truncation length {l} outside 1..={} for {k} terms",
            k.saturating_sub(2)
        )));
    }
    if l == 1 {
        return bracket_one_term(spec);
    }
    let full = spec.terms();
    let tail: f64 = full.c2[l..].iter().sum();
    let make = |d_tail: f64| {
        let mut c2 = full.c2[..l].to_vec();
        let mut d = full.d[..l].to_vec();
        c2.push(tail);
        d.push(d_tail);
        Terms { c2, d }
    };
    let lower_terms = make(full.d[l]);
    let upper_terms = make(full.d[k - 1]);
    let opts = RootOptions::default();
    let c1 = spec.c[0].abs();
    let (_, tl_hi) = lower_terms.root_interval(c1, 1.0, &opts)?;
    let (tu_lo, _) = upper_terms.root_interval(c1, 1.0, &opts)?;
    let limit = 1.0 - c1;
    Ok(SecularBracket {
        lower: (1.0 - tl_hi).clamp(0.0, limit),
        upper: (1.0 - tu_lo).clamp(0.0, limit),
        terms_used: l,
    })
}

/// Truncation length used when none is requested: the number of leading
/// values with `s_k − 1 < 1`, capped at `K − 2` and at least one.
pub fn auto_terms(spec: &CanonicalSpectrum) -> usize {
    let k = spec.len();
    if k <= 2 {
        return 1;
    }
    let first_far = spec.s.iter().position(|&s| s - 1.0 >= 1.0).unwrap_or(k);
    first_far.clamp(1, k - 2)
}

/// Locates the minimum root `λ* ∈ [0, 1 − |c₁|)` of the secular equation.
pub fn solve_min_root(spec: &CanonicalSpectrum, opts: &RootOptions) -> Result<SecularRoot> {
    let k = spec.len();
    if k == 1 {
        let t = spec.c[0].abs();
        let lambda = 1.0 - t;
        return Ok(SecularRoot {
            t,
            lambda,
            bracket: SecularBracket {
                lower: lambda,
                upper: lambda,
                terms_used: 1,
            },
            residual: 0.0,
            iterations: 0,
        });
    }
    let l = match opts.terms {
        Some(l) => l.clamp(1, (k - 2).max(1)),
        None => auto_terms(spec),
    };
    let bracket = if l == 1 {
        bracket_one_term(spec)?
    } else {
        bracket_truncated(spec, l)?
    };
    let terms = spec.terms();
    let c1 = spec.c[0].abs();
    let (mut lo, mut hi) = (1.0 - bracket.upper, 1.0 - bracket.lower);
    // Rounding in the bracket computation can misplace an endpoint by a few
    // ulps; fall back to the analytic interval in that case.
    if terms.eval(lo).0 > 0.0 {
        lo = c1;
    }
    if terms.eval(hi).0 < 0.0 {
        hi = 1.0;
    }
    let (t, residual, iterations) = terms.solve(lo, hi, opts)?;
    let lambda = 1.0 - t;
    Ok(SecularRoot {
        t,
        lambda,
        bracket: SecularBracket {
            lower: bracket.lower.min(lambda),
            upper: bracket.upper.max(lambda),
            terms_used: bracket.terms_used,
        },
        residual,
        iterations,
    })
}

/// Generic secular sum `1 − Σ c2_k / (d_k + t)²` in the `t` variable.
#[derive(Debug, Clone)]
struct Terms {
    c2: Vec<f64>,
    d: Vec<f64>,
}

impl Terms {
    /// Value and derivative at `t > 0`.
    fn eval(&self, t: f64) -> (f64, f64) {
        let mut g = 1.0;
        let mut dg = 0.0;
        for (&c2, &d) in self.c2.iter().zip(&self.d) {
            let inv = 1.0 / (d + t);
            let q = c2 * inv * inv;
            g -= q;
            dg += 2.0 * q * inv;
        }
        (g, dg)
    }

    /// Bisection on the sign change until the relative width is below
    /// `opts.bisection_width`, then Newton steps from the left end.
    fn solve(&self, lo: f64, hi: f64, opts: &RootOptions) -> Result<(f64, f64, usize)> {
        let (mut a, mut b) = (lo, hi);
        let tol = opts.tol * self.c2.len() as f64;
        let mut iters = 0;
        let (ga, _) = self.eval(a);
        if ga.abs() <= tol || ga >= 0.0 {
            return Ok((a, ga.abs(), 0));
        }
        while b - a > opts.bisection_width * b && iters < opts.max_iters {
            let mid = 0.5 * (a + b);
            let (g, _) = self.eval(mid);
            if g.abs() <= tol {
                return Ok((mid, g.abs(), iters + 1));
            }
            if g < 0.0 {
                a = mid;
            } else {
                b = mid;
            }
            iters += 1;
        }
        let mut t = a;
        let mut best = (t, f64::INFINITY);
        while iters < opts.max_iters {
            iters += 1;
            let (g, dg) = self.eval(t);
            if g.abs() < best.1 {
                best = (t, g.abs());
            }
            if g.abs() <= tol || b - a <= 4.0 * f64::EPSILON * t {
                return Ok((t, g.abs(), iters));
            }
            if g < 0.0 {
                a = t;
            } else {
                b = t;
            }
            let step = t - g / dg;
            t = if step > a && step < b && dg > 0.0 { step } else { 0.5 * (a + b) };
            if t <= a || t >= b {
                // Bracket exhausted at floating-point resolution.
                let (g, _) = self.eval(t);
                return Ok((t, g.abs(), iters));
            }
        }
        Err(Error::Convergence {
            iterations: iters,
            best: 1.0 - best.0,
            residual: best.1,
        })
    }

    /// Root interval `[a, b]` with `g(a) <= 0 <= g(b)` of floating-point
    /// width, used for conservative bounds.
    fn root_interval(&self, lo: f64, hi: f64, opts: &RootOptions) -> Result<(f64, f64)> {
        let (t, _, _) = self.solve(lo, hi, opts)?;
        let mut a = t;
        let mut b = t;
        for _ in 0..64 {
            if self.eval(a).0 <= 0.0 {
                break;
            }
            a = (a - 4.0 * f64::EPSILON * a.max(f64::MIN_POSITIVE)).max(lo);
        }
        for _ in 0..64 {
            if self.eval(b).0 >= 0.0 {
                break;
            }
            b = (b + 4.0 * f64::EPSILON * b).min(hi);
        }
        Ok((a, b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(s: &[f64], c: &[f64]) -> CanonicalSpectrum {
        CanonicalSpectrum::new(s.to_vec(), c.to_vec()).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(eval_secular(0.0, &spec(&[1.0], &[1.0])).unwrap(), 0.0);
        let h = 0.5f64.sqrt();
        let v = eval_secular(0.0, &spec(&[1.0, 2.0], &[h, h])).unwrap();
        assert!((v - 0.375).abs() < 1e-15);
        let v = eval_secular(0.0, &spec(&[1.0, 3.0], &[0.6, 0.8])).unwrap();
        assert!((v - (1.0 - 0.36 - 0.64 / 9.0)).abs() < 1e-15);
    }

    #[test]
    fn eval_at_pole() {
        assert!(matches!(
            eval_secular(1.0, &spec(&[1.0], &[1.0])),
            Err(Error::Pole(_))
        ));
    }

    #[test]
    fn construction_checks() {
        assert!(CanonicalSpectrum::new(vec![1.0, 1.0], vec![0.6, 0.8]).is_err());
        assert!(CanonicalSpectrum::new(vec![1.5, 2.0], vec![0.6, 0.8]).is_err());
        assert!(CanonicalSpectrum::new(vec![1.0, 2.0], vec![1.0, 0.0]).is_err());
        assert!(CanonicalSpectrum::new(vec![1.0, 2.0], vec![0.6, 0.6]).is_err());
        assert!(CanonicalSpectrum::new(vec![1.0, 2.0], vec![0.6]).is_err());
    }

    #[test]
    fn two_terms_bracket_is_tight() {
        let h = 0.5f64.sqrt();
        let sp = spec(&[1.0, 2.0], &[h, h]);
        let br = bracket_one_term(&sp).unwrap();
        assert!(br.width() < 1e-14);
        let f = eval_secular(br.lower, &sp).unwrap();
        assert!(f.abs() < 1e-10, "f = {f}");
    }

    #[test]
    fn single_term_root() {
        let r = solve_min_root(&spec(&[1.0], &[-1.0]), &RootOptions::default()).unwrap();
        assert_eq!(r.lambda, 0.0);
    }

    #[test]
    fn auto_policy() {
        let sp = spec(&[1.0, 1.1, 1.2, 3.0, 4.0], &[0.2, 0.4, 0.4, 0.4, (1.0f64 - 0.52).sqrt()]);
        assert_eq!(auto_terms(&sp), 3);
        let sp = spec(&[1.0, 5.0, 6.0, 7.0], &[0.5, 0.5, 0.5, 0.5]);
        assert_eq!(auto_terms(&sp), 1);
        let sp = spec(&[1.0, 1.1, 1.2, 1.3], &[0.5, 0.5, 0.5, 0.5]);
        assert_eq!(auto_terms(&sp), 2);
    }

    #[test]
    fn tiny_leading_coefficient() {
        let c0: f64 = 1e-11;
        let rest = ((1.0 - c0 * c0) / 2.0).sqrt();
        let sp = spec(&[1.0, 50.0, 80.0], &[c0, rest, rest]);
        let r = solve_min_root(&sp, &RootOptions::default()).unwrap();
        assert!(sp.eval_t(r.t).abs() < 1e-10);
        assert!(r.t >= c0 && r.t < 1e-10);
    }
}
