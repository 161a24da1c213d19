//! Rank-1 benchmark: the splitting solver against a multi-start power
//! method on random unit-norm symmetric tensors.

use serde::Serialize;
use sphereqp::random::{random_unit_vector, rng};
use sphereqp::tensor::{best_rank1, power_oracle, Rank1Options, SymTensor4};

use crate::error::{CliError, CliResult};

pub const SUCCESS_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSettings {
    pub count: usize,
    pub dim: usize,
    pub seed: u64,
    pub restarts: usize,
    /// Use exact rank-1 tensors `v⁽⁴⁾` instead of random ones.
    pub planted: bool,
    pub solver: Rank1Options,
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings {
            count: 200,
            dim: 10,
            seed: 0,
            restarts: 100,
            planted: false,
            solver: Rank1Options {
                record_trace: false,
                ..Rank1Options::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct BenchRow {
    pub instance: usize,
    pub seed: u64,
    pub solver_weight: f64,
    pub oracle_weight: f64,
    pub solver_error: f64,
    pub oracle_error: f64,
    /// `(ε − ε*) / ε*` with `ε*` the better of the two errors; zero when
    /// `ε* = 0` and the solver attains it.
    pub relative_error: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchSummary {
    pub count: usize,
    pub dim: usize,
    pub seed: u64,
    pub threshold: f64,
    pub fraction_below: f64,
    /// Empirical quantiles `(p, relative error)` of the relative error.
    pub quantiles: Vec<(f64, f64)>,
    pub converged: usize,
}

fn relative(err: f64, best: f64) -> f64 {
    let gap = (err - best).max(0.0);
    if best > 0.0 {
        gap / best
    } else if gap == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

pub fn instance(settings: &BenchSettings, k: usize) -> (u64, SymTensor4) {
    let seed = settings.seed.wrapping_add(k as u64);
    let mut r = rng(seed);
    let t = if settings.planted {
        SymTensor4::rank1(1.0, &random_unit_vector(&mut r, settings.dim))
    } else {
        SymTensor4::random(&mut r, settings.dim)
    };
    (seed, t)
}

pub fn run_instance(settings: &BenchSettings, k: usize) -> CliResult<BenchRow> {
    let (seed, t) = instance(settings, k);
    let sol = best_rank1(&t, &settings.solver)?;
    let oracle = power_oracle(&t, settings.restarts, seed);
    let best = sol.error.min(oracle.error);
    Ok(BenchRow {
        instance: k,
        seed,
        solver_weight: sol.weight,
        oracle_weight: oracle.weight,
        solver_error: sol.error,
        oracle_error: oracle.error,
        relative_error: relative(sol.error, best),
        iterations: sol.iterations,
        converged: sol.converged,
    })
}

pub fn run(settings: &BenchSettings) -> CliResult<(Vec<BenchRow>, BenchSummary)> {
    if settings.dim == 0 || settings.dim > 20 {
        return Err(CliError::field("dim", format!("must lie in 1..=20, got {}", settings.dim)));
    }
    if settings.count == 0 {
        return Err(CliError::field("count", "must be positive"));
    }
    let rows = (0..settings.count)
        .map(|k| run_instance(settings, k))
        .collect::<CliResult<Vec<_>>>()?;
    Ok((rows.clone(), summarize(settings, &rows)))
}

pub fn summarize(settings: &BenchSettings, rows: &[BenchRow]) -> BenchSummary {
    let mut errs: Vec<f64> = rows.iter().map(|r| r.relative_error).collect();
    errs.sort_by(f64::total_cmp);
    let below = errs.iter().filter(|&&e| e < SUCCESS_THRESHOLD).count();
    let quantile = |p: f64| {
        let idx = ((p * errs.len() as f64).ceil() as usize).clamp(1, errs.len()) - 1;
        errs[idx]
    };
    BenchSummary {
        count: rows.len(),
        dim: settings.dim,
        seed: settings.seed,
        threshold: SUCCESS_THRESHOLD,
        fraction_below: below as f64 / rows.len().max(1) as f64,
        quantiles: [0.5, 0.75, 0.85, 0.9, 0.95, 1.0].iter().map(|&p| (p, quantile(p))).collect(),
        converged: rows.iter().filter(|r| r.converged).count(),
    }
}
