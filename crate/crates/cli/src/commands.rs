//! Subcommand implementations.

use std::fs;
use std::io::{ErrorKind, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use clap::ValueEnum;
use nalgebra::{DMatrix, DVector};
use sphereqp::block::{solve_blocked, BlockOptions};
use sphereqp::cgevd::{self, CgevdOptions, CgevdProblem};
use sphereqp::qcqp::{self, GammaInit, GammaPolicy, QcqpOptions, QcqpProblem, UpdateMode, DEFAULT_MU};
use sphereqp::regression::{self, BoundStatus, RegressionOptions, RegressionProblem};
use sphereqp::scqp::{self, ScqpOptions, ScqpProblem};
use sphereqp::tensor::{self, Branch, Rank1Options, SymTensor4};
use sphereqp::SymmetricMatrix;

use crate::args::{AdmmFlags, CarrierArg, Command, Common, GammaPolicyArg, ModeArg, QcqpFlags};
use crate::bench::{self, BenchSettings};
use crate::deconv::{self, DeconvSettings};
use crate::demo;
use crate::error::{CliError, CliResult};
use crate::problem::{digest, matrix, require, rows_of, scalar, symmetric, vector, FileOptions, Kind, ProblemFile};
use crate::solution::SolutionFile;
use crate::trace::{write_trace, TraceRow};

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

/// Result of a solver subcommand before it is written out.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub solution: SolutionFile,
    pub trace: Vec<TraceRow>,
}

pub fn execute(command: Command) -> CliResult<i32> {
    match command {
        Command::Scqp { common, block_size } => finish(&common, run_scqp(&common, block_size)),
        Command::Qcqp { common, qcqp } => finish(&common, run_qcqp(&common, &qcqp)),
        Command::Boundedreg { common } => finish(&common, run_boundedreg(&common)),
        Command::Rank1 { common, admm } => finish(&common, run_rank1(&common, &admm)),
        Command::Cgevd { common, qcqp } => finish(&common, run_cgevd(&common, &qcqp)),
        Command::DemoDeconv {
            size,
            out,
            trace,
            seed,
            tol,
            max_iters,
        } => {
            let common = Common {
                out,
                trace,
                ..Common::default()
            };
            let settings = DeconvSettings {
                size,
                seed,
                tol,
                max_iters,
            };
            finish(&common, run_deconv(&settings))
        }
        Command::BenchRank1 {
            count,
            dim,
            seed,
            restarts,
            planted,
            out,
            csv,
            tol,
            max_iters,
            admm,
        } => {
            let mut settings = BenchSettings {
                count,
                dim,
                seed,
                restarts,
                planted,
                ..BenchSettings::default()
            };
            let common = Common {
                tol,
                max_iters,
                ..Common::default()
            };
            settings.solver = rank1_options(&common, &admm, &FileOptions::default(), settings.solver)?;
            run_bench(&settings, out.as_deref(), csv.as_deref())
        }
        Command::DemoProblems { dir, seed } => {
            fs::create_dir_all(&dir).map_err(|e| CliError::io(dir.display().to_string(), e))?;
            for (name, problem) in demo::all(seed)? {
                let path = dir.join(name);
                fs::write(&path, problem.to_json()).map_err(|e| CliError::io(path.display().to_string(), e))?;
            }
            Ok(EXIT_CONVERGED)
        }
    }
}

fn finish(common: &Common, outcome: CliResult<(Outcome, Instant)>) -> CliResult<i32> {
    let (mut outcome, started) = outcome?;
    outcome.solution.wall_time_seconds = started.elapsed().as_secs_f64();
    if let Some(path) = &common.trace {
        write_trace(path, &outcome.trace)?;
    }
    write_output(common.out.as_deref(), &outcome.solution.to_json())?;
    Ok(if outcome.solution.converged {
        EXIT_CONVERGED
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn write_output(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, format!("{text}\n")).map_err(|e| CliError::io(p.display().to_string(), e)),
        None => match writeln!(std::io::stdout().lock(), "{text}") {
            Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(CliError::io("stdout", e)),
            _ => Ok(()),
        },
    }
}

/// Reads the problem file and checks that its kind suits the subcommand.
pub fn load(common: &Common, accepted: &[Kind]) -> CliResult<(ProblemFile, String)> {
    let path = common
        .input
        .as_ref()
        .ok_or_else(|| CliError::Usage("--in is required".into()))?;
    let bytes = fs::read(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    let problem = ProblemFile::parse(&bytes)?;
    if !accepted.contains(&problem.kind) {
        let names: Vec<&str> = accepted.iter().map(Kind::as_str).collect();
        return Err(CliError::field(
            "kind",
            format!("`{}` cannot be solved here; expected {}", problem.kind.as_str(), names.join(" or ")),
        ));
    }
    Ok((problem, digest(&bytes)))
}

fn positive(field: &str, value: f64) -> CliResult<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(CliError::field(field, format!("must be positive and finite, got {value}")))
    }
}

fn parse_enum<T: ValueEnum>(field: &str, s: &str) -> CliResult<T> {
    T::from_str(s, true).map_err(|e| CliError::field(field, e))
}

fn tolerance(common: &Common, file: &FileOptions) -> CliResult<Option<f64>> {
    common.tol.or(file.tol).map(|t| positive("tol", t)).transpose()
}

fn gamma_policy(flags: &AdmmFlags, file: &FileOptions) -> CliResult<Option<GammaPolicy>> {
    let arg = match (flags.gamma_policy, &file.gamma_policy) {
        (Some(p), _) => Some(p),
        (None, Some(s)) => Some(parse_enum::<GammaPolicyArg>("options.gamma_policy", s)?),
        (None, None) => None,
    };
    Ok(arg.map(|p| match p {
        GammaPolicyArg::Fixed => GammaPolicy::Fixed,
        GammaPolicyArg::Adaptive => GammaPolicy::Adaptive,
    }))
}

pub fn qcqp_options(common: &Common, flags: &QcqpFlags, file: &FileOptions, base: QcqpOptions) -> CliResult<QcqpOptions> {
    let mut opts = base;
    if let Some(t) = tolerance(common, file)? {
        opts.tol = t;
        opts.feas_tol = t;
        opts.step_tol = t;
    }
    if let Some(n) = common.max_iters.or(file.max_iters) {
        opts.max_iters = n;
    }
    let admm = &flags.admm;
    match (admm.gamma0, admm.gamma_fraction, file.gamma0, file.gamma_fraction) {
        (Some(g), _, _, _) => opts.gamma0 = GammaInit::Absolute(positive("gamma0", g)?),
        (None, Some(f), _, _) => opts.gamma0 = GammaInit::ConditionFraction(positive("gamma_fraction", f)?),
        (None, None, Some(g), _) => opts.gamma0 = GammaInit::Absolute(positive("options.gamma0", g)?),
        (None, None, None, Some(f)) => {
            opts.gamma0 = GammaInit::ConditionFraction(positive("options.gamma_fraction", f)?)
        }
        (None, None, None, None) => {}
    }
    if let Some(p) = gamma_policy(admm, file)? {
        opts.gamma_policy = p;
    }
    if let Some(a) = admm.alpha_step.or(file.alpha_step) {
        opts.alpha_step = positive("alpha_step", a)?;
    }
    let mode = match (flags.mode, &file.mode) {
        (Some(m), _) => Some(m),
        (None, Some(s)) => Some(parse_enum::<ModeArg>("options.mode", s)?),
        (None, None) => None,
    };
    let mu = flags.mu.or(file.mu).map(|m| positive("mu", m)).transpose()?;
    match mode {
        Some(ModeArg::Exact) => opts.mode = UpdateMode::Exact,
        Some(ModeArg::Linearized) => {
            opts.mode = UpdateMode::Linearized {
                mu: mu.unwrap_or(DEFAULT_MU),
            }
        }
        None => {
            if let (UpdateMode::Linearized { .. }, Some(m)) = (opts.mode, mu) {
                opts.mode = UpdateMode::Linearized { mu: m };
            }
        }
    }
    let carrier = match (flags.carrier, &file.carrier) {
        (Some(c), _) => Some(c),
        (None, Some(s)) => Some(CarrierArg::from_str(s).map_err(|e| CliError::field("options.carrier", e))?),
        (None, None) => None,
    };
    if let Some(CarrierArg(c)) = carrier {
        opts.carrier = c;
    }
    if let Some(j) = flags.jitter.or(file.jitter) {
        opts.jitter = Some(positive("jitter", j)?);
    }
    Ok(opts)
}

pub fn rank1_options(common: &Common, flags: &AdmmFlags, file: &FileOptions, base: Rank1Options) -> CliResult<Rank1Options> {
    let mut opts = base;
    if let Some(t) = tolerance(common, file)? {
        opts.tol = t;
    }
    if let Some(n) = common.max_iters.or(file.max_iters) {
        opts.max_iters = n;
    }
    if flags.gamma_fraction.is_some() || file.gamma_fraction.is_some() {
        return Err(CliError::field(
            "gamma_fraction",
            "not available for tensors; use gamma0",
        ));
    }
    if let Some(g) = flags.gamma0.or(file.gamma0) {
        opts.gamma0 = positive("gamma0", g)?;
    }
    if let Some(p) = gamma_policy(flags, file)? {
        opts.gamma_policy = p;
    }
    if let Some(a) = flags.alpha_step.or(file.alpha_step) {
        opts.alpha_step = positive("alpha_step", a)?;
    }
    Ok(opts)
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.as_slice().to_vec()
}

fn symmetric_list(field: &str, list: &[crate::problem::Rows], order: usize) -> CliResult<Vec<SymmetricMatrix>> {
    list.iter()
        .enumerate()
        .map(|(k, rows)| symmetric(&format!("{field}[{k}]"), rows, Some(order)))
        .collect()
}

fn run_scqp(common: &Common, block_size: Option<usize>) -> CliResult<(Outcome, Instant)> {
    let (pf, hash) = load(common, &[Kind::Scqp, Kind::ScqpIneq])?;
    let q = symmetric("Q", require("Q", pf.q.as_ref())?, None)?;
    let b = vector("b", require("b", pf.b.as_ref())?, Some(q.order()))?;
    let file = pf.options();
    let started = Instant::now();
    let problem = ScqpProblem::new(q, b)?;
    let mut out = SolutionFile::new(pf.kind, hash);
    let mut trace = Vec::new();
    match block_size {
        Some(size) => {
            if pf.kind == Kind::ScqpIneq {
                return Err(CliError::Usage("--block-size applies to equality-constrained files only".into()));
            }
            if size == 0 {
                return Err(CliError::field("block_size", "must be positive"));
            }
            let mut opts = BlockOptions {
                max_block: size,
                seed: common.seed.or(file.seed).unwrap_or(0),
                ..BlockOptions::default()
            };
            if let Some(t) = tolerance(common, &file)? {
                opts.tol = t;
            }
            if let Some(n) = common.max_iters.or(file.max_iters) {
                opts.max_sweeps = n;
            }
            let res = solve_blocked(&problem, &opts)?;
            let x = &res.solution.x;
            out.x = Some(vec_of(x));
            out.objective = res.solution.objective;
            out.multiplier = Some(res.solution.multiplier);
            out.constraint_residuals = vec![x.norm_squared() - 1.0];
            out.converged = res.sweeps < opts.max_sweeps;
            out.iterations = res.sweeps;
            out.detail("partitions", res.partitions);
            out.detail("reflections", res.reflections);
            out.detail("max_norm_error", res.max_norm_error);
            trace = res
                .objective_trace
                .iter()
                .enumerate()
                .map(|(k, &f)| TraceRow {
                    iteration: k,
                    objective: f,
                    feasibility: None,
                    primal_residual: None,
                    gamma: None,
                })
                .collect();
        }
        None => {
            let opts = ScqpOptions::default();
            let sol = if pf.kind == Kind::ScqpIneq {
                scqp::solve_inequality(&problem, &opts)?
            } else {
                scqp::solve(&problem, &opts)?
            };
            let residual = sol.x.norm_squared() - 1.0;
            out.x = Some(vec_of(&sol.x));
            out.alternates = sol.alternates.iter().map(vec_of).collect();
            out.multiplicity = Some(sol.multiplicity.as_str().to_string());
            out.multiplier = Some(sol.multiplier);
            out.objective = sol.objective;
            out.constraint_residuals = vec![residual];
            out.converged = true;
            out.detail("kkt_residual", problem.kkt_residual(&sol.x, sol.multiplier));
            if let Some(br) = &sol.bracket {
                out.detail("bracket_lower", br.lower);
                out.detail("bracket_upper", br.upper);
            }
            trace.push(TraceRow {
                iteration: 0,
                objective: sol.objective,
                feasibility: Some(residual.abs()),
                primal_residual: None,
                gamma: None,
            });
        }
    }
    Ok((Outcome { solution: out, trace }, started))
}

fn run_qcqp(common: &Common, flags: &QcqpFlags) -> CliResult<(Outcome, Instant)> {
    let (pf, hash) = load(common, &[Kind::Qcqp])?;
    let q = symmetric("Q", require("Q", pf.q.as_ref())?, None)?;
    let k = q.order();
    let b = vector("b", require("b", pf.b.as_ref())?, Some(k))?;
    let h = symmetric_list("H", require("H", pf.h.as_ref())?, k)?;
    if h.is_empty() {
        return Err(CliError::field("H", "at least one constraint matrix is required"));
    }
    let n = symmetric_list("N", pf.n.as_deref().unwrap_or(&[]), k)?;
    let opts = qcqp_options(common, flags, &pf.options(), QcqpOptions::default())?;
    let started = Instant::now();
    let problem = if pf.inequality {
        QcqpProblem::with_inequalities(q, b, h)?
    } else {
        QcqpProblem::new(q, b, h)?
    };
    let problem = if n.is_empty() { problem } else { problem.with_homogeneous(n)? };
    let sol = qcqp::solve(&problem, &opts)?;
    let mut out = SolutionFile::new(Kind::Qcqp, hash);
    out.x = Some(vec_of(&sol.x));
    out.objective = sol.objective;
    out.constraint_residuals = sol.residuals.clone();
    out.converged = sol.converged;
    out.iterations = sol.iterations;
    out.carrier_weights = sol.carrier_weights.as_ref().map(vec_of);
    out.detail("feasibility", sol.feasibility);
    out.detail("primal_residual", sol.primal_residual);
    out.detail("gamma", sol.gamma);
    if let Some(i) = sol.carrier_index {
        out.detail("carrier_index", i);
    }
    let trace = sol.trace.iter().map(TraceRow::from).collect();
    Ok((Outcome { solution: out, trace }, started))
}

fn run_boundedreg(common: &Common) -> CliResult<(Outcome, Instant)> {
    let (pf, hash) = load(common, &[Kind::BoundedRegression])?;
    let a = matrix("A", require("A", pf.a.as_ref())?)?;
    let y = vector("y", require("y", pf.y.as_ref())?, Some(a.nrows()))?;
    let delta = scalar("delta", *require("delta", pf.delta.as_ref())?)?;
    let file = pf.options();
    let mut opts = RegressionOptions {
        seed: common.seed.or(file.seed).unwrap_or(0),
        ..RegressionOptions::default()
    };
    if let Some(t) = tolerance(common, &file)? {
        opts.tol = t;
    }
    if let Some(n) = common.max_iters.or(file.max_iters) {
        opts.max_passes = n;
    }
    let started = Instant::now();
    let problem = RegressionProblem::new(a, y, delta).map_err(|e| CliError::field("delta", e.to_string()))?;
    let sol = regression::solve(&problem, &opts).map_err(|e| match e {
        sphereqp::Error::InvalidInput(msg) => CliError::field("delta", msg),
        other => other.into(),
    })?;
    let mut out = SolutionFile::new(Kind::BoundedRegression, hash);
    out.x = Some(vec_of(&sol.x));
    out.objective = sol.x.norm_squared();
    out.constraint_residuals = vec![sol.residual - delta];
    out.converged = sol.passes < opts.max_passes;
    out.iterations = sol.passes;
    let status = match sol.status {
        BoundStatus::ZeroSolution => "zero_solution",
        BoundStatus::Feasible { .. } => "feasible",
        BoundStatus::Infeasible { .. } => "infeasible",
    };
    out.detail("status", status);
    out.detail("residual", sol.residual);
    out.detail("max_constraint_error", sol.max_constraint_error);
    let trace = sol
        .norm_trace
        .iter()
        .enumerate()
        .map(|(k, &nrm)| TraceRow {
            iteration: k,
            objective: nrm * nrm,
            feasibility: None,
            primal_residual: None,
            gamma: None,
        })
        .collect();
    Ok((Outcome { solution: out, trace }, started))
}

/// Builds the tensor described by a `rank1_sym4` file.
pub fn tensor_of(pf: &ProblemFile) -> CliResult<SymTensor4> {
    let td = require("tensor", pf.tensor.as_ref())?;
    let dim = td.dim;
    if dim == 0 {
        return Err(CliError::field("tensor.dim", "must be positive"));
    }
    let n = dim * dim;
    if td.data.len() != n * n {
        return Err(CliError::field(
            "tensor.data",
            format!("has {} entries, expected dim^4 = {}", td.data.len(), n * n),
        ));
    }
    if let Some(k) = td.data.iter().position(|v| !v.is_finite()) {
        return Err(CliError::field("tensor.data", format!("entry {k} is not finite")));
    }
    let field = |e: sphereqp::Error| CliError::field("tensor.data", e.to_string());
    if td.symmetrize {
        return SymTensor4::symmetrize(dim, &td.data, td.normalize).map_err(field);
    }
    let mut m = DMatrix::from_column_slice(n, n, &td.data);
    if td.normalize && m.norm() > 0.0 {
        m /= m.norm();
    }
    SymTensor4::from_matricization(dim, m).map_err(field)
}

fn run_rank1(common: &Common, flags: &AdmmFlags) -> CliResult<(Outcome, Instant)> {
    let (pf, hash) = load(common, &[Kind::Rank1Sym4])?;
    let t = tensor_of(&pf)?;
    let opts = rank1_options(common, flags, &pf.options(), Rank1Options::default())?;
    let started = Instant::now();
    let sol = tensor::best_rank1(&t, &opts)?;
    let mut out = SolutionFile::new(Kind::Rank1Sym4, hash);
    out.x = Some(vec_of(&sol.direction));
    out.weight = Some(sol.weight);
    out.objective = sol.residual;
    out.constraint_residuals = vec![sol.direction.norm_squared() - 1.0];
    out.converged = sol.converged;
    out.iterations = sol.iterations;
    out.detail("error", sol.error);
    out.detail(
        "branch",
        match sol.branch {
            Branch::Negative => "negative",
            Branch::Positive => "positive",
        },
    );
    let trace = sol.trace.iter().map(TraceRow::from).collect();
    Ok((Outcome { solution: out, trace }, started))
}

fn run_cgevd(common: &Common, flags: &QcqpFlags) -> CliResult<(Outcome, Instant)> {
    let (pf, hash) = load(common, &[Kind::Cgevd])?;
    let q = symmetric("Q", require("Q", pf.q.as_ref())?, None)?;
    let b = symmetric("B", require("B", pf.bmat.as_ref())?, Some(q.order()))?;
    let d = *require("dims", pf.dims.as_ref())?;
    if d.i * d.j != q.order() {
        return Err(CliError::field(
            "dims",
            format!("I·J = {} does not match the order {} of Q", d.i * d.j, q.order()),
        ));
    }
    let file = pf.options();
    let base = CgevdOptions::default();
    let inner = Common {
        tol: None,
        max_iters: None,
        ..common.clone()
    };
    let inner_file = FileOptions {
        tol: None,
        max_iters: None,
        ..file.clone()
    };
    let mut opts = CgevdOptions {
        seed: common.seed.or(file.seed).unwrap_or(0),
        qcqp: qcqp_options(&inner, flags, &inner_file, base.qcqp.clone())?,
        ..base
    };
    if let Some(t) = tolerance(common, &file)? {
        opts.tol = t;
    }
    if let Some(n) = common.max_iters.or(file.max_iters) {
        opts.max_sweeps = n;
    }
    if let Some(j) = flags.jitter.or(file.jitter) {
        opts.jitter = Some(j);
    }
    let started = Instant::now();
    let problem =
        CgevdProblem::new(q, b, d.i, d.j, d.r, d.s).map_err(|e| CliError::field("dims", e.to_string()))?;
    let sol = cgevd::solve(&problem, &opts)?;
    let x = sol.state.x();
    let gram = x.transpose() * problem.b().as_matrix() * &x;
    let mut out = SolutionFile::new(Kind::Cgevd, hash);
    out.g = Some(sol.state.g.iter().map(rows_of).collect());
    out.a = Some(rows_of(&sol.state.a));
    out.objective = sol.state.objective;
    out.constraint_residuals = (0..d.r)
        .flat_map(|r| (r..d.r).map(move |s| (r, s)))
        .map(|(r, s)| gram[(r, s)] - if r == s { 1.0 } else { 0.0 })
        .collect();
    out.converged = sol.converged;
    out.iterations = sol.sweeps;
    out.detail("feasibility", sol.state.feasibility);
    out.detail("stalled", sol.stalled);
    out.detail("X", serde_json::to_value(rows_of(&x)).expect("finite matrix"));
    let trace = sol
        .history
        .iter()
        .map(|h| TraceRow {
            iteration: h.sweep,
            objective: h.objective,
            feasibility: Some(h.feasibility),
            primal_residual: None,
            gamma: None,
        })
        .collect();
    Ok((Outcome { solution: out, trace }, started))
}

fn run_deconv(settings: &DeconvSettings) -> CliResult<(Outcome, Instant)> {
    let started = Instant::now();
    let report = deconv::run(settings)?;
    let tag = format!(
        "demo_deconv size={} seed={} tol={:e} max_iters={}",
        settings.size, settings.seed, settings.tol, settings.max_iters
    );
    let mut out = SolutionFile::new(Kind::DemoDeconv, digest(tag.as_bytes()));
    out.objective = *report.objective_trace.last().expect("trace is never empty");
    out.constraint_residuals = vec![report.max_norm_error];
    out.converged = report.converged;
    out.iterations = report.iterations;
    out.detail("alpha", report.alpha);
    out.detail("alpha_stationarity", report.alpha_stationarity);
    out.detail("psnr_blurred", report.psnr_blurred);
    out.detail("psnr_reconstructed", report.psnr_reconstructed);
    out.detail("size", report.size);
    out.detail("seed", report.seed);
    let trace = report
        .objective_trace
        .iter()
        .enumerate()
        .map(|(k, &f)| TraceRow {
            iteration: k,
            objective: f,
            feasibility: None,
            primal_residual: None,
            gamma: None,
        })
        .collect();
    Ok((Outcome { solution: out, trace }, started))
}

fn run_bench(settings: &BenchSettings, out: Option<&Path>, csv_path: Option<&Path>) -> CliResult<i32> {
    let (rows, summary) = bench::run(settings)?;
    if let Some(path) = csv_path {
        let io = |e: csv::Error| CliError::io(path.display().to_string(), e.into());
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        for row in &rows {
            w.serialize(row).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::io(path.display().to_string(), e))?;
    }
    let text = serde_json::to_string_pretty(&summary).expect("summary always serializes");
    write_output(out, &text)?;
    Ok(EXIT_CONVERGED)
}
