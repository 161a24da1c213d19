//! Command-line grammar.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sphereqp::qcqp::CarrierPolicy;

#[derive(Debug, Parser)]
#[command(name = "sphereqp", version, about = "Sphere- and ellipsoid-constrained quadratic solvers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Quadratic over the unit sphere (or ball, for `scqp_ineq` files).
    Scqp {
        #[command(flatten)]
        common: Common,
        /// Solve by random block splitting with blocks of at most this size.
        #[arg(long, value_name = "N")]
        block_size: Option<usize>,
    },
    /// Quadratic over an intersection of ellipsoids.
    Qcqp {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        qcqp: QcqpFlags,
    },
    /// Minimum-norm regression with a prescribed residual norm.
    Boundedreg {
        #[command(flatten)]
        common: Common,
    },
    /// Best rank-1 approximation of a symmetric order-4 tensor.
    Rank1 {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        admm: AdmmFlags,
    },
    /// Generalized eigenproblem with structured eigenvectors.
    Cgevd {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        qcqp: QcqpFlags,
    },
    /// Deblur a synthetic image with a unit-norm image and scalar gain.
    DemoDeconv {
        /// Image side length in pixels.
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 2000)]
        max_iters: usize,
    },
    /// Compare the rank-1 solver with a multi-start power method.
    BenchRank1 {
        #[arg(long, default_value_t = 200)]
        count: usize,
        /// Tensor dimension.
        #[arg(long, default_value_t = 10)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Starting points of the power method per instance.
        #[arg(long, default_value_t = 100)]
        restarts: usize,
        /// Use exact rank-1 tensors.
        #[arg(long)]
        planted: bool,
        /// Summary JSON destination (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-instance CSV destination.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[command(flatten)]
        admm: AdmmFlags,
    },
    /// Write the bundled example problem files into a directory.
    DemoProblems {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Problem file.
    #[arg(long = "in", value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Solution file (stdout when absent).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Per-iteration CSV trace.
    #[arg(long, value_name = "PATH")]
    pub trace: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "X")]
    pub tol: Option<f64>,
    #[arg(long, value_name = "N")]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct AdmmFlags {
    /// Initial penalty weight.
    #[arg(long, value_name = "X", conflicts_with = "gamma_fraction")]
    pub gamma0: Option<f64>,
    /// Initial penalty as a multiple of the smallest constraint condition number.
    #[arg(long, value_name = "X")]
    pub gamma_fraction: Option<f64>,
    #[arg(long, value_enum)]
    pub gamma_policy: Option<GammaPolicyArg>,
    #[arg(long, value_name = "X")]
    pub alpha_step: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct QcqpFlags {
    #[command(flatten)]
    pub admm: AdmmFlags,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Proximal weight of the linearized update.
    #[arg(long, value_name = "X")]
    pub mu: Option<f64>,
    /// `index:N`, `min-cond` or `frobenius`.
    #[arg(long, value_name = "POLICY")]
    pub carrier: Option<CarrierArg>,
    /// Diagonal shift added when the carrier fails to factor.
    #[arg(long, value_name = "X")]
    pub jitter: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GammaPolicyArg {
    Fixed,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exact,
    Linearized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarrierArg(pub CarrierPolicy);

impl FromStr for CarrierArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "min-cond" => Ok(CarrierArg(CarrierPolicy::MinCondition)),
            "frobenius" => Ok(CarrierArg(CarrierPolicy::Frobenius)),
            _ => match s.strip_prefix("index:").map(str::parse::<usize>) {
                Some(Ok(k)) => Ok(CarrierArg(CarrierPolicy::GivenIndex(k))),
                _ => Err(format!("expected index:N, min-cond or frobenius, got `{s}`")),
            },
        }
    }
}
