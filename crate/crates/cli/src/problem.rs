//! Problem files: JSON documents with dense row-major matrices.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sphereqp::SymmetricMatrix;

use crate::error::{CliError, CliResult};

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Scqp,
    ScqpIneq,
    Qcqp,
    BoundedRegression,
    Rank1Sym4,
    Cgevd,
    DemoDeconv,
    BenchRank1,
}

impl Kind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Kind::Scqp => "scqp",
            Kind::ScqpIneq => "scqp_ineq",
            Kind::Qcqp => "qcqp",
            Kind::BoundedRegression => "bounded_regression",
            Kind::Rank1Sym4 => "rank1_sym4",
            Kind::Cgevd => "cgevd",
            Kind::DemoDeconv => "demo_deconv",
            Kind::BenchRank1 => "bench_rank1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorData {
    pub dim: usize,
    /// `dim⁴` entries, first index fastest.
    pub data: Vec<f64>,
    /// Average over index permutations before solving.
    #[serde(default)]
    pub symmetrize: bool,
    /// Rescale to unit Frobenius norm (after symmetrizing).
    #[serde(default)]
    pub normalize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    #[serde(rename = "I")]
    pub i: usize,
    #[serde(rename = "J")]
    pub j: usize,
    #[serde(rename = "R")]
    pub r: usize,
    #[serde(rename = "S")]
    pub s: usize,
}

/// Solver settings that may be stored with a problem; command-line flags
/// take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_policy: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carrier: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jitter: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub kind: Kind,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    /// Ellipsoid matrices of a QCQP.
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<Rows>>,
    /// Homogeneous constraint matrices `xᵀNx = 0` of a QCQP.
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<Rows>>,
    /// Treat the QCQP ellipsoids as `xᵀHx <= 1`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub inequality: bool,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tensor: Option<TensorData>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub bmat: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Dims>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<FileOptions>,
}

impl ProblemFile {
    pub fn empty(kind: Kind) -> Self {
        ProblemFile {
            kind,
            q: None,
            b: None,
            h: None,
            n: None,
            inequality: false,
            a: None,
            y: None,
            delta: None,
            tensor: None,
            bmat: None,
            dims: None,
            options: None,
        }
    }

    pub fn parse(bytes: &[u8]) -> CliResult<Self> {
        serde_json::from_slice(bytes).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files always serialize")
    }

    pub fn options(&self) -> FileOptions {
        self.options.clone().unwrap_or_default()
    }
}

/// SHA-256 of the raw problem bytes, hex encoded.
pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn require<'a, T>(field: &str, value: Option<&'a T>) -> CliResult<&'a T> {
    value.ok_or_else(|| CliError::field(field, "required for this problem kind"))
}

fn check_finite(field: &str, values: impl IntoIterator<Item = f64>) -> CliResult<()> {
    match values.into_iter().position(|v| !v.is_finite()) {
        Some(k) => Err(CliError::field(field, format!("entry {k} is not finite"))),
        None => Ok(()),
    }
}

pub fn matrix(field: &str, rows: &Rows) -> CliResult<DMatrix<f64>> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(CliError::field(field, "matrix has no rows"));
    }
    let ncols = rows[0].len();
    if ncols == 0 {
        return Err(CliError::field(field, "matrix has no columns"));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(CliError::field(
                field,
                format!("row {i} has {} entries, expected {ncols}", row.len()),
            ));
        }
        check_finite(&format!("{field}[{i}]"), row.iter().copied())?;
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn symmetric(field: &str, rows: &Rows, order: Option<usize>) -> CliResult<SymmetricMatrix> {
    let m = matrix(field, rows)?;
    if m.nrows() != m.ncols() {
        return Err(CliError::field(
            field,
            format!("matrix is {}x{}, expected square", m.nrows(), m.ncols()),
        ));
    }
    if let Some(n) = order {
        if m.nrows() != n {
            return Err(CliError::field(field, format!("order {} does not match {n}", m.nrows())));
        }
    }
    SymmetricMatrix::new(m).map_err(|e| CliError::field(field, e.to_string()))
}

pub fn vector(field: &str, values: &[f64], len: Option<usize>) -> CliResult<DVector<f64>> {
    if let Some(n) = len {
        if values.len() != n {
            return Err(CliError::field(field, format!("length {} does not match {n}", values.len())));
        }
    }
    if values.is_empty() {
        return Err(CliError::field(field, "vector is empty"));
    }
    check_finite(field, values.iter().copied())?;
    Ok(DVector::from_column_slice(values))
}

pub fn scalar(field: &str, value: f64) -> CliResult<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(CliError::field(field, "value is not finite"))
    }
}

pub fn rows_of(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
