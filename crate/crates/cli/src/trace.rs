//! Per-iteration convergence traces as CSV.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sphereqp::qcqp::TraceRecord;

use crate::error::{CliError, CliResult};

/// One CSV row; quantities that do not apply to a solver are left empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub feasibility: Option<f64>,
    pub primal_residual: Option<f64>,
    pub gamma: Option<f64>,
}

impl From<&TraceRecord> for TraceRow {
    fn from(r: &TraceRecord) -> Self {
        TraceRow {
            iteration: r.iteration,
            objective: r.objective,
            feasibility: Some(r.feasibility),
            primal_residual: Some(r.primal_residual),
            gamma: Some(r.gamma),
        }
    }
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> CliResult<()> {
    let io = |e: csv::Error| CliError::io(path.display().to_string(), e.into());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    if rows.is_empty() {
        w.write_record(["iteration", "objective", "feasibility", "primal_residual", "gamma"])
            .map_err(io)?;
    }
    for row in rows {
        w.serialize(row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path.display().to_string(), e))
}

pub fn read_trace(path: &Path) -> CliResult<Vec<TraceRow>> {
    let io = |e: csv::Error| CliError::io(path.display().to_string(), e.into());
    let mut r = csv::Reader::from_path(path).map_err(io)?;
    r.deserialize().collect::<Result<Vec<TraceRow>, _>>().map_err(io)
}
