//! Per-update and per-sweep solver records, and their CSV rendering.

use std::io::Write;

use crate::math::fmt17;

/// Header of the trace CSV shared by all solvers.
pub const TRACE_HEADER: &str =
    "update,sweep,edge_u,edge_v,dual_obj,primal_obj,residual,delta,elapsed_ns";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxSweeps,
    /// Message passing still moving after the settling window.
    NonSettling,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxSweeps => "max_sweeps",
            SolveStatus::NonSettling => "non-settling",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One trace row. Rows with `edge == None` summarize a whole sweep (or an
/// iteration, for solvers without edge updates).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub update: usize,
    pub sweep: usize,
    pub edge: Option<(usize, usize)>,
    pub dual_obj: Option<f64>,
    pub primal_obj: Option<f64>,
    pub residual: Option<f64>,
    pub delta: Option<f64>,
    pub elapsed_ns: u128,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace {
    pub records: Vec<TraceRecord>,
    pub status: SolveStatus,
    pub sweeps: usize,
    pub updates: usize,
    /// Smallest per-update objective decrease seen.
    pub min_delta: f64,
    /// Sum of all per-update objective decreases.
    pub total_delta: f64,
    pub final_residual: f64,
}

impl SolveTrace {
    pub(crate) fn new() -> Self {
        SolveTrace {
            records: Vec::new(),
            status: SolveStatus::MaxSweeps,
            sweeps: 0,
            updates: 0,
            min_delta: f64::INFINITY,
            total_delta: 0.0,
            final_residual: f64::INFINITY,
        }
    }

    /// Sweep-summary rows only.
    pub fn sweep_rows(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(|r| r.edge.is_none())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        let opt = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
        for r in &self.records {
            let (u, v) = match r.edge {
                Some((u, v)) => (u.to_string(), v.to_string()),
                None => (String::new(), String::new()),
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.update,
                r.sweep,
                u,
                v,
                opt(r.dual_obj),
                opt(r.primal_obj),
                opt(r.residual),
                opt(r.delta),
                r.elapsed_ns
            )?;
        }
        Ok(())
    }
}
