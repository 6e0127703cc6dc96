//! Report rows and their CSV / versioned-JSON renderings.
//!
//! CSV output is byte-stable for a fixed seed and rank count; the timing
//! columns sit at the end of each solver row so diffs can ignore them.

use serde::{Deserialize, Serialize};
use std::io::Write;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionRow {
    pub method: String,
    pub np: usize,
    pub f_p: f64,
    pub r_max: f64,
    pub r_global: f64,
    pub r_avg: f64,
    pub c: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRow {
    pub problem: String,
    pub solver: String,
    pub pc: String,
    pub np: usize,
    pub steps: usize,
    pub iterations: usize,
    pub avg_iterations: f64,
    pub converged: bool,
    pub final_residual: f64,
    pub gridding_s: f64,
    pub build_s: f64,
    pub assemble_s: f64,
    pub solve_s: f64,
    pub overall_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub partition: Vec<PartitionRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub solves: Vec<SolveRow>,
}

impl ReportDoc {
    pub fn partition(rows: Vec<PartitionRow>) -> Self {
        ReportDoc {
            schema_version: REPORT_SCHEMA_VERSION,
            partition: rows,
            solves: Vec::new(),
        }
    }

    pub fn solves(rows: Vec<SolveRow>) -> Self {
        ReportDoc {
            schema_version: REPORT_SCHEMA_VERSION,
            partition: Vec::new(),
            solves: rows,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

pub fn write_partition_csv(out: &mut dyn Write, rows: &[PartitionRow]) -> std::io::Result<()> {
    writeln!(out, "method,np,f_p,r_max,r_global,r_avg,c")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.method, r.np, r.f_p, r.r_max, r.r_global, r.r_avg, r.c
        )?;
    }
    Ok(())
}

pub fn write_solve_csv(out: &mut dyn Write, rows: &[SolveRow]) -> std::io::Result<()> {
    writeln!(
        out,
        "problem,solver,pc,np,steps,iterations,avg_iterations,converged,final_residual,\
         gridding_s,build_s,assemble_s,solve_s,overall_s"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.problem,
            r.solver,
            r.pc,
            r.np,
            r.steps,
            r.iterations,
            r.avg_iterations,
            r.converged,
            r.final_residual,
            r.gridding_s,
            r.build_s,
            r.assemble_s,
            r.solve_s,
            r.overall_s
        )?;
    }
    Ok(())
}

/// Residual history as `iteration,residual` rows.
pub fn write_history_csv(out: &mut dyn Write, history: &[f64]) -> std::io::Result<()> {
    writeln!(out, "iteration,residual")?;
    for (i, r) in history.iter().enumerate() {
        writeln!(out, "{},{}", i + 1, r)?;
    }
    Ok(())
}
