//! Run artifacts: trajectory CSV, machine-readable summary, monitor report.

use std::io::{self, Write};

use serde::Serialize;
use taskalloc::sim::{Prop1Clause, Prop1Report, Scenario, SimLog, StepRecord};

/// 17 significant digits: enough to reproduce any f64 bit pattern, so
/// repeated runs of the same scenario diff byte-identically.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes one row per robot per step. Columns are fixed by the workspace
/// dimension `d` and task count `M`:
/// `t, robot, x0..x{d-1}, u0..u{d-1}, delta0..delta{M-1},
///  alpha0..alpha{M-1}, pi_h0..pi_h{M-1}`,
/// with the step's team allocation block repeated on each of its rows.
pub fn write_trajectory_csv(
    log: &SimLog,
    scenario: &Scenario,
    out: &mut impl Write,
) -> io::Result<()> {
    write_trajectory_rows(&log.steps, scenario, out)
}

pub fn write_trajectory_rows(
    steps: &[StepRecord],
    scenario: &Scenario,
    out: &mut impl Write,
) -> io::Result<()> {
    let d = scenario.dim;
    let m = scenario.num_tasks();
    let mut header = vec!["t".to_string(), "robot".to_string()];
    header.extend((0..d).map(|k| format!("x{k}")));
    header.extend((0..d).map(|k| format!("u{k}")));
    header.extend((0..m).map(|t| format!("delta{t}")));
    header.extend((0..m).map(|t| format!("alpha{t}")));
    header.extend((0..m).map(|t| format!("pi_h{t}")));
    writeln!(out, "{}", header.join(","))?;

    for step in steps {
        for robot in 0..scenario.num_robots() {
            let mut fields = vec![format_float(step.t), robot.to_string()];
            fields.extend(step.x[robot].iter().map(|&v| format_float(v)));
            fields.extend(step.u[robot].iter().map(|&v| format_float(v)));
            fields.extend((0..m).map(|t| format_float(step.delta[(robot, t)])));
            fields.extend((0..m).map(|t| format_float(step.alpha[(robot, t)])));
            fields.extend(step.pi_h.iter().map(|&v| format_float(v)));
            writeln!(out, "{}", fields.join(","))?;
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct IterationStats {
    pub total: usize,
    pub max: usize,
    pub mean: f64,
}

/// Machine-readable run summary, written next to the trajectory.
#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub steps: usize,
    pub final_objective: f64,
    pub prop1_violations: usize,
    pub prop1_tol: f64,
    pub path_lengths: Vec<f64>,
    /// Task costs at the final state, one row per robot.
    pub final_cost: Vec<Vec<f64>>,
    pub wall_clock_seconds: f64,
    pub solver_iterations: IterationStats,
}

pub fn build_summary(
    log: &SimLog,
    report: &Prop1Report,
    wall_clock_seconds: f64,
) -> RunSummary {
    let last = log.steps.last().expect("non-empty log");
    let n = last.cost.nrows();
    let m = last.cost.ncols();
    let total: usize = log.steps.iter().map(|s| s.solver_iterations).sum();
    let max = log
        .steps
        .iter()
        .map(|s| s.solver_iterations)
        .max()
        .unwrap_or(0);
    RunSummary {
        steps: log.steps.len(),
        final_objective: log.summary.final_objective,
        prop1_violations: report.violations.len(),
        prop1_tol: report.tol,
        path_lengths: log.summary.path_lengths.clone(),
        final_cost: (0..n)
            .map(|i| (0..m).map(|t| last.cost[(i, t)]).collect())
            .collect(),
        wall_clock_seconds,
        solver_iterations: IterationStats {
            total,
            max,
            mean: total as f64 / log.steps.len() as f64,
        },
    }
}

#[derive(Debug, Serialize)]
pub struct ViolationRecord {
    pub step: usize,
    pub robot: usize,
    pub clause: &'static str,
}

#[derive(Debug, Serialize)]
pub struct MonitorReport {
    pub tol: f64,
    pub count: usize,
    pub violations: Vec<ViolationRecord>,
}

pub fn build_monitor_report(report: &Prop1Report) -> MonitorReport {
    MonitorReport {
        tol: report.tol,
        count: report.violations.len(),
        violations: report
            .violations
            .iter()
            .map(|v| ViolationRecord {
                step: v.step,
                robot: v.robot,
                clause: match v.clause {
                    Prop1Clause::TaskRate => "task_rate",
                    Prop1Clause::VanishingGradient => "vanishing_gradient",
                },
            })
            .collect(),
    }
}

/// Result record of an oracle comparison, printed to stdout as JSON.
#[derive(Debug, Serialize)]
pub struct OracleComparison {
    pub time: f64,
    pub relaxed_objective: f64,
    pub oracle_objective: f64,
    /// `oracle - relaxed`; nonnegative when the relaxation bound holds.
    pub gap: f64,
    pub oracle_assignment: Vec<usize>,
    pub relaxed_alpha_near_binary: bool,
    pub alpha_binary_tol: f64,
    pub bound_tol: f64,
    pub bound_holds: bool,
}
