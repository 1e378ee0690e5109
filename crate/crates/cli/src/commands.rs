//! Subcommand implementations. Each returns a process exit code:
//! 0 for success, 2 when the run completed but violated a formulation
//! monitor, and errors bubble up to exit 1.

use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use taskalloc::allocation::{
    capability_set, miqp_oracle, projector, solve_relaxed, Specialization,
};
use taskalloc::qp::QpSettings;
use taskalloc::sim::{check_proposition1, run_simulation, step_euler, Scenario, SimError};

use crate::output::{
    build_monitor_report, build_summary, write_trajectory_csv, write_trajectory_rows,
    OracleComparison,
};
use crate::scenario::parse_scenario;

/// Tolerance for the relaxation bound check in `oracle-compare`.
pub const BOUND_TOL: f64 = 1e-8;
/// Relaxed priorities within this distance of {0, 1} count as binary.
pub const ALPHA_BINARY_TOL: f64 = 1e-6;

fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read scenario file {}", path.display()))?;
    parse_scenario(&text).with_context(|| format!("invalid scenario {}", path.display()))
}

/// Runs a scenario to completion and writes `trajectory.csv`,
/// `summary.json` and `prop1_report.json` into `out_dir`.
pub fn cmd_run(
    scenario_path: &Path,
    out_dir: &Path,
    prop1_tol: f64,
    settings: &QpSettings,
) -> Result<i32> {
    let scenario = load_scenario(scenario_path)?;
    fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;

    let started = Instant::now();
    let log = match run_simulation(&scenario, settings) {
        Ok(log) => log,
        Err(SimError::SolverFailure {
            step,
            partial,
            source,
        }) => {
            // Keep what we have: the truncated trajectory is still useful
            // for diagnosing the failing state.
            let mut buf = Vec::new();
            write_trajectory_rows(&partial, &scenario, &mut buf)?;
            fs::write(out_dir.join("trajectory.csv"), buf)?;
            bail!("solver failed at step {step}: {source}");
        }
        Err(e) => return Err(e.into()),
    };
    let wall_clock = started.elapsed().as_secs_f64();
    info!(
        "simulated {} steps in {wall_clock:.3}s",
        log.steps.len()
    );

    let report = check_proposition1(&log, prop1_tol);

    let mut buf = Vec::new();
    write_trajectory_csv(&log, &scenario, &mut buf)?;
    fs::write(out_dir.join("trajectory.csv"), buf).context("writing trajectory.csv")?;

    let summary = build_summary(&log, &report, wall_clock);
    fs::write(
        out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )
    .context("writing summary.json")?;

    fs::write(
        out_dir.join("prop1_report.json"),
        serde_json::to_string_pretty(&build_monitor_report(&report))?,
    )
    .context("writing prop1_report.json")?;

    if report.is_clean() {
        Ok(0)
    } else {
        warn!(
            "{} execution-guarantee violations at tolerance {prop1_tol}",
            report.violations.len()
        );
        Ok(2)
    }
}

/// Simulates to the requested time, then solves both the relaxed QP and
/// the exact enumeration oracle at that snapshot and reports the gap.
pub fn cmd_oracle_compare(
    scenario_path: &Path,
    time: f64,
    enum_cap: usize,
    settings: &QpSettings,
) -> Result<i32> {
    let scenario = load_scenario(scenario_path)?;
    if !(0.0..=scenario.duration).contains(&time) {
        bail!(
            "snapshot time {time} outside the scenario horizon [0, {}]",
            scenario.duration
        );
    }
    let specs: Vec<Specialization> = scenario
        .robots
        .iter()
        .map(|r| r.specialization.clone())
        .collect();

    let steps_to_take = (time / scenario.dt).floor() as usize;
    let mut x: Vec<_> = scenario.robots.iter().map(|r| r.start.clone()).collect();
    for step in 0..steps_to_take {
        let decision = solve_relaxed(
            &x,
            &scenario.tasks,
            &specs,
            &scenario.global_spec,
            &scenario.params,
            &scenario.gamma,
            settings,
        )
        .with_context(|| format!("solver failed at step {step}"))?;
        x = step_euler(&x, &decision.u, scenario.dt);
    }

    let relaxed = solve_relaxed(
        &x,
        &scenario.tasks,
        &specs,
        &scenario.global_spec,
        &scenario.params,
        &scenario.gamma,
        settings,
    )
    .context("relaxed solve at snapshot")?;
    let oracle = miqp_oracle(
        &x,
        &scenario.tasks,
        &specs,
        &scenario.global_spec,
        &scenario.params,
        &scenario.gamma,
        settings,
        enum_cap,
    )
    .context("oracle enumeration at snapshot")?;

    let near_binary = relaxed
        .alpha
        .iter()
        .all(|&a| a.abs() <= ALPHA_BINARY_TOL || (a - 1.0).abs() <= ALPHA_BINARY_TOL);
    let bound_holds = relaxed.objective <= oracle.objective + BOUND_TOL;
    let record = OracleComparison {
        time: steps_to_take as f64 * scenario.dt,
        relaxed_objective: relaxed.objective,
        oracle_objective: oracle.objective,
        gap: oracle.objective - relaxed.objective,
        oracle_assignment: oracle.assignment,
        relaxed_alpha_near_binary: near_binary,
        alpha_binary_tol: ALPHA_BINARY_TOL,
        bound_tol: BOUND_TOL,
        bound_holds,
    };
    println!("{}", serde_json::to_string_pretty(&record)?);
    Ok(if bound_holds { 0 } else { 2 })
}

/// Parses a scenario, reports the team's capability set, and warns about
/// demand the team cannot meet.
pub fn cmd_validate(scenario_path: &Path) -> Result<i32> {
    let scenario = load_scenario(scenario_path)?;
    let projectors: Vec<_> = scenario
        .robots
        .iter()
        .map(|r| projector(&r.specialization))
        .collect();
    let report = capability_set(&projectors);
    let m = scenario.num_tasks();
    if report.full_rank {
        println!("all {m} tasks executable; full column rank");
    } else {
        println!(
            "{} of {m} tasks executable ({:?}); capability matrix rank-deficient",
            report.executable.len(),
            report.executable
        );
    }

    for t in 0..m {
        let demanded = scenario.global_spec.pi_star[t] > 0.0;
        if demanded && !report.executable.contains(&t) {
            println!(
                "warning: pi_star[{t}] = {} but no robot can execute task {t}",
                scenario.global_spec.pi_star[t]
            );
        }
    }
    let total: f64 = scenario.global_spec.pi_star.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        println!("warning: pi_star sums to {total}, not 1");
    }
    Ok(0)
}
