//! Closed-loop single-integrator simulation with runtime verification.
//!
//! Each step solves the relaxed allocation QP at the current positions,
//! logs the full decision, and advances `x' = x + dt u` (explicit Euler;
//! the formulation is continuous-time and silent on discretization).
//! [`check_proposition1`] audits the logged run against the execution
//! guarantee of the allocation QP: at every step each robot makes progress
//! on at least one task, and when every task gradient vanishes the
//! commanded velocities vanish too.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::allocation::{
    solve_relaxed, AllocError, AllocParams, GlobalSpec, Specialization,
};
use crate::qp::QpSettings;
use crate::tasks::{eval_barrier, eval_cost, GammaSpec, TaskSpec};

/// Monitor tolerance used for the violation count in [`SimSummary`].
pub const DEFAULT_MONITOR_TOL: f64 = 1e-6;

/// Initial condition and capabilities of one robot.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotSpec {
    pub start: DVector<f64>,
    pub specialization: Specialization,
}

/// Full experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub dim: usize,
    pub robots: Vec<RobotSpec>,
    pub tasks: Vec<TaskSpec>,
    pub global_spec: GlobalSpec,
    pub params: AllocParams,
    pub gamma: GammaSpec,
    pub dt: f64,
    pub duration: f64,
}

impl Scenario {
    pub fn num_robots(&self) -> usize {
        self.robots.len()
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    /// Number of logged records: one per step plus the initial state.
    pub fn num_steps(&self) -> usize {
        (self.duration / self.dt).floor() as usize + 1
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.robots.is_empty() {
            return Err(SimError::InvalidScenario("no robots".into()));
        }
        if self.tasks.is_empty() {
            return Err(SimError::InvalidScenario("no tasks".into()));
        }
        if !(self.dt > 0.0) {
            return Err(SimError::InvalidScenario("dt must be positive".into()));
        }
        if !(self.duration > self.dt) {
            return Err(SimError::InvalidScenario(
                "duration must exceed dt".into(),
            ));
        }
        for (i, robot) in self.robots.iter().enumerate() {
            if robot.start.len() != self.dim {
                return Err(SimError::InvalidScenario(format!(
                    "robot {i} start has dimension {}, expected {}",
                    robot.start.len(),
                    self.dim
                )));
            }
            if robot.specialization.num_tasks() != self.tasks.len() {
                return Err(SimError::InvalidScenario(format!(
                    "robot {i} specialization covers {} tasks, expected {}",
                    robot.specialization.num_tasks(),
                    self.tasks.len()
                )));
            }
        }
        for (t, task) in self.tasks.iter().enumerate() {
            if task.dim() != self.dim {
                return Err(SimError::InvalidScenario(format!(
                    "task {t} has dimension {}, expected {}",
                    task.dim(),
                    self.dim
                )));
            }
        }
        if self.global_spec.pi_star.len() != self.tasks.len() {
            return Err(SimError::InvalidScenario(format!(
                "pi_star has length {}, expected {}",
                self.global_spec.pi_star.len(),
                self.tasks.len()
            )));
        }
        self.params
            .validate()
            .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        Ok(())
    }
}

/// Everything known at one timestep, before integration.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    /// Slacks, robots x tasks.
    pub delta: DMatrix<f64>,
    /// Priorities, robots x tasks.
    pub alpha: DMatrix<f64>,
    pub pi_h: DVector<f64>,
    /// Task costs J, robots x tasks.
    pub cost: DMatrix<f64>,
    /// Analytic cost rates grad J . u, robots x tasks.
    pub cost_rate: DMatrix<f64>,
    pub objective: f64,
    pub solver_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary {
    pub final_objective: f64,
    pub path_lengths: Vec<f64>,
    pub prop1_violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub steps: Vec<StepRecord>,
    pub summary: SimSummary,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("solver failed at step {step}: {source}")]
    SolverFailure {
        step: usize,
        /// Log of every completed step before the failure.
        partial: Vec<StepRecord>,
        source: AllocError,
    },
}

/// Explicit Euler step of the single-integrator dynamics.
pub fn step_euler(x: &[DVector<f64>], u: &[DVector<f64>], dt: f64) -> Vec<DVector<f64>> {
    assert!(dt > 0.0, "dt must be positive");
    x.iter().zip(u).map(|(xi, ui)| xi + dt * ui).collect()
}

/// Runs the scenario to completion, solving the allocation QP at every
/// step. The log is a pure function of the scenario and settings.
pub fn run_simulation(scenario: &Scenario, settings: &QpSettings) -> Result<SimLog, SimError> {
    scenario.validate()?;
    let n = scenario.num_robots();
    let m = scenario.num_tasks();
    let specs: Vec<Specialization> = scenario
        .robots
        .iter()
        .map(|r| r.specialization.clone())
        .collect();
    let mut x: Vec<DVector<f64>> = scenario.robots.iter().map(|r| r.start.clone()).collect();

    let total = scenario.num_steps();
    let mut steps: Vec<StepRecord> = Vec::with_capacity(total);
    for k in 0..total {
        let decision = solve_relaxed(
            &x,
            &scenario.tasks,
            &specs,
            &scenario.global_spec,
            &scenario.params,
            &scenario.gamma,
            settings,
        )
        .map_err(|source| SimError::SolverFailure {
            step: k,
            partial: std::mem::take(&mut steps),
            source,
        })?;

        let cost = DMatrix::from_fn(n, m, |i, t| {
            eval_cost(&scenario.tasks[t], &x[i]).expect("validated dimensions")
        });
        let cost_rate = DMatrix::from_fn(n, m, |i, t| {
            let grad_j = -eval_barrier(&scenario.tasks[t], &x[i])
                .expect("validated dimensions")
                .grad_h;
            grad_j.dot(&decision.u[i])
        });
        let record = StepRecord {
            t: k as f64 * scenario.dt,
            x: x.clone(),
            u: decision.u.clone(),
            delta: decision.delta.clone(),
            alpha: decision.alpha.clone(),
            pi_h: decision.pi_h.clone(),
            cost,
            cost_rate,
            objective: decision.objective,
            solver_iterations: decision.iterations,
        };
        if k + 1 < total {
            x = step_euler(&x, &record.u, scenario.dt);
        }
        steps.push(record);
    }

    let path_lengths = path_lengths(&steps, n);
    let final_objective = steps.last().expect("at least one step").objective;
    let prop1_violations = check_proposition1_steps(&steps, DEFAULT_MONITOR_TOL)
        .violations
        .len();
    Ok(SimLog {
        steps,
        summary: SimSummary {
            final_objective,
            path_lengths,
            prop1_violations,
        },
    })
}

fn path_lengths(steps: &[StepRecord], n: usize) -> Vec<f64> {
    let mut lengths = vec![0.0; n];
    for pair in steps.windows(2) {
        for i in 0..n {
            lengths[i] += (&pair[1].x[i] - &pair[0].x[i]).norm();
        }
    }
    lengths
}

/// Which clause of the execution guarantee a step violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prop1Clause {
    /// No task had a non-positive cost rate for this robot.
    TaskRate,
    /// All task gradients vanished but the commanded velocity did not.
    VanishingGradient,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prop1Violation {
    pub step: usize,
    pub robot: usize,
    pub clause: Prop1Clause,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prop1Report {
    pub tol: f64,
    pub violations: Vec<Prop1Violation>,
}

impl Prop1Report {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Audits a finished log:
///
/// * clause (a), per robot per step: some task has `dJ/dt <= tol`;
/// * clause (b), at steps where every `||grad J||` is at most `tol`
///   (gradient norms recovered as `2 sqrt(J)`): every `||u_i|| <= tol`.
pub fn check_proposition1(log: &SimLog, tol: f64) -> Prop1Report {
    check_proposition1_steps(&log.steps, tol)
}

pub fn check_proposition1_steps(steps: &[StepRecord], tol: f64) -> Prop1Report {
    let mut violations = Vec::new();
    for (k, step) in steps.iter().enumerate() {
        let n = step.cost.nrows();
        let m = step.cost.ncols();
        for i in 0..n {
            let executes_some_task = (0..m).any(|t| step.cost_rate[(i, t)] <= tol);
            if !executes_some_task {
                violations.push(Prop1Violation {
                    step: k,
                    robot: i,
                    clause: Prop1Clause::TaskRate,
                });
            }
        }
        let max_grad = (0..n)
            .flat_map(|i| (0..m).map(move |t| (i, t)))
            .map(|(i, t)| 2.0 * step.cost[(i, t)].max(0.0).sqrt())
            .fold(0.0_f64, f64::max);
        if max_grad <= tol {
            for (i, u) in step.u.iter().enumerate() {
                if u.norm() > tol {
                    violations.push(Prop1Violation {
                        step: k,
                        robot: i,
                        clause: Prop1Clause::VanishingGradient,
                    });
                }
            }
        }
    }
    Prop1Report { tol, violations }
}

/// Figure-level aggregates of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub path_lengths: Vec<f64>,
    /// Task costs at the final state, robots x tasks.
    pub final_cost: DMatrix<f64>,
    /// Min over time of each priority entry, robots x tasks.
    pub alpha_min: DMatrix<f64>,
    /// Max over time of each priority entry, robots x tasks.
    pub alpha_max: DMatrix<f64>,
}

pub fn metrics(log: &SimLog) -> Metrics {
    let first = log.steps.first().expect("non-empty log");
    let n = first.cost.nrows();
    let m = first.cost.ncols();
    let mut alpha_min = DMatrix::from_element(n, m, f64::INFINITY);
    let mut alpha_max = DMatrix::from_element(n, m, f64::NEG_INFINITY);
    for step in &log.steps {
        for i in 0..n {
            for t in 0..m {
                alpha_min[(i, t)] = alpha_min[(i, t)].min(step.alpha[(i, t)]);
                alpha_max[(i, t)] = alpha_max[(i, t)].max(step.alpha[(i, t)]);
            }
        }
    }
    Metrics {
        path_lengths: path_lengths(&log.steps, n),
        final_cost: log.steps.last().expect("non-empty log").cost.clone(),
        alpha_min,
        alpha_max,
    }
}
