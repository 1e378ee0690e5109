//! Constraint-driven multi-task execution and optimal task allocation for
//! heterogeneous robot teams.
//!
//! Robots are single integrators; each task is a positive cost whose
//! negation acts as a control barrier function. At every timestep the team
//! solves one convex QP that trades control effort, per-task slacks and
//! relaxed task priorities against a global allocation specification. The
//! crate provides:
//!
//! * [`qp`]: a self-contained dense convex QP solver with KKT-residual
//!   verification, the numeric engine behind everything else;
//! * [`tasks`]: go-to-point costs, barrier functions, class-K functions and
//!   the closed-form single-task controller;
//! * [`allocation`]: the relaxed allocation QP, specialization projectors,
//!   team-allocation maps, and an exact brute-force mixed-integer oracle;
//! * [`sim`]: closed-loop simulation with trajectory logging and runtime
//!   checks of the execution guarantees.

pub mod allocation;
pub mod qp;
pub mod sim;
pub mod tasks;

pub use allocation::{
    AllocError, AllocParams, AllocationDecision, CapabilityReport, GlobalSpec, OracleResult,
    Specialization, VariableLayout,
};
pub use qp::{QpProblem, QpSettings, QpSolution, QpStatus, Residuals};
pub use sim::{Metrics, Prop1Report, RobotSpec, Scenario, SimError, SimLog, StepRecord};
pub use tasks::{BarrierEval, GammaKind, GammaSpec, TaskError, TaskKind, TaskSpec};
