//! Heterogeneous task-allocation QP: assembly, solving, and the exact
//! brute-force mixed-integer oracle used to validate the relaxation.
//!
//! For `N` robots and `M` tasks the decision vector stacks one block per
//! robot, `[u_i (d), delta_i (M), alpha_i (M)]`, and the objective is
//!
//! ```text
//!   C ||pi* - pi_h(alpha)||^2
//!     + sum_i ( ||u_i||^2 + ||delta_i||^2_{S_i} )
//!     + eps sum_i ( ||delta_i||^2 + ||alpha_i||^2 )
//! ```
//!
//! where `pi_h(alpha) = (1/N) sum_i P_i alpha_i` projects each robot's
//! priority vector through its capability projector `P_i = S_i S_i^+`.
//! The `eps` term restores strict convexity when specializations have zero
//! entries; it is applied identically in the relaxed QP and in the oracle's
//! inner problems so their objectives stay comparable.
//!
//! Constraint rows are emitted in a fixed, documented order so dual
//! variables are interpretable in logs:
//!
//! 1. `N*M` barrier rows, ordered by `(robot, task)`:
//!    `-(dh_im/dx_i) u_i - delta_im <= gamma(h_im)`;
//! 2. `N*M*(M-1)` priority rows, ordered by `(robot, m, n)` with `n != m`:
//!    `kappa delta_im - delta_in + kappa delta_max alpha_im <= kappa delta_max`;
//! 3. `N` equality rows `sum_m alpha_im = 1`;
//! 4. box bounds `0 <= delta <= delta_max`, `0 <= alpha <= 1`, `u` free.
//!
//! Slacks are additionally kept nonnegative (the paper bounds only
//! `||delta||_inf`): negative slack would tighten barrier rows, is never
//! selected under the quadratic penalty, and `delta >= 0` makes the big-M
//! priority rows exactly vacuous when `alpha_im = 0`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::qp::{solve_qp, QpError, QpProblem, QpSettings, QpStatus, Residuals};
use crate::tasks::{eval_barrier, gamma_eval, GammaSpec, TaskSpec};

/// Default cap on the number of assignments the oracle will enumerate.
pub const DEFAULT_ENUM_CAP: usize = 4096;

/// Diagonal of a robot's specialization matrix `S_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Specialization {
    entries: DVector<f64>,
}

impl Specialization {
    pub fn new(entries: DVector<f64>) -> Result<Self, AllocError> {
        if let Some(idx) = entries.iter().position(|&s| !(s >= 0.0)) {
            return Err(AllocError::NegativeSpecialization {
                index: idx,
                value: entries[idx],
            });
        }
        Ok(Specialization { entries })
    }

    /// Equal nonzero suitability for every task.
    pub fn uniform(num_tasks: usize) -> Self {
        Specialization {
            entries: DVector::from_element(num_tasks, 1.0),
        }
    }

    pub fn entries(&self) -> &DVector<f64> {
        &self.entries
    }

    pub fn num_tasks(&self) -> usize {
        self.entries.len()
    }
}

/// Desired fraction of robots per task.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalSpec {
    pub pi_star: DVector<f64>,
}

impl GlobalSpec {
    pub fn new(pi_star: DVector<f64>) -> Result<Self, AllocError> {
        if let Some(idx) = pi_star.iter().position(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(AllocError::InvalidGlobalSpec {
                index: idx,
                value: pi_star[idx],
            });
        }
        Ok(GlobalSpec { pi_star })
    }
}

/// Weights and bounds of the allocation objective and constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocParams {
    /// Allocation-tracking weight `C`.
    pub c: f64,
    /// Priority ratio `kappa > 1`.
    pub kappa: f64,
    /// Slack bound `delta_max`.
    pub delta_max: f64,
    /// Strict-convexity regularizer `eps`.
    pub eps_reg: f64,
}

impl Default for AllocParams {
    fn default() -> Self {
        AllocParams {
            c: 100.0,
            kappa: 10.0,
            delta_max: 50.0,
            eps_reg: 1e-6,
        }
    }
}

impl AllocParams {
    pub fn validate(&self) -> Result<(), AllocError> {
        if !(self.c > 0.0) {
            return Err(AllocError::InvalidParams("C must be positive".into()));
        }
        if !(self.kappa > 1.0) {
            return Err(AllocError::InvalidParams("kappa must exceed 1".into()));
        }
        if !(self.delta_max > 0.0) {
            return Err(AllocError::InvalidParams("delta_max must be positive".into()));
        }
        if !(self.eps_reg >= 0.0) {
            return Err(AllocError::InvalidParams("eps_reg must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Index arithmetic for the stacked decision vector and constraint rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariableLayout {
    pub dim: usize,
    pub num_robots: usize,
    pub num_tasks: usize,
}

impl VariableLayout {
    pub fn total_vars(&self) -> usize {
        self.num_robots * (self.dim + 2 * self.num_tasks)
    }

    pub fn robot_base(&self, robot: usize) -> usize {
        robot * (self.dim + 2 * self.num_tasks)
    }

    pub fn u_index(&self, robot: usize, axis: usize) -> usize {
        self.robot_base(robot) + axis
    }

    pub fn delta_index(&self, robot: usize, task: usize) -> usize {
        self.robot_base(robot) + self.dim + task
    }

    pub fn alpha_index(&self, robot: usize, task: usize) -> usize {
        self.robot_base(robot) + self.dim + self.num_tasks + task
    }

    pub fn num_barrier_rows(&self) -> usize {
        self.num_robots * self.num_tasks
    }

    pub fn num_priority_rows(&self) -> usize {
        self.num_robots * self.num_tasks * (self.num_tasks - 1)
    }

    pub fn num_ineq_rows(&self) -> usize {
        self.num_barrier_rows() + self.num_priority_rows()
    }

    pub fn barrier_row(&self, robot: usize, task: usize) -> usize {
        robot * self.num_tasks + task
    }

    /// Row of the priority constraint for ordered pair `(m, n)`, `n != m`.
    pub fn priority_row(&self, robot: usize, m: usize, n: usize) -> usize {
        debug_assert_ne!(m, n);
        let per_robot = self.num_tasks * (self.num_tasks - 1);
        let n_slot = if n < m { n } else { n - 1 };
        self.num_barrier_rows() + robot * per_robot + m * (self.num_tasks - 1) + n_slot
    }
}

/// Per-timestep solve output.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationDecision {
    /// Velocity command per robot.
    pub u: Vec<DVector<f64>>,
    /// Slacks, robots x tasks.
    pub delta: DMatrix<f64>,
    /// Relaxed priorities, robots x tasks.
    pub alpha: DMatrix<f64>,
    /// Team allocation `pi_h(alpha)`.
    pub pi_h: DVector<f64>,
    /// Objective including the constant offset.
    pub objective: f64,
    /// Solver iterations spent on this decision.
    pub iterations: usize,
}

/// Tasks the team can execute at all.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapabilityReport {
    /// Task indices some robot is suited for, ascending.
    pub executable: Vec<usize>,
    /// True when every task is executable.
    pub full_rank: bool,
}

/// Result of the exact enumeration oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Chosen task index per robot (lexicographically smallest optimum).
    pub assignment: Vec<usize>,
    pub decision: AllocationDecision,
    pub objective: f64,
}

#[derive(Debug, Error)]
pub enum AllocError {
    #[error("specialization entry {index} is negative or NaN ({value})")]
    NegativeSpecialization { index: usize, value: f64 },
    #[error("pi_star entry {index} outside [0, 1] ({value})")]
    InvalidGlobalSpec { index: usize, value: f64 },
    #[error("invalid allocation parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("allocation QP reported infeasible; the relaxation is feasible by construction, so the inputs are inconsistent")]
    Infeasible,
    #[error("solver hit the iteration cap (worst residual {worst:.3e})", worst = .residuals.max())]
    MaxIterations {
        /// Best iterate found; usable but not certified optimal.
        decision: Box<AllocationDecision>,
        residuals: Residuals,
    },
    #[error("assignment enumeration needs {required} assignments, cap is {cap}")]
    EnumerationCap { required: usize, cap: usize },
    #[error("oracle inner solve failed for assignment {assignment:?}: {status:?}")]
    OracleInner {
        assignment: Vec<usize>,
        status: QpStatus,
    },
    #[error(transparent)]
    Qp(#[from] QpError),
}

/// Diagonal of the projector `P_i = S_i S_i^+`: entry `m` is 1 exactly when
/// the robot has any suitability for task `m`.
pub fn projector(spec: &Specialization) -> DVector<f64> {
    spec.entries.map(|s| if s > 0.0 { 1.0 } else { 0.0 })
}

/// Homogeneous team allocation: componentwise mean of the priority rows.
pub fn pi_homogeneous(alpha: &DMatrix<f64>) -> DVector<f64> {
    let n = alpha.nrows();
    let m = alpha.ncols();
    let mut out = DVector::zeros(m);
    for i in 0..n {
        for t in 0..m {
            out[t] += alpha[(i, t)];
        }
    }
    out / n as f64
}

/// Heterogeneous team allocation `pi_h = (1/N) sum_i P_i alpha_i`.
pub fn pi_hetero(alpha: &DMatrix<f64>, projectors: &[DVector<f64>]) -> DVector<f64> {
    let n = alpha.nrows();
    let m = alpha.ncols();
    assert_eq!(projectors.len(), n, "one projector per robot");
    let mut out = DVector::zeros(m);
    for (i, proj) in projectors.iter().enumerate() {
        for t in 0..m {
            out[t] += proj[t] * alpha[(i, t)];
        }
    }
    out / n as f64
}

/// Which tasks the team can execute; full rank means all of them.
pub fn capability_set(projectors: &[DVector<f64>]) -> CapabilityReport {
    let num_tasks = projectors.first().map(|p| p.len()).unwrap_or(0);
    let mut executable = Vec::new();
    for t in 0..num_tasks {
        if projectors.iter().any(|p| p[t] > 0.0) {
            executable.push(t);
        }
    }
    let full_rank = !projectors.is_empty() && executable.len() == num_tasks;
    CapabilityReport {
        executable,
        full_rank,
    }
}

fn check_inputs(
    x: &[DVector<f64>],
    tasks: &[TaskSpec],
    specs: &[Specialization],
    global: &GlobalSpec,
    params: &AllocParams,
) -> Result<VariableLayout, AllocError> {
    params.validate()?;
    let n = x.len();
    let m = tasks.len();
    if n == 0 {
        return Err(AllocError::DimensionMismatch("no robots".into()));
    }
    if m == 0 {
        return Err(AllocError::DimensionMismatch("no tasks".into()));
    }
    if specs.len() != n {
        return Err(AllocError::DimensionMismatch(format!(
            "{n} robots but {} specializations",
            specs.len()
        )));
    }
    let dim = x[0].len();
    for (i, xi) in x.iter().enumerate() {
        if xi.len() != dim {
            return Err(AllocError::DimensionMismatch(format!(
                "robot {i} position has dimension {}, expected {dim}",
                xi.len()
            )));
        }
    }
    for (t, task) in tasks.iter().enumerate() {
        if task.dim() != dim {
            return Err(AllocError::DimensionMismatch(format!(
                "task {t} has dimension {}, expected {dim}",
                task.dim()
            )));
        }
    }
    for (i, spec) in specs.iter().enumerate() {
        if spec.num_tasks() != m {
            return Err(AllocError::DimensionMismatch(format!(
                "robot {i} specialization covers {} tasks, expected {m}",
                spec.num_tasks()
            )));
        }
    }
    if global.pi_star.len() != m {
        return Err(AllocError::DimensionMismatch(format!(
            "pi_star has length {}, expected {m}",
            global.pi_star.len()
        )));
    }
    Ok(VariableLayout {
        dim,
        num_robots: n,
        num_tasks: m,
    })
}

/// Assembles the relaxed allocation QP at the given robot positions.
pub fn build_relaxed_qp(
    x: &[DVector<f64>],
    tasks: &[TaskSpec],
    specs: &[Specialization],
    global: &GlobalSpec,
    params: &AllocParams,
    gamma: &GammaSpec,
) -> Result<(QpProblem, VariableLayout), AllocError> {
    let layout = check_inputs(x, tasks, specs, global, params)?;
    let (n, m, d) = (layout.num_robots, layout.num_tasks, layout.dim);
    let nv = layout.total_vars();
    let projectors: Vec<DVector<f64>> = specs.iter().map(projector).collect();

    let mut p = DMatrix::zeros(nv, nv);
    let mut q = DVector::zeros(nv);
    let eps = params.eps_reg;

    for i in 0..n {
        for k in 0..d {
            p[(layout.u_index(i, k), layout.u_index(i, k))] = 2.0;
        }
        for t in 0..m {
            let di = layout.delta_index(i, t);
            p[(di, di)] = 2.0 * (specs[i].entries()[t] + eps);
            let ai = layout.alpha_index(i, t);
            p[(ai, ai)] = 2.0 * eps;
        }
    }
    // Allocation tracking: C || pi* - (1/N) sum_i P_i alpha_i ||^2 expands
    // into alpha-alpha couplings per task plus a linear pull toward pi*.
    let coupling = 2.0 * params.c / (n * n) as f64;
    for t in 0..m {
        for i in 0..n {
            if projectors[i][t] == 0.0 {
                continue;
            }
            q[layout.alpha_index(i, t)] -= 2.0 * params.c / n as f64 * global.pi_star[t];
            for j in 0..n {
                if projectors[j][t] == 0.0 {
                    continue;
                }
                p[(layout.alpha_index(i, t), layout.alpha_index(j, t))] += coupling;
            }
        }
    }
    let c0 = params.c * global.pi_star.norm_squared();

    let rows = layout.num_ineq_rows();
    let mut g = DMatrix::zeros(rows, nv);
    let mut h = DVector::zeros(rows);
    for i in 0..n {
        for t in 0..m {
            let barrier = eval_barrier(&tasks[t], &x[i]).expect("dimensions checked");
            let row = layout.barrier_row(i, t);
            for k in 0..d {
                g[(row, layout.u_index(i, k))] = -barrier.grad_h[k];
            }
            g[(row, layout.delta_index(i, t))] = -1.0;
            h[row] = gamma_eval(gamma, barrier.h);
        }
    }
    let big_m = params.kappa * params.delta_max;
    for i in 0..n {
        for t in 0..m {
            for o in 0..m {
                if o == t {
                    continue;
                }
                let row = layout.priority_row(i, t, o);
                g[(row, layout.delta_index(i, t))] = params.kappa;
                g[(row, layout.delta_index(i, o))] = -1.0;
                g[(row, layout.alpha_index(i, t))] = big_m;
                h[row] = big_m;
            }
        }
    }

    let mut a = DMatrix::zeros(n, nv);
    let b = DVector::from_element(n, 1.0);
    for i in 0..n {
        for t in 0..m {
            a[(i, layout.alpha_index(i, t))] = 1.0;
        }
    }

    let mut lower = DVector::from_element(nv, f64::NEG_INFINITY);
    let mut upper = DVector::from_element(nv, f64::INFINITY);
    for i in 0..n {
        for t in 0..m {
            lower[layout.delta_index(i, t)] = 0.0;
            upper[layout.delta_index(i, t)] = params.delta_max;
            lower[layout.alpha_index(i, t)] = 0.0;
            upper[layout.alpha_index(i, t)] = 1.0;
        }
    }

    let problem = QpProblem::new(p, q)
        .with_ineq(g, h)
        .with_eq(a, b)
        .with_bounds(lower, upper)
        .with_offset(c0);
    Ok((problem, layout))
}

fn extract_decision(
    layout: &VariableLayout,
    projectors: &[DVector<f64>],
    z: &DVector<f64>,
    objective: f64,
    iterations: usize,
) -> AllocationDecision {
    let (n, m, d) = (layout.num_robots, layout.num_tasks, layout.dim);
    let u = (0..n)
        .map(|i| DVector::from_fn(d, |k, _| z[layout.u_index(i, k)]))
        .collect();
    let delta = DMatrix::from_fn(n, m, |i, t| z[layout.delta_index(i, t)]);
    let alpha = DMatrix::from_fn(n, m, |i, t| z[layout.alpha_index(i, t)]);
    let pi_h = pi_hetero(&alpha, projectors);
    AllocationDecision {
        u,
        delta,
        alpha,
        pi_h,
        objective,
        iterations,
    }
}

/// Builds and solves the relaxed QP, returning per-robot commands, slacks,
/// priorities and the achieved team allocation.
pub fn solve_relaxed(
    x: &[DVector<f64>],
    tasks: &[TaskSpec],
    specs: &[Specialization],
    global: &GlobalSpec,
    params: &AllocParams,
    gamma: &GammaSpec,
    settings: &QpSettings,
) -> Result<AllocationDecision, AllocError> {
    let (problem, layout) = build_relaxed_qp(x, tasks, specs, global, params, gamma)?;
    let projectors: Vec<DVector<f64>> = specs.iter().map(projector).collect();
    let sol = solve_qp(&problem, settings)?;
    match sol.status {
        QpStatus::Optimal => Ok(extract_decision(
            &layout,
            &projectors,
            &sol.z,
            sol.objective,
            sol.iterations,
        )),
        QpStatus::Infeasible => Err(AllocError::Infeasible),
        QpStatus::MaxIterations => Err(AllocError::MaxIterations {
            decision: Box::new(extract_decision(
                &layout,
                &projectors,
                &sol.z,
                sol.objective,
                sol.iterations,
            )),
            residuals: sol.residuals,
        }),
    }
}

/// Layout of the oracle's inner problems: `[u_i (d), delta_i (M)]` blocks.
fn inner_indices(d: usize, m: usize, robot: usize) -> (usize, usize) {
    let base = robot * (d + m);
    (base, base + d)
}

/// Solves the allocation problem with `alpha` pinned to the given binary
/// assignment (one task per robot). The returned objective includes the
/// same constant terms as the relaxed QP, so the two are comparable.
pub fn solve_assignment(
    x: &[DVector<f64>],
    tasks: &[TaskSpec],
    specs: &[Specialization],
    global: &GlobalSpec,
    params: &AllocParams,
    gamma: &GammaSpec,
    settings: &QpSettings,
    assignment: &[usize],
) -> Result<AllocationDecision, AllocError> {
    let layout = check_inputs(x, tasks, specs, global, params)?;
    let (n, m, d) = (layout.num_robots, layout.num_tasks, layout.dim);
    if assignment.len() != n {
        return Err(AllocError::DimensionMismatch(format!(
            "assignment covers {} robots, expected {n}",
            assignment.len()
        )));
    }
    if let Some(&bad) = assignment.iter().find(|&&t| t >= m) {
        return Err(AllocError::DimensionMismatch(format!(
            "assignment names task {bad}, but there are only {m}"
        )));
    }
    let projectors: Vec<DVector<f64>> = specs.iter().map(projector).collect();
    let alpha = DMatrix::from_fn(n, m, |i, t| if assignment[i] == t { 1.0 } else { 0.0 });
    let pi_h = pi_hetero(&alpha, &projectors);

    let nv = n * (d + m);
    let eps = params.eps_reg;
    let mut p = DMatrix::zeros(nv, nv);
    for i in 0..n {
        let (u0, d0) = inner_indices(d, m, i);
        for k in 0..d {
            p[(u0 + k, u0 + k)] = 2.0;
        }
        for t in 0..m {
            p[(d0 + t, d0 + t)] = 2.0 * (specs[i].entries()[t] + eps);
        }
    }
    let q = DVector::zeros(nv);
    // alpha is fixed: the tracking term and eps ||alpha||^2 are constants.
    let c0 = params.c * (&global.pi_star - &pi_h).norm_squared() + eps * n as f64;

    let rows = n * m + n * m * (m - 1);
    let mut g = DMatrix::zeros(rows, nv);
    let mut h = DVector::zeros(rows);
    for i in 0..n {
        let (u0, d0) = inner_indices(d, m, i);
        for t in 0..m {
            let barrier = eval_barrier(&tasks[t], &x[i]).expect("dimensions checked");
            let row = i * m + t;
            for k in 0..d {
                g[(row, u0 + k)] = -barrier.grad_h[k];
            }
            g[(row, d0 + t)] = -1.0;
            h[row] = gamma_eval(gamma, barrier.h);
        }
    }
    let mut row = n * m;
    for i in 0..n {
        let (_, d0) = inner_indices(d, m, i);
        for t in 0..m {
            for o in 0..m {
                if o == t {
                    continue;
                }
                g[(row, d0 + t)] = params.kappa;
                g[(row, d0 + o)] = -1.0;
                h[row] = params.kappa * params.delta_max * (1.0 - alpha[(i, t)]);
                row += 1;
            }
        }
    }

    let mut lower = DVector::from_element(nv, f64::NEG_INFINITY);
    let mut upper = DVector::from_element(nv, f64::INFINITY);
    for i in 0..n {
        let (_, d0) = inner_indices(d, m, i);
        for t in 0..m {
            lower[d0 + t] = 0.0;
            upper[d0 + t] = params.delta_max;
        }
    }

    let problem = QpProblem::new(p, q)
        .with_ineq(g, h)
        .with_bounds(lower, upper)
        .with_offset(c0);
    let sol = solve_qp(&problem, settings)?;
    if sol.status != QpStatus::Optimal {
        return Err(AllocError::OracleInner {
            assignment: assignment.to_vec(),
            status: sol.status,
        });
    }

    let u = (0..n)
        .map(|i| {
            let (u0, _) = inner_indices(d, m, i);
            DVector::from_fn(d, |k, _| sol.z[u0 + k])
        })
        .collect();
    let delta = DMatrix::from_fn(n, m, |i, t| {
        let (_, d0) = inner_indices(d, m, i);
        sol.z[d0 + t]
    });
    Ok(AllocationDecision {
        u,
        delta,
        alpha,
        pi_h,
        objective: sol.objective,
        iterations: sol.iterations,
    })
}

/// Exact mixed-integer optimum by enumerating every binary assignment.
/// Ties go to the lexicographically smallest assignment.
pub fn miqp_oracle(
    x: &[DVector<f64>],
    tasks: &[TaskSpec],
    specs: &[Specialization],
    global: &GlobalSpec,
    params: &AllocParams,
    gamma: &GammaSpec,
    settings: &QpSettings,
    cap: usize,
) -> Result<OracleResult, AllocError> {
    let layout = check_inputs(x, tasks, specs, global, params)?;
    let (n, m) = (layout.num_robots, layout.num_tasks);
    let total = m
        .checked_pow(n as u32)
        .filter(|&t| t <= cap)
        .ok_or(AllocError::EnumerationCap {
            required: m.saturating_pow(n as u32),
            cap,
        })?;

    let mut best: Option<OracleResult> = None;
    let mut assignment = vec![0usize; n];
    for code in 0..total {
        let mut rem = code;
        // Robot 0 owns the most significant digit so ascending codes are
        // lexicographically ordered assignments.
        for i in (0..n).rev() {
            assignment[i] = rem % m;
            rem /= m;
        }
        let decision = solve_assignment(
            x, tasks, specs, global, params, gamma, settings, &assignment,
        )?;
        let objective = decision.objective;
        if best.as_ref().map_or(true, |b| objective < b.objective) {
            best = Some(OracleResult {
                assignment: assignment.clone(),
                decision,
                objective,
            });
        }
    }
    Ok(best.expect("at least one assignment exists"))
}
