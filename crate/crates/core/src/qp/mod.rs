//! Dense convex quadratic programming with KKT-residual verification.
//!
//! Problems are stated in the form
//!
//! ```text
//!     minimize    1/2 z' P z + q' z + c0
//!     subject to  G z <= h
//!                 A z  = b
//!                 lower <= z <= upper
//! ```
//!
//! with `P` symmetric positive semidefinite. The `1/2` convention is fixed
//! here once; every caller in this workspace assembles to it. The constant
//! offset `c0` is carried through so objectives of related problems (e.g. a
//! relaxation and the exact problem it relaxes) stay directly comparable.
//!
//! [`solve_qp`] runs an operator-splitting (ADMM) iteration with Ruiz
//! equilibration and periodic active-set polishing, which is well suited to
//! the dense problems of a few dozen to a few hundred variables produced by
//! the allocation layer. A solution is reported `Optimal` only when all
//! three KKT residuals computed by [`kkt_residuals`] are at or below
//! `QpSettings::abs_tol`.

mod solver;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Shorthand used when building box bounds.
pub const INF: f64 = f64::INFINITY;

/// A dense convex QP in standard form.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    /// n x n symmetric positive-semidefinite cost matrix.
    pub p: DMatrix<f64>,
    /// Linear cost term, length n.
    pub q: DVector<f64>,
    /// Constant objective offset.
    pub c0: f64,
    /// Inequality matrix, rows mean `G z <= h`.
    pub g: DMatrix<f64>,
    /// Inequality right-hand side.
    pub h: DVector<f64>,
    /// Equality matrix, rows mean `A z = b`.
    pub a: DMatrix<f64>,
    /// Equality right-hand side.
    pub b: DVector<f64>,
    /// Per-variable lower bounds, `-inf` permitted.
    pub lower: DVector<f64>,
    /// Per-variable upper bounds, `+inf` permitted.
    pub upper: DVector<f64>,
}

impl QpProblem {
    /// An unconstrained problem `min 1/2 z'Pz + q'z`.
    pub fn new(p: DMatrix<f64>, q: DVector<f64>) -> Self {
        let n = q.len();
        QpProblem {
            p,
            q,
            c0: 0.0,
            g: DMatrix::zeros(0, n),
            h: DVector::zeros(0),
            a: DMatrix::zeros(0, n),
            b: DVector::zeros(0),
            lower: DVector::from_element(n, -INF),
            upper: DVector::from_element(n, INF),
        }
    }

    pub fn with_ineq(mut self, g: DMatrix<f64>, h: DVector<f64>) -> Self {
        self.g = g;
        self.h = h;
        self
    }

    pub fn with_eq(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a = a;
        self.b = b;
        self
    }

    pub fn with_bounds(mut self, lower: DVector<f64>, upper: DVector<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn with_offset(mut self, c0: f64) -> Self {
        self.c0 = c0;
        self
    }

    pub fn num_vars(&self) -> usize {
        self.q.len()
    }

    pub fn num_ineq(&self) -> usize {
        self.h.len()
    }

    pub fn num_eq(&self) -> usize {
        self.b.len()
    }

    /// Objective value `1/2 z'Pz + q'z + c0` at a point.
    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * (&self.p * z).dot(z) + self.q.dot(z) + self.c0
    }
}

/// Solver configuration.
///
/// `abs_tol` is the optimality guarantee: a solution is only reported
/// `Optimal` if primal, dual and complementarity residuals are all at or
/// below it. `rel_tol` additionally scales the internal ADMM stopping
/// test by the magnitude of the iterates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            abs_tol: 1e-8,
            rel_tol: 1e-8,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    MaxIterations,
    Infeasible,
}

/// KKT residuals of a candidate solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    /// Max violation over all inequality, equality and bound constraints.
    pub primal: f64,
    /// Inf-norm of the stationarity condition.
    pub dual: f64,
    /// Max over rows of |multiplier * constraint slack|.
    pub complementarity: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.complementarity)
    }
}

/// Primal/dual result of a solve.
///
/// `dual_bounds` holds the signed multipliers of the box constraints:
/// entry j is positive when the upper bound is active, negative when the
/// lower bound is active, so stationarity reads
/// `P z + q + G' dual_ineq + A' dual_eq + dual_bounds = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: DVector<f64>,
    pub objective: f64,
    pub dual_ineq: DVector<f64>,
    pub dual_eq: DVector<f64>,
    pub dual_bounds: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    pub residuals: Residuals,
}

#[derive(Debug, Error)]
pub enum QpError {
    #[error("invalid problem: {}", .0.join("; "))]
    InvalidProblem(Vec<String>),
}

/// Checks every [`QpProblem`] invariant and returns one message per
/// violation; an empty list means the problem is well formed.
pub fn validate_problem(problem: &QpProblem) -> Vec<String> {
    let mut violations = Vec::new();
    let n = problem.num_vars();

    if problem.p.nrows() != n || problem.p.ncols() != n {
        violations.push(format!(
            "P must be {n}x{n}, got {}x{}",
            problem.p.nrows(),
            problem.p.ncols()
        ));
    } else {
        let scale = problem.p.amax().max(1.0);
        let mut symmetric = true;
        for i in 0..n {
            for j in (i + 1)..n {
                if (problem.p[(i, j)] - problem.p[(j, i)]).abs() > 1e-12 * scale {
                    symmetric = false;
                }
            }
        }
        if !symmetric {
            violations.push("P not symmetric".to_string());
        }
    }

    if problem.g.ncols() != n && problem.g.nrows() > 0 {
        violations.push(format!("G has {} columns, expected {n}", problem.g.ncols()));
    }
    if problem.g.nrows() != problem.h.len() {
        violations.push(format!(
            "G has {} rows but h has length {}",
            problem.g.nrows(),
            problem.h.len()
        ));
    }
    if problem.a.ncols() != n && problem.a.nrows() > 0 {
        violations.push(format!("A has {} columns, expected {n}", problem.a.ncols()));
    }
    if problem.a.nrows() != problem.b.len() {
        violations.push(format!(
            "A has {} rows but b has length {}",
            problem.a.nrows(),
            problem.b.len()
        ));
    }
    if problem.lower.len() != n {
        violations.push(format!("lower has length {}, expected {n}", problem.lower.len()));
    }
    if problem.upper.len() != n {
        violations.push(format!("upper has length {}, expected {n}", problem.upper.len()));
    }

    if problem.lower.len() == n && problem.upper.len() == n {
        for i in 0..n {
            if problem.lower[i] > problem.upper[i] {
                violations.push(format!("bounds crossed at index {i}"));
            }
        }
    }

    for (name, mat) in [("P", &problem.p), ("G", &problem.g), ("A", &problem.a)] {
        if mat.iter().any(|v| !v.is_finite()) {
            violations.push(format!("non-finite entry in {name}"));
        }
    }
    for (name, vec) in [("q", &problem.q), ("h", &problem.h), ("b", &problem.b)] {
        if vec.iter().any(|v| !v.is_finite()) {
            violations.push(format!("non-finite entry in {name}"));
        }
    }
    if problem.lower.iter().chain(problem.upper.iter()).any(|v| v.is_nan()) {
        violations.push("NaN bound".to_string());
    }

    violations
}

/// Solves the QP. Statuses other than `Optimal` are reported in the
/// returned solution: `Infeasible` carries a certificate-detected empty
/// feasible set, `MaxIterations` carries the best iterate seen.
pub fn solve_qp(problem: &QpProblem, settings: &QpSettings) -> Result<QpSolution, QpError> {
    let violations = validate_problem(problem);
    if !violations.is_empty() {
        return Err(QpError::InvalidProblem(violations));
    }
    Ok(solver::solve(problem, settings))
}

/// Computes the three KKT residuals of `sol` for `problem`.
///
/// * primal: max violation over `G z <= h`, `A z = b` and the box bounds;
/// * dual:   `|| P z + q + G' lambda + A' nu + w ||_inf` with `w` the signed
///   bound multipliers;
/// * complementarity: max of `|lambda_j (G_j z - h_j)|` over inequality rows
///   and `|w_j (z_j - bound_j)|` over active-side finite bounds.
pub fn kkt_residuals(problem: &QpProblem, sol: &QpSolution) -> Residuals {
    residuals_at(problem, &sol.z, &sol.dual_ineq, &sol.dual_eq, &sol.dual_bounds)
}

pub(crate) fn residuals_at(
    problem: &QpProblem,
    z: &DVector<f64>,
    dual_ineq: &DVector<f64>,
    dual_eq: &DVector<f64>,
    dual_bounds: &DVector<f64>,
) -> Residuals {
    let n = problem.num_vars();
    let mut primal: f64 = 0.0;
    let mut complementarity: f64 = 0.0;

    if problem.num_ineq() > 0 {
        let slack = &problem.g * z - &problem.h;
        for j in 0..slack.len() {
            primal = primal.max(slack[j]);
            complementarity = complementarity.max((dual_ineq[j] * slack[j]).abs());
        }
    }
    if problem.num_eq() > 0 {
        let gap = &problem.a * z - &problem.b;
        primal = primal.max(gap.amax());
    }
    for i in 0..n {
        primal = primal.max(problem.lower[i] - z[i]).max(z[i] - problem.upper[i]);
        let w = dual_bounds[i];
        if w > 0.0 && problem.upper[i].is_finite() {
            complementarity = complementarity.max((w * (z[i] - problem.upper[i])).abs());
        } else if w < 0.0 && problem.lower[i].is_finite() {
            complementarity = complementarity.max((w * (z[i] - problem.lower[i])).abs());
        }
    }
    primal = primal.max(0.0);

    let mut stationarity = &problem.p * z + &problem.q + dual_bounds;
    if problem.num_ineq() > 0 {
        stationarity += problem.g.transpose() * dual_ineq;
    }
    if problem.num_eq() > 0 {
        stationarity += problem.a.transpose() * dual_eq;
    }
    let dual = if n > 0 { stationarity.amax() } else { 0.0 };

    Residuals {
        primal,
        dual,
        complementarity,
    }
}

#[cfg(test)]
mod tests;
