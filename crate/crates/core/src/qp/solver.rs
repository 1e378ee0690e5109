//! Operator-splitting solver internals.
//!
//! The iteration follows the OSQP scheme: the problem is restated as
//! `min 1/2 x'Px + q'x  s.t.  l <= A_s x <= u` where `A_s` stacks the
//! inequality rows, the equality rows (`l = u`) and one identity row per
//! variable for the box bounds. Ruiz equilibration conditions the data,
//! and every few iterations the current active-set guess is "polished" by
//! solving the corresponding equality-constrained KKT system exactly on
//! the unscaled problem. Optimality is declared from the polished (or raw)
//! candidate only when all three unscaled KKT residuals pass `abs_tol`.
//!
//! The splitting parameter `sigma` appears only in the consensus term and
//! cancels at the fixed point, so it does not bias the solution. The only
//! solution-affecting regularization is the diagonal shift used to
//! stabilize the polish factorization, bounded by `POLISH_REG` and driven
//! to machine precision by iterative refinement against the unshifted
//! system.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{residuals_at, QpProblem, QpSettings, QpSolution, QpStatus, Residuals};

const SIGMA: f64 = 1e-6;
const RELAX: f64 = 1.6;
const RHO_INIT: f64 = 0.1;
const RHO_EQ_SCALE: f64 = 1e3;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const CHECK_EVERY: usize = 25;
const RUIZ_ITERS: usize = 10;
const EPS_INFEAS: f64 = 1e-9;
const POLISH_REG: f64 = 1e-11;

/// Stacked single-matrix view of all constraints.
struct Stacked {
    a: DMatrix<f64>,
    l: DVector<f64>,
    u: DVector<f64>,
}

fn stack(problem: &QpProblem) -> Stacked {
    let n = problem.num_vars();
    let mi = problem.num_ineq();
    let me = problem.num_eq();
    let m = mi + me + n;

    let mut a = DMatrix::zeros(m, n);
    let mut l = DVector::from_element(m, f64::NEG_INFINITY);
    let mut u = DVector::from_element(m, f64::INFINITY);

    if mi > 0 {
        a.view_mut((0, 0), (mi, n)).copy_from(&problem.g);
        u.rows_mut(0, mi).copy_from(&problem.h);
    }
    if me > 0 {
        a.view_mut((mi, 0), (me, n)).copy_from(&problem.a);
        l.rows_mut(mi, me).copy_from(&problem.b);
        u.rows_mut(mi, me).copy_from(&problem.b);
    }
    for i in 0..n {
        a[(mi + me + i, i)] = 1.0;
        l[mi + me + i] = problem.lower[i];
        u[mi + me + i] = problem.upper[i];
    }

    Stacked { a, l, u }
}

/// Ruiz equilibration of the stacked data plus cost normalization.
struct Scaling {
    d: DVector<f64>,
    e: DVector<f64>,
    cost: f64,
}

fn ruiz_equilibrate(
    p: &mut DMatrix<f64>,
    q: &mut DVector<f64>,
    a: &mut DMatrix<f64>,
) -> Scaling {
    let n = p.nrows();
    let m = a.nrows();
    let mut d = DVector::from_element(n, 1.0);
    let mut e = DVector::from_element(m, 1.0);
    let mut cost = 1.0;

    let guard = |v: f64| -> f64 {
        if v < 1e-10 {
            1.0
        } else {
            1.0 / v.sqrt()
        }
    };

    for _ in 0..RUIZ_ITERS {
        let mut dd = DVector::from_element(n, 1.0);
        for j in 0..n {
            let col_norm = p.column(j).amax().max(a.column(j).amax());
            dd[j] = guard(col_norm);
        }
        let mut de = DVector::from_element(m, 1.0);
        for i in 0..m {
            de[i] = guard(a.row(i).amax());
        }

        for i in 0..n {
            for j in 0..n {
                p[(i, j)] *= dd[i] * dd[j];
            }
        }
        for j in 0..n {
            q[j] *= dd[j];
        }
        for i in 0..m {
            for j in 0..n {
                a[(i, j)] *= de[i] * dd[j];
            }
        }
        d.component_mul_assign(&dd);
        e.component_mul_assign(&de);

        let mut mean_col = 0.0;
        for j in 0..n {
            mean_col += p.column(j).amax();
        }
        mean_col /= n as f64;
        let cnorm = mean_col.max(q.amax());
        if cnorm > 1e-10 {
            let gamma = 1.0 / cnorm.max(1e-6);
            let gamma = gamma.min(1e6).max(1e-6);
            *p *= gamma;
            *q *= gamma;
            cost *= gamma;
        }
    }

    Scaling { d, e, cost }
}

/// Exact detection of inconsistent equality rows via rank comparison.
fn equalities_inconsistent(problem: &QpProblem) -> bool {
    let me = problem.num_eq();
    if me == 0 {
        return false;
    }
    let n = problem.num_vars();
    let mut augmented = DMatrix::zeros(me, n + 1);
    augmented.view_mut((0, 0), (me, n)).copy_from(&problem.a);
    augmented.column_mut(n).copy_from(&problem.b);

    let svd_a = problem.a.clone().svd(false, false);
    let svd_aug = augmented.svd(false, false);
    let smax = svd_a
        .singular_values
        .iter()
        .cloned()
        .fold(0.0_f64, f64::max)
        .max(1.0);
    let tol = 1e-10 * smax * (me.max(n) as f64);
    let rank = |sv: &DVector<f64>| sv.iter().filter(|&&s| s > tol).count();
    rank(&svd_aug.singular_values) > rank(&svd_a.singular_values)
}

struct Candidate {
    solution: QpSolution,
}

/// Splits a stacked dual vector into the caller-facing pieces and scores
/// the point against the unscaled problem.
fn make_candidate(
    problem: &QpProblem,
    z: DVector<f64>,
    y_stacked: &DVector<f64>,
    iterations: usize,
) -> Candidate {
    let mi = problem.num_ineq();
    let me = problem.num_eq();
    let n = problem.num_vars();
    let dual_ineq = DVector::from_fn(mi, |i, _| y_stacked[i]);
    let dual_eq = DVector::from_fn(me, |i, _| y_stacked[mi + i]);
    let dual_bounds = DVector::from_fn(n, |i, _| y_stacked[mi + me + i]);
    let residuals = residuals_at(problem, &z, &dual_ineq, &dual_eq, &dual_bounds);
    let objective = problem.objective(&z);
    Candidate {
        solution: QpSolution {
            z,
            objective,
            dual_ineq,
            dual_eq,
            dual_bounds,
            status: QpStatus::MaxIterations,
            iterations,
            residuals,
        },
    }
}

/// Multiplier signs a valid optimum must carry; rejects polish results
/// built from a wrong active-set guess.
fn duals_admissible(problem: &QpProblem, cand: &Candidate, tol: f64) -> bool {
    let sol = &cand.solution;
    if sol.dual_ineq.iter().any(|&l| l < -tol) {
        return false;
    }
    for i in 0..problem.num_vars() {
        if sol.dual_bounds[i] > tol && !problem.upper[i].is_finite() {
            return false;
        }
        if sol.dual_bounds[i] < -tol && !problem.lower[i].is_finite() {
            return false;
        }
    }
    true
}

/// Solves the KKT system of the guessed active set on the unscaled
/// problem. Returns a candidate scored by its true residuals.
fn polish(
    problem: &QpProblem,
    stacked: &Stacked,
    x: &DVector<f64>,
    y: &DVector<f64>,
    primal_res: f64,
    iterations: usize,
) -> Option<Candidate> {
    let m = stacked.a.nrows();
    let row_vals = &stacked.a * x;
    let ymax = y.amax().max(1e-30);

    // A row joins the active-set guess when its slack is within the
    // current primal accuracy or its multiplier carries weight. The slack
    // tolerance tightens as the iteration converges, so weakly separated
    // rows (tiny but genuine slack) drop out before optimality is claimed.
    let slack_tol = |bound: f64| (10.0 * primal_res).max(1e-9 * (1.0 + bound.abs()));

    let mut active: Vec<(usize, f64)> = Vec::new();
    for i in 0..m {
        let l = stacked.l[i];
        let u = stacked.u[i];
        if l == u {
            active.push((i, u));
            continue;
        }
        let upper_hit =
            u.is_finite() && (u - row_vals[i] <= slack_tol(u) || y[i] > 1e-7 * ymax);
        let lower_hit =
            l.is_finite() && (row_vals[i] - l <= slack_tol(l) || y[i] < -1e-7 * ymax);
        if upper_hit {
            active.push((i, u));
        } else if lower_hit {
            active.push((i, l));
        }
    }

    // Refine the guess like a primal active-set method: solve the
    // equality-restricted KKT system, drop guessed rows whose multiplier
    // comes out with the wrong sign, add rows the solution violates.
    let mut candidate: Option<Candidate> = None;
    for _round in 0..8 {
        let (z, nu) = solve_active_kkt(problem, stacked, &active)?;
        let mut y_polished = DVector::zeros(m);
        for (j, &(row, _)) in active.iter().enumerate() {
            y_polished[row] = nu[j];
        }
        candidate = Some(make_candidate(problem, z.clone(), &y_polished, iterations));

        let mut changed = false;
        // Wrong-sign multipliers mark rows that should not be active.
        let mut keep: Vec<(usize, f64)> = Vec::with_capacity(active.len());
        for (j, &(row, bound)) in active.iter().enumerate() {
            if stacked.l[row] == stacked.u[row] {
                keep.push((row, bound));
                continue;
            }
            let at_upper = bound == stacked.u[row];
            let signed = if at_upper { nu[j] } else { -nu[j] };
            if signed < -1e-11 * (1.0 + nu[j].abs()) {
                changed = true;
            } else {
                keep.push((row, bound));
            }
        }
        active = keep;

        // Constraint rows the trial point violates must join the set.
        let vals = &stacked.a * &z;
        for i in 0..m {
            if active.iter().any(|&(row, _)| row == i) {
                continue;
            }
            if stacked.u[i].is_finite() && vals[i] - stacked.u[i] > 1e-11 * (1.0 + stacked.u[i].abs())
            {
                active.push((i, stacked.u[i]));
                changed = true;
            } else if stacked.l[i].is_finite()
                && stacked.l[i] - vals[i] > 1e-11 * (1.0 + stacked.l[i].abs())
            {
                active.push((i, stacked.l[i]));
                changed = true;
            }
        }

        if !changed {
            break;
        }
    }
    candidate
}

/// Solves `min 1/2 z'Pz + q'z  s.t.  rows hold with equality` through the
/// regularized KKT system, with iterative refinement against the
/// unregularized one so the `POLISH_REG` shift does not bias the result.
fn solve_active_kkt(
    problem: &QpProblem,
    stacked: &Stacked,
    active: &[(usize, f64)],
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = problem.num_vars();
    let k = active.len();
    let dim = n + k;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(&problem.p);
    for (j, &(row, _)) in active.iter().enumerate() {
        for c in 0..n {
            kkt[(n + j, c)] = stacked.a[(row, c)];
            kkt[(c, n + j)] = stacked.a[(row, c)];
        }
    }
    let mut rhs = DVector::zeros(dim);
    for c in 0..n {
        rhs[c] = -problem.q[c];
    }
    for (j, &(_, bound)) in active.iter().enumerate() {
        rhs[n + j] = bound;
    }

    let mut kkt_reg = kkt.clone();
    for i in 0..n {
        kkt_reg[(i, i)] += POLISH_REG;
    }
    for i in n..dim {
        kkt_reg[(i, i)] -= POLISH_REG;
    }
    let lu = kkt_reg.lu();
    let mut sol = lu.solve(&rhs)?;
    for _ in 0..2 {
        let resid = &rhs - &kkt * &sol;
        if let Some(corr) = lu.solve(&resid) {
            sol += corr;
        }
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let z = DVector::from_fn(n, |i, _| sol[i]);
    let nu = DVector::from_fn(k, |j, _| sol[n + j]);
    Some((z, nu))
}

/// Primal infeasibility certificate test on a dual-variable direction.
fn primal_infeasibility_certificate(stacked: &Stacked, dy: &DVector<f64>) -> bool {
    let norm = dy.amax();
    if norm <= 1e-12 {
        return false;
    }
    let atdy = stacked.a.transpose() * dy;
    if atdy.amax() > EPS_INFEAS * norm {
        return false;
    }
    let mut support = 0.0;
    for i in 0..dy.len() {
        let pos = dy[i].max(0.0);
        let neg = dy[i].min(0.0);
        if pos > EPS_INFEAS * norm && !stacked.u[i].is_finite() {
            return false;
        }
        if neg < -EPS_INFEAS * norm && !stacked.l[i].is_finite() {
            return false;
        }
        if stacked.u[i].is_finite() {
            support += stacked.u[i] * pos;
        }
        if stacked.l[i].is_finite() {
            support += stacked.l[i] * neg;
        }
    }
    support <= -EPS_INFEAS * norm
}

/// Dual infeasibility (unbounded direction) certificate test.
fn dual_infeasibility_certificate(
    problem: &QpProblem,
    stacked: &Stacked,
    dx: &DVector<f64>,
) -> bool {
    let norm = dx.amax();
    if norm <= 1e-12 {
        return false;
    }
    if (&problem.p * dx).amax() > EPS_INFEAS * norm {
        return false;
    }
    if problem.q.dot(dx) > -EPS_INFEAS * norm {
        return false;
    }
    let adx = &stacked.a * dx;
    for i in 0..adx.len() {
        if stacked.u[i].is_finite() && adx[i] > EPS_INFEAS * norm {
            return false;
        }
        if stacked.l[i].is_finite() && adx[i] < -EPS_INFEAS * norm {
            return false;
        }
    }
    true
}

pub(super) fn solve(problem: &QpProblem, settings: &QpSettings) -> QpSolution {
    let n = problem.num_vars();
    if n == 0 {
        return QpSolution {
            z: DVector::zeros(0),
            objective: problem.c0,
            dual_ineq: DVector::zeros(problem.num_ineq()),
            dual_eq: DVector::zeros(problem.num_eq()),
            dual_bounds: DVector::zeros(0),
            status: QpStatus::Optimal,
            iterations: 0,
            residuals: Residuals {
                primal: 0.0,
                dual: 0.0,
                complementarity: 0.0,
            },
        };
    }

    let stacked = stack(problem);
    let m = stacked.a.nrows();

    // Candidates with sign-admissible multipliers outrank any candidate
    // without them, then smaller worst-case residual wins.
    let mut best: Option<(bool, Candidate)> = None;
    let record = |admissible: bool, cand: Candidate, best: &mut Option<(bool, Candidate)>| {
        let better = match best.as_ref() {
            None => true,
            Some((best_adm, b)) => {
                if admissible != *best_adm {
                    admissible
                } else {
                    cand.solution.residuals.max() < b.solution.residuals.max()
                }
            }
        };
        if better {
            *best = Some((admissible, cand));
        }
    };

    if equalities_inconsistent(problem) {
        let mut solution = make_candidate(problem, DVector::zeros(n), &DVector::zeros(m), 0).solution;
        solution.status = QpStatus::Infeasible;
        return solution;
    }

    // Scaled copies of the data.
    let mut p_s = problem.p.clone();
    let mut q_s = problem.q.clone();
    let mut a_s = stacked.a.clone();
    let scaling = ruiz_equilibrate(&mut p_s, &mut q_s, &mut a_s);
    let l_s = DVector::from_fn(m, |i, _| stacked.l[i] * scaling.e[i]);
    let u_s = DVector::from_fn(m, |i, _| stacked.u[i] * scaling.e[i]);

    let mut rho_base = RHO_INIT;
    let build_rho = |rho_base: f64| -> DVector<f64> {
        DVector::from_fn(m, |i, _| {
            if l_s[i] == u_s[i] {
                (rho_base * RHO_EQ_SCALE).clamp(RHO_MIN, RHO_MAX)
            } else {
                rho_base.clamp(RHO_MIN, RHO_MAX)
            }
        })
    };
    let mut rho = build_rho(rho_base);

    let factorize = |p_s: &DMatrix<f64>, a_s: &DMatrix<f64>, rho: &DVector<f64>| {
        let mut sigma = SIGMA;
        loop {
            let mut k = p_s.clone();
            for i in 0..n {
                k[(i, i)] += sigma;
            }
            let scaled_rows = DMatrix::from_fn(m, n, |i, j| a_s[(i, j)] * rho[i]);
            k += a_s.transpose() * scaled_rows;
            if let Some(chol) = Cholesky::new(k) {
                return chol;
            }
            sigma *= 100.0;
            assert!(sigma < 1.0, "ADMM normal matrix not factorizable");
        }
    };
    let mut chol = factorize(&p_s, &a_s, &rho);

    let mut x = DVector::zeros(n);
    let mut z = DVector::from_fn(m, |i, _| 0.0_f64.clamp(l_s[i], u_s[i]));
    let mut y = DVector::zeros(m);
    let mut x_prev_check = x.clone();
    let mut y_prev_check = y.clone();

    let unscale_x = |x: &DVector<f64>| DVector::from_fn(n, |i, _| x[i] * scaling.d[i]);
    let unscale_y =
        |y: &DVector<f64>| DVector::from_fn(m, |i, _| y[i] * scaling.e[i] / scaling.cost);

    let mut iterations = 0;
    while iterations < settings.max_iter {
        iterations += 1;

        let mut rhs = SIGMA * &x - &q_s;
        let v = DVector::from_fn(m, |i, _| rho[i] * z[i] - y[i]);
        rhs += a_s.transpose() * v;
        let x_tilde = chol.solve(&rhs);
        let z_tilde = &a_s * &x_tilde;

        x = RELAX * &x_tilde + (1.0 - RELAX) * &x;
        let z_old = z.clone();
        for i in 0..m {
            let vi: f64 = RELAX * z_tilde[i] + (1.0 - RELAX) * z_old[i] + y[i] / rho[i];
            z[i] = vi.clamp(l_s[i], u_s[i]);
            y[i] += rho[i] * (RELAX * z_tilde[i] + (1.0 - RELAX) * z_old[i] - z[i]);
        }

        if iterations % CHECK_EVERY != 0 && iterations != settings.max_iter {
            continue;
        }

        let x_u = unscale_x(&x);
        let y_u = unscale_y(&y);

        let raw = make_candidate(problem, x_u.clone(), &y_u, iterations);
        let raw_primal_res = raw.solution.residuals.primal;
        let raw_admissible = duals_admissible(problem, &raw, settings.abs_tol);
        let raw_ok = raw_admissible && raw.solution.residuals.max() <= settings.abs_tol;
        if raw_ok {
            let mut sol = raw.solution;
            sol.status = QpStatus::Optimal;
            return sol;
        }
        record(raw_admissible, raw, &mut best);

        let raw_primal = best
            .as_ref()
            .map(|(_, b)| b.solution.residuals.primal)
            .unwrap_or(f64::INFINITY)
            .min(raw_primal_res);
        if let Some(polished) = polish(problem, &stacked, &x_u, &y_u, raw_primal, iterations) {
            let admissible = duals_admissible(problem, &polished, settings.abs_tol);
            if admissible && polished.solution.residuals.max() <= settings.abs_tol {
                let mut sol = polished.solution;
                sol.status = QpStatus::Optimal;
                return sol;
            }
            record(admissible, polished, &mut best);
        }

        let dy = unscale_y(&y) - unscale_y(&y_prev_check);
        let dx = unscale_x(&x) - unscale_x(&x_prev_check);
        if primal_infeasibility_certificate(&stacked, &dy)
            || dual_infeasibility_certificate(problem, &stacked, &dx)
        {
            let mut sol = best.expect("candidate recorded").1.solution;
            sol.status = QpStatus::Infeasible;
            sol.iterations = iterations;
            return sol;
        }
        x_prev_check = x.clone();
        y_prev_check = y.clone();

        // Residual-balancing step size adaptation, on scaled quantities.
        if iterations % (2 * CHECK_EVERY) == 0 {
            let ax = &a_s * &x;
            let pri = (&ax - &z).amax() / ax.amax().max(z.amax()).max(1e-10);
            let px = &p_s * &x;
            let aty = a_s.transpose() * &y;
            let dua = (&px + &q_s + &aty).amax()
                / px.amax().max(aty.amax()).max(q_s.amax()).max(1e-10);
            if pri > 1e-12 && dua > 1e-12 {
                let ratio = (pri / dua).sqrt();
                if !(0.2..=5.0).contains(&ratio) {
                    rho_base = (rho_base * ratio).clamp(RHO_MIN, RHO_MAX);
                    rho = build_rho(rho_base);
                    chol = factorize(&p_s, &a_s, &rho);
                }
            }
        }
    }

    let mut sol = best
        .expect("at least one candidate is recorded before max_iter")
        .1
        .solution;
    sol.status = QpStatus::MaxIterations;
    sol.iterations = iterations;
    sol
}
