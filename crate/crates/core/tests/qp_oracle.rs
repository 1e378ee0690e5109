//! Oracle equivalence for the QP solver.
//!
//! The oracle is an independent brute-force active-set enumeration: for
//! every subset of candidate active inequality constraints (including
//! finite bounds), solve the equality-constrained stationarity system and
//! keep the feasible point of least cost. For a strictly convex QP the
//! optimizer's active set appears in the enumeration, so the least feasible
//! cost equals the true optimum.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use taskalloc::qp::{kkt_residuals, solve_qp, QpProblem, QpSettings, QpStatus};

const FEAS_TOL: f64 = 1e-9;

/// One candidate active row: coefficients and right-hand side of `r z = v`.
struct Row {
    coeffs: DVector<f64>,
    value: f64,
}

/// All inequality-type rows of the problem in `r z <= v` form.
fn inequality_rows(p: &QpProblem) -> Vec<Row> {
    let n = p.num_vars();
    let mut rows = Vec::new();
    for i in 0..p.num_ineq() {
        rows.push(Row {
            coeffs: p.g.row(i).transpose(),
            value: p.h[i],
        });
    }
    for j in 0..n {
        if p.upper[j].is_finite() {
            let mut c = DVector::zeros(n);
            c[j] = 1.0;
            rows.push(Row {
                coeffs: c,
                value: p.upper[j],
            });
        }
        if p.lower[j].is_finite() {
            let mut c = DVector::zeros(n);
            c[j] = -1.0;
            rows.push(Row {
                coeffs: c,
                value: -p.lower[j],
            });
        }
    }
    rows
}

fn is_feasible(p: &QpProblem, rows: &[Row], z: &DVector<f64>) -> bool {
    if p.num_eq() > 0 && (&p.a * z - &p.b).amax() > FEAS_TOL {
        return false;
    }
    rows.iter().all(|r| r.coeffs.dot(z) - r.value <= FEAS_TOL)
}

/// Minimize over the affine set where the given rows (plus all equalities)
/// hold with equality. Returns `None` when the set is empty.
fn restricted_minimum(p: &QpProblem, active: &[&Row]) -> Option<DVector<f64>> {
    let n = p.num_vars();
    let me = p.num_eq();
    let k = me + active.len();
    let dim = n + k;

    let mut kkt = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(&p.p);
    for c in 0..n {
        rhs[c] = -p.q[c];
    }
    for i in 0..me {
        for c in 0..n {
            kkt[(n + i, c)] = p.a[(i, c)];
            kkt[(c, n + i)] = p.a[(i, c)];
        }
        rhs[n + i] = p.b[i];
    }
    for (j, row) in active.iter().enumerate() {
        for c in 0..n {
            kkt[(n + me + j, c)] = row.coeffs[c];
            kkt[(c, n + me + j)] = row.coeffs[c];
        }
        rhs[n + me + j] = row.value;
    }

    let svd = kkt.svd(true, true);
    let sol = svd.solve(&rhs, 1e-12).ok()?;
    let z = DVector::from_fn(n, |i, _| sol[i]);

    // Reject when the active equations themselves have no solution.
    if me > 0 && (&p.a * &z - &p.b).amax() > FEAS_TOL {
        return None;
    }
    for row in active {
        if (row.coeffs.dot(&z) - row.value).abs() > FEAS_TOL {
            return None;
        }
    }
    Some(z)
}

/// Brute-force optimum by enumerating every subset of inequality rows.
fn enumeration_oracle(p: &QpProblem) -> Option<f64> {
    let rows = inequality_rows(p);
    assert!(rows.len() <= 12, "enumeration blow-up: {} rows", rows.len());
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << rows.len()) {
        let active: Vec<&Row> = rows
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, r)| r)
            .collect();
        if let Some(z) = restricted_minimum(p, &active) {
            if is_feasible(p, &rows, &z) {
                let obj = p.objective(&z);
                best = Some(best.map_or(obj, |b: f64| b.min(obj)));
            }
        }
    }
    best
}

/// Random strictly convex problem, feasible by construction around `z0`.
fn random_problem(rng: &mut ChaCha8Rng) -> QpProblem {
    let n: usize = rng.gen_range(1..=8);
    let mi = rng.gen_range(0..=6usize);
    let me = rng.gen_range(0..=2usize.min(n.saturating_sub(1)));

    let l = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let mu = rng.gen_range(0.1..1.0);
    let p_mat = &l * l.transpose() + DMatrix::from_diagonal_element(n, n, mu);
    let q = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
    let z0 = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));

    let g = DMatrix::from_fn(mi, n, |_, _| rng.gen_range(-1.0..1.0));
    let h = DVector::from_fn(mi, |i, _| {
        let slack = if rng.gen_bool(0.3) {
            0.0
        } else {
            rng.gen_range(0.0..2.0)
        };
        g.row(i).transpose().dot(&z0) + slack
    });
    let a = DMatrix::from_fn(me, n, |_, _| rng.gen_range(-1.0..1.0));
    let b = &a * &z0;

    // Keep the total inequality-row count enumerable.
    let budget = 12 - mi;
    let mut lower = DVector::from_element(n, f64::NEG_INFINITY);
    let mut upper = DVector::from_element(n, f64::INFINITY);
    let mut used = 0;
    for j in 0..n {
        if used < budget && rng.gen_bool(0.25) {
            lower[j] = z0[j] - rng.gen_range(0.0..2.0);
            used += 1;
        }
        if used < budget && rng.gen_bool(0.25) {
            upper[j] = z0[j] + rng.gen_range(0.0..2.0);
            used += 1;
        }
    }

    QpProblem::new(p_mat, q)
        .with_ineq(g, h)
        .with_eq(a, b)
        .with_bounds(lower, upper)
        .with_offset(rng.gen_range(-1.0..1.0))
}

#[test]
fn solver_matches_enumeration_oracle_on_random_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let settings = QpSettings::default();
    let mut checked = 0;
    while checked < 200 {
        let problem = random_problem(&mut rng);
        let sol = solve_qp(&problem, &settings).unwrap();
        assert_eq!(
            sol.status,
            QpStatus::Optimal,
            "constructed-feasible problem {checked} did not solve"
        );

        let res = kkt_residuals(&problem, &sol);
        assert!(
            res.max() <= settings.abs_tol,
            "problem {checked}: residuals {res:?}"
        );
        assert!(sol
            .dual_ineq
            .iter()
            .all(|&lam| lam >= -settings.abs_tol));

        let oracle = enumeration_oracle(&problem).expect("feasible by construction");
        assert!(
            (sol.objective - oracle).abs() <= 1e-6,
            "problem {checked}: solver {} vs oracle {}",
            sol.objective,
            oracle
        );
        checked += 1;
    }
}
