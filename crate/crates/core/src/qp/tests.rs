use super::*;
use approx::assert_abs_diff_eq;
use nalgebra::{dmatrix, dvector};

fn two_var_identity_cost() -> QpProblem {
    QpProblem::new(dmatrix![2.0, 0.0; 0.0, 2.0], dvector![0.0, 0.0])
}

#[test]
fn validate_accepts_well_formed_problem() {
    let p = two_var_identity_cost()
        .with_ineq(dmatrix![1.0, 1.0], dvector![1.0])
        .with_bounds(dvector![-1.0, -1.0], dvector![1.0, 1.0]);
    assert!(validate_problem(&p).is_empty());
}

#[test]
fn validate_flags_asymmetric_p() {
    let mut p = two_var_identity_cost();
    p.p[(0, 1)] = 1e-3;
    let violations = validate_problem(&p);
    assert_eq!(violations, vec!["P not symmetric".to_string()]);
}

#[test]
fn validate_flags_crossed_bounds() {
    let p = QpProblem::new(dmatrix![2.0], dvector![0.0])
        .with_bounds(dvector![1.0], dvector![0.0]);
    let violations = validate_problem(&p);
    assert_eq!(violations, vec!["bounds crossed at index 0".to_string()]);
}

#[test]
fn validate_flags_dimension_mismatch() {
    let p = two_var_identity_cost().with_ineq(dmatrix![1.0, 1.0], dvector![1.0, 2.0]);
    assert!(!validate_problem(&p).is_empty());
}

#[test]
fn solve_projects_onto_halfspace() {
    // Nearest point to the origin with z1 >= 3.
    let p = two_var_identity_cost().with_ineq(dmatrix![-1.0, 0.0], dvector![-3.0]);
    let sol = solve_qp(&p, &QpSettings::default()).unwrap();
    assert_eq!(sol.status, QpStatus::Optimal);
    assert_abs_diff_eq!(sol.z[0], 3.0, epsilon = 1e-8);
    assert_abs_diff_eq!(sol.z[1], 0.0, epsilon = 1e-8);
    assert_abs_diff_eq!(sol.objective, 9.0, epsilon = 1e-7);
}

#[test]
fn solve_min_norm_control_with_slack() {
    // min ||u||^2 + delta^2 over z = (u1, u2, delta) s.t. -2 u1 + delta >= 1.
    // Closed form: z = b (a, 1) / (||a||^2 + 1) with a = (-2, 0), b = 1.
    let p = QpProblem::new(
        DMatrix::from_diagonal(&dvector![2.0, 2.0, 2.0]),
        dvector![0.0, 0.0, 0.0],
    )
    .with_ineq(dmatrix![2.0, 0.0, -1.0], dvector![-1.0]);
    let sol = solve_qp(&p, &QpSettings::default()).unwrap();
    assert_eq!(sol.status, QpStatus::Optimal);
    assert_abs_diff_eq!(sol.z[0], -0.4, epsilon = 1e-8);
    assert_abs_diff_eq!(sol.z[1], 0.0, epsilon = 1e-8);
    assert_abs_diff_eq!(sol.z[2], 0.2, epsilon = 1e-8);
    assert_abs_diff_eq!(sol.objective, 0.2, epsilon = 1e-8);
}

#[test]
fn solve_equality_constrained_symmetric_split() {
    let p = two_var_identity_cost().with_eq(dmatrix![1.0, 1.0], dvector![1.0]);
    let sol = solve_qp(&p, &QpSettings::default()).unwrap();
    assert_eq!(sol.status, QpStatus::Optimal);
    assert_abs_diff_eq!(sol.z[0], 0.5, epsilon = 1e-8);
    assert_abs_diff_eq!(sol.z[1], 0.5, epsilon = 1e-8);
}

#[test]
fn solve_detects_empty_halfspace_intersection() {
    // z1 <= -1 and z1 >= 1 cannot both hold.
    let p = two_var_identity_cost().with_ineq(
        dmatrix![1.0, 0.0; -1.0, 0.0],
        dvector![-1.0, -1.0],
    );
    let sol = solve_qp(&p, &QpSettings::default()).unwrap();
    assert_eq!(sol.status, QpStatus::Infeasible);
}

#[test]
fn solve_detects_inconsistent_equalities() {
    let p = two_var_identity_cost().with_eq(
        dmatrix![1.0, 1.0; 1.0, 1.0],
        dvector![1.0, 2.0],
    );
    let sol = solve_qp(&p, &QpSettings::default()).unwrap();
    assert_eq!(sol.status, QpStatus::Infeasible);
}

#[test]
fn solve_rejects_invalid_problem() {
    let p = QpProblem::new(dmatrix![2.0], dvector![0.0])
        .with_bounds(dvector![1.0], dvector![0.0]);
    assert!(matches!(
        solve_qp(&p, &QpSettings::default()),
        Err(QpError::InvalidProblem(_))
    ));
}

#[test]
fn residuals_vanish_at_analytic_optimum() {
    let p = QpProblem::new(
        DMatrix::from_diagonal(&dvector![2.0, 2.0, 2.0]),
        dvector![0.0, 0.0, 0.0],
    )
    .with_ineq(dmatrix![2.0, 0.0, -1.0], dvector![-1.0]);
    // Stationarity 2z + lambda (2, 0, -1) = 0 at z = (-0.4, 0, 0.2) gives
    // lambda = 0.4.
    let sol = QpSolution {
        z: dvector![-0.4, 0.0, 0.2],
        objective: 0.2,
        dual_ineq: dvector![0.4],
        dual_eq: DVector::zeros(0),
        dual_bounds: DVector::zeros(3),
        status: QpStatus::Optimal,
        iterations: 0,
        residuals: Residuals {
            primal: 0.0,
            dual: 0.0,
            complementarity: 0.0,
        },
    };
    let res = kkt_residuals(&p, &sol);
    assert!(res.max() <= 1e-12, "residuals {res:?}");
}

#[test]
fn residuals_report_primal_violation() {
    let p = two_var_identity_cost().with_ineq(dmatrix![-1.0, 0.0], dvector![-3.0]);
    let sol = QpSolution {
        z: dvector![0.0, 0.0],
        objective: 0.0,
        dual_ineq: dvector![0.0],
        dual_eq: DVector::zeros(0),
        dual_bounds: DVector::zeros(2),
        status: QpStatus::MaxIterations,
        iterations: 0,
        residuals: Residuals {
            primal: 0.0,
            dual: 0.0,
            complementarity: 0.0,
        },
    };
    let res = kkt_residuals(&p, &sol);
    assert_abs_diff_eq!(res.primal, 3.0, epsilon = 1e-15);
}

#[test]
fn residuals_zero_dual_at_unconstrained_optimum() {
    let p = QpProblem::new(dmatrix![2.0, 0.0; 0.0, 2.0], dvector![-2.0, 0.0]);
    let sol = QpSolution {
        z: dvector![1.0, 0.0],
        objective: -1.0,
        dual_ineq: DVector::zeros(0),
        dual_eq: DVector::zeros(0),
        dual_bounds: DVector::zeros(2),
        status: QpStatus::Optimal,
        iterations: 0,
        residuals: Residuals {
            primal: 0.0,
            dual: 0.0,
            complementarity: 0.0,
        },
    };
    let res = kkt_residuals(&p, &sol);
    assert_abs_diff_eq!(res.dual, 0.0, epsilon = 1e-15);
}

#[test]
fn objective_scaling_preserves_argmin() {
    let base = QpProblem::new(dmatrix![2.0, 0.3; 0.3, 4.0], dvector![1.0, -2.0])
        .with_ineq(dmatrix![1.0, 1.0], dvector![0.5])
        .with_offset(0.7);
    let settings = QpSettings::default();
    let reference = solve_qp(&base, &settings).unwrap();
    for lambda in [0.5, 3.0, 250.0] {
        let scaled = QpProblem {
            p: &base.p * lambda,
            q: &base.q * lambda,
            c0: base.c0 * lambda,
            ..base.clone()
        };
        let sol = solve_qp(&scaled, &settings).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_abs_diff_eq!(sol.objective, reference.objective * lambda, epsilon = 1e-6 * lambda);
        for i in 0..2 {
            assert_abs_diff_eq!(sol.z[i], reference.z[i], epsilon = 1e-6);
        }
    }
}

#[test]
fn solves_are_bit_deterministic() {
    let p = QpProblem::new(dmatrix![2.0, 0.5; 0.5, 2.0], dvector![-1.0, 2.0])
        .with_ineq(dmatrix![1.0, 2.0; -1.0, 0.4], dvector![1.0, 0.3])
        .with_bounds(dvector![-2.0, -2.0], dvector![2.0, 2.0]);
    let settings = QpSettings::default();
    let a = solve_qp(&p, &settings).unwrap();
    let b = solve_qp(&p, &settings).unwrap();
    assert_eq!(a.iterations, b.iterations);
    for i in 0..2 {
        assert_eq!(a.z[i].to_bits(), b.z[i].to_bits());
    }
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
}

#[test]
fn optimal_status_implies_residuals_within_tolerance() {
    let settings = QpSettings::default();
    let p = QpProblem::new(dmatrix![2.0, 0.0; 0.0, 2.0], dvector![-4.0, 1.0])
        .with_ineq(dmatrix![1.0, 1.0; -1.0, 2.0], dvector![1.0, 2.0])
        .with_eq(dmatrix![1.0, -1.0], dvector![0.25])
        .with_bounds(dvector![-10.0, -10.0], dvector![10.0, 10.0]);
    let sol = solve_qp(&p, &settings).unwrap();
    assert_eq!(sol.status, QpStatus::Optimal);
    let res = kkt_residuals(&p, &sol);
    assert!(res.max() <= settings.abs_tol, "residuals {res:?}");
    assert!(sol.dual_ineq.iter().all(|&l| l >= -settings.abs_tol));
}
