use invariset_core::expr::parse;
use invariset_core::model::{scalar_callback, vector_callback};
use invariset_core::oracle::simulate_steps;
use invariset_core::*;
use nalgebra::{DMatrix, DVector};

fn quad(q: &[f64], l: &[f64]) -> QuadraticConstraint {
    QuadraticConstraint::new(SymMat::from_row_slice(l.len(), q).unwrap(), DVector::from_row_slice(l)).unwrap()
}

fn a1() -> SystemModel {
    SystemModel::single(DMatrix::from_row_slice(2, 2, &[1.0216, 0.3234, -0.6597, 0.5226])).unwrap()
}

fn omega2() -> Vec<QuadraticConstraint> {
    let r = 0.25 - 1.0 / 16.0;
    vec![
        QuadraticConstraint::ball(2, 1.0),
        quad(&[2.0, 0.2, 0.2, -1.0], &[0.0, 0.0]),
        quad(&[-1.0 / r, 0.0, 0.0, -1.0 / r], &[-0.5 / r, 0.0]),
        quad(&[-1.0 / r, 0.0, 0.0, -1.0 / r], &[0.5 / r, 0.0]),
    ]
}

fn theta1(expr: &str, h0: f64) -> QuasiSmoothConstraint {
    let e = parse(expr, 2).unwrap();
    QuasiSmoothConstraint::new(ScalarField::Expr(e), h0, DVector::from_row_slice(&[2.0, 2.0]), 1.0).unwrap()
}

#[test]
fn circle_terminates_at_three() {
    let d = run_algorithm1(&ProblemSpec::linear(a1(), vec![QuadraticConstraint::ball(2, 1.0)]), &IterateOptions::default())
        .unwrap();
    assert_eq!(d.k_star, 3);
}

#[test]
fn omega2_terminates_at_eight() {
    let d = run_algorithm1(&ProblemSpec::linear(a1(), omega2()), &IterateOptions::default()).unwrap();
    assert_eq!(d.k_star, 8);
    assert!(d.audit_certificates().unwrap().is_empty());
    assert!(!d.contains(&[0.5, 0.0]).unwrap());
    assert!(d.contains(&[0.0, 0.0]).unwrap());
}

#[test]
fn omega2_with_theta1_terminates_at_eight() {
    let spec = ProblemSpec::linear(a1(), omega2())
        .with_quasi(vec![theta1("sqrt(x1^2+x2^2+1)+2*x1+2*x2-2", -1.0)]);
    let d = run_algorithm2(&spec, &IterateOptions::default()).unwrap();
    assert_eq!(d.k_star, 8);
    assert_eq!(d.quasi_words.len(), 9);
}

#[test]
fn theta1_with_zero_right_hand_side() {
    let e = parse("sqrt(x1^2+x2^2+1)+2*x1+2*x2-2", 2).unwrap();
    let c = QuasiSmoothConstraint::with_rhs(ScalarField::Expr(e), -1.0, DVector::from_row_slice(&[2.0, 2.0]), 1.0, 0.0)
        .unwrap();
    assert_eq!(c.h0, 0.0);
    let spec = ProblemSpec::linear(a1(), omega2()).with_quasi(vec![c]);
    let d = run_algorithm2(&spec, &IterateOptions::default()).unwrap();
    assert_eq!(d.k_star, 8);
}

fn wiener_spec() -> ProblemSpec {
    let sys = SystemModel::single(DMatrix::from_row_slice(2, 2, &[0.5, 0.7, -0.7, 0.5])).unwrap();
    let g = parse("(x1-x2) + (x1-x2)^2 + (x1-x2)^3 - (x1-x2)^4", 2).unwrap();
    let p = expr::expand_polynomial(&g, 2).unwrap();
    let upper = PolynomialConstraint::new(p.clone(), 2.0).unwrap();
    let lower = PolynomialConstraint::new(p.scale(-1.0), 2.0).unwrap();
    ProblemSpec::linear(sys, vec![QuadraticConstraint::ball(2, 2.5)]).with_poly(vec![upper, lower]).with_dx(2.5)
}

#[test]
fn wiener_lifted_terminates_at_five() {
    let spec = wiener_spec();
    let d = run_problem(&spec, &IterateOptions::default()).unwrap();
    assert_eq!(d.k_star, 5);
    assert!(d.audit_certificates().unwrap().is_empty());
    let x0 = [0.3, -0.2];
    assert!(d.contains(&x0).unwrap());
    for x in simulate_steps(&spec.system, &x0, 100).unwrap() {
        assert!(d.contains(&x).unwrap());
    }
}

fn example4_spec() -> ProblemSpec {
    let inner = SystemModel::single(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -0.8, 0.0])).unwrap();
    let t = TransformedSystem::new(
        inner,
        vector_callback(|x| vec![x[0], 2.0 * x[0] * x[0] + x[1]]),
        vector_callback(|y| vec![y[0], y[1] - 2.0 * y[0] * y[0]]),
    );
    let y = vec![
        quad(&[0.0; 4], &[0.5, 0.0]),
        quad(&[0.0; 4], &[-0.5, 0.0]),
        quad(&[-2.0, 0.0, 0.0, 0.0], &[0.0, 0.5]),
        quad(&[2.0, 0.0, 0.0, 0.0], &[0.0, -0.5]),
    ];
    ProblemSpec { system: Dynamics::Transformed(t), quad: y, quasi: vec![], poly: vec![], dx: Some(10.0) }
}

#[test]
fn transformed_system_takes_three_iterations() {
    let spec = example4_spec();
    let d = run_problem(&spec, &IterateOptions::default()).unwrap();
    assert_eq!(d.k_star, 3);
    assert!(d.contains(&[0.0, 0.0]).unwrap());
    // T(x) = (1.5, …) violates |y₁| ≤ 1.
    assert!(!d.contains(&[1.5, 0.0]).unwrap());
}

#[test]
fn callback_quasi_constraint_matches_expression() {
    let f = scalar_callback(|x| (x[0] * x[0] + x[1] * x[1] + 1.0).sqrt() + 2.0 * x[0] + 2.0 * x[1] - 2.0);
    let c = QuasiSmoothConstraint::new(f, -1.0, DVector::from_row_slice(&[2.0, 2.0]), 1.0).unwrap();
    let spec = ProblemSpec::linear(a1(), omega2()).with_quasi(vec![c]);
    assert_eq!(run_algorithm2(&spec, &IterateOptions::default()).unwrap().k_star, 8);
}
