use invariset_core::expr::parse;
use invariset_core::model::vector_callback;
use invariset_core::oracle::{
    escape_schedule, grid_membership_scan, halton_point, polyhedral_mias_2d, random_instance_example3,
    random_polygon_instance,
};
use invariset_core::*;
use nalgebra::{DMatrix, DVector};

fn quad(q: &[f64], l: &[f64]) -> QuadraticConstraint {
    QuadraticConstraint::new(SymMat::from_row_slice(l.len(), q).unwrap(), DVector::from_row_slice(l)).unwrap()
}

fn a1() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0216, 0.3234, -0.6597, 0.5226])
}

fn omega2() -> Vec<QuadraticConstraint> {
    let r = 0.1875;
    vec![
        QuadraticConstraint::ball(2, 1.0),
        quad(&[2.0, 0.2, 0.2, -1.0], &[0.0, 0.0]),
        quad(&[-1.0 / r, 0.0, 0.0, -1.0 / r], &[-0.5 / r, 0.0]),
        quad(&[-1.0 / r, 0.0, 0.0, -1.0 / r], &[0.5 / r, 0.0]),
    ]
}

fn omega2_spec() -> ProblemSpec {
    ProblemSpec::linear(SystemModel::single(a1()).unwrap(), omega2())
}

fn theta1() -> QuasiSmoothConstraint {
    let e = parse("sqrt(x1^2+x2^2+1)+2*x1+2*x2-2", 2).unwrap();
    QuasiSmoothConstraint::new(ScalarField::Expr(e), -1.0, DVector::from_row_slice(&[2.0, 2.0]), 1.0).unwrap()
}

/// Halton samples in `[-half, half]^n`.
fn samples(n: usize, half: f64, count: usize) -> Vec<Vec<f64>> {
    (1..=count).map(|i| halton_point(i, n).into_iter().map(|u| half * (2.0 * u - 1.0)).collect()).collect()
}

fn same_membership(a: &InvariantSetDescription, b: &InvariantSetDescription, half: f64) {
    for x in samples(a.n(), half, 2000) {
        assert_eq!(a.contains(&x).unwrap(), b.contains(&x).unwrap(), "disagree at {x:?}");
    }
}

#[test]
fn members_stay_members_and_non_members_escape() {
    let specs = [
        ProblemSpec::linear(SystemModel::single(a1()).unwrap(), vec![QuadraticConstraint::ball(2, 1.0)]),
        omega2_spec(),
        omega2_spec().with_quasi(vec![theta1()]),
    ];
    for spec in &specs {
        let d = run_problem(spec, &IterateOptions::default()).unwrap();
        for x in samples(2, 1.2, 2000) {
            if d.contains(&x).unwrap() {
                assert!(spec.contains(&x, 1e-8).unwrap());
                let y = spec.system.step(0, &x).unwrap();
                assert!(d.contains(&y).unwrap(), "{x:?} maps outside");
            } else {
                assert!(escape_schedule(spec, &x, d.k_star, 0.0).unwrap().is_some(), "{x:?} never escapes");
            }
        }
    }
}

#[test]
fn levels_shrink() {
    let spec = omega2_spec().with_quasi(vec![theta1()]);
    let levels: Vec<_> = (0..10).map(|k| describe_level(&spec, k).unwrap()).collect();
    for x in samples(2, 1.2, 1500) {
        let verdicts: Vec<bool> = levels.iter().map(|d| d.contains(&x).unwrap()).collect();
        assert!(verdicts.windows(2).all(|w| w[0] || !w[1]), "{x:?}: {verdicts:?}");
    }
}

#[test]
fn pruning_does_not_change_the_set() {
    let never = IterateOptions { prune: PruneCadence::Never, final_prune: false, ..IterateOptions::default() };
    for spec in [omega2_spec(), random_instance_example3(2, 3).unwrap()] {
        let pruned = run_problem(&spec, &IterateOptions::default()).unwrap();
        let full = run_problem(&spec, &never).unwrap();
        assert_eq!(pruned.k_star, full.k_star);
        assert!(pruned.constraint_count() <= full.constraint_count());
        same_membership(&pruned, &full, 1.2);
    }
}

#[test]
fn duplicated_mode_matches_single_mode() {
    let single = run_algorithm1(&omega2_spec(), &IterateOptions::default()).unwrap();
    let doubled = ProblemSpec::linear(SystemModel::new(vec![a1(), a1()]).unwrap(), omega2());
    let doubled = run_switched(&doubled, &IterateOptions::default()).unwrap();
    assert_eq!(single.k_star, doubled.k_star);
    same_membership(&single, &doubled, 1.2);
}

#[test]
fn contracting_modes_on_the_disk_need_no_iteration() {
    let t: f64 = 0.7;
    let rot = DMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]) * 0.3;
    let sys = SystemModel::new(vec![DMatrix::identity(2, 2) * 0.5, rot]).unwrap();
    let d = run_switched(&ProblemSpec::linear(sys, vec![QuadraticConstraint::ball(2, 1.0)]), &IterateOptions::default())
        .unwrap();
    assert_eq!(d.k_star, 0);
}

#[test]
fn random_switched_instance_terminates() {
    let spec = random_instance_example3(2, 1).unwrap();
    let d = run_switched(&spec, &IterateOptions::default()).unwrap();
    assert!(d.k_star <= 15, "k* = {}", d.k_star);
    assert!(d.audit_certificates().unwrap().is_empty());
    for x in samples(2, 1.0, 1000) {
        if d.contains(&x).unwrap() {
            for m in 0..2 {
                assert!(d.contains(&spec.system.step(m, &x).unwrap()).unwrap());
            }
        }
    }
}

#[test]
fn flat_quasi_constraint_matches_quadratic() {
    // x1 ≤ 1 as a quasi-smooth constraint with zero curvature.
    let e = parse("x1", 2).unwrap();
    let flat = QuasiSmoothConstraint::new(ScalarField::Expr(e), 0.0, DVector::from_row_slice(&[1.0, 0.0]), 0.0).unwrap();
    let sys = SystemModel::single(a1()).unwrap();
    let ball = QuadraticConstraint::ball(2, 1.5);
    let a = run_algorithm2(&ProblemSpec::linear(sys.clone(), vec![ball.clone()]).with_quasi(vec![flat]), &IterateOptions::default())
        .unwrap();
    let b = run_algorithm1(&ProblemSpec::linear(sys, vec![ball, quad(&[0.0; 4], &[0.5, 0.0])]), &IterateOptions::default())
        .unwrap();
    assert_eq!(a.k_star, b.k_star);
    same_membership(&a, &b, 1.5);
}

#[test]
fn algorithm2_without_quasi_is_algorithm1() {
    let a = run_algorithm1(&omega2_spec(), &IterateOptions::default()).unwrap();
    let b = run_algorithm2(&omega2_spec(), &IterateOptions::default()).unwrap();
    assert_eq!(a.k_star, b.k_star);
    assert_eq!(a.constraint_count(), b.constraint_count());
}

#[test]
fn identity_transform_is_algorithm1() {
    let t = TransformedSystem::new(
        SystemModel::single(a1()).unwrap(),
        vector_callback(|x| x.to_vec()),
        vector_callback(|y| y.to_vec()),
    );
    let a = run_transformed(t, omega2(), Vec::new(), None, &IterateOptions::default()).unwrap();
    let b = run_algorithm1(&omega2_spec(), &IterateOptions::default()).unwrap();
    assert_eq!(a.k_star, b.k_star);
    same_membership(&a, &b, 1.2);
}

#[test]
fn quadratic_polynomial_uses_the_quadratic_pipeline() {
    let sys = SystemModel::single(a1()).unwrap();
    let e = parse("2*x1^2 + 0.4*x1*x2 - x2^2", 2).unwrap();
    let p = PolynomialConstraint::from_expr(&e, 2, 1.0).unwrap();
    let via_poly = ProblemSpec::linear(sys.clone(), vec![QuadraticConstraint::ball(2, 1.0)]).with_poly(vec![p]);
    let direct = ProblemSpec::linear(sys, vec![QuadraticConstraint::ball(2, 1.0), quad(&[2.0, 0.2, 0.2, -1.0], &[0.0, 0.0])]);
    let a = run_problem(&via_poly, &IterateOptions::default()).unwrap();
    let b = run_problem(&direct, &IterateOptions::default()).unwrap();
    assert_eq!(a.k_star, b.k_star);
    same_membership(&a, &b, 1.2);
}

#[test]
fn polyhedral_baseline_agrees() {
    for seed in 0..20 {
        let spec = random_polygon_instance(seed).unwrap();
        let d = run_algorithm1(&spec, &IterateOptions::default()).unwrap();
        let k = polyhedral_mias_2d(&spec.quad, &spec.system.linear_part().modes()[0]).unwrap();
        assert_eq!(d.k_star, k, "seed {seed}");
    }
}

#[test]
fn failure_modes() {
    let single = omega2_spec();
    assert!(matches!(run_switched(&single, &IterateOptions::default()), Err(Error::Unsupported(_))));
    let tight = IterateOptions { k_max: 2, ..IterateOptions::default() };
    assert!(matches!(run_algorithm1(&single, &tight), Err(Error::IterationBudgetExceeded { .. })));
    let unstable = ProblemSpec::linear(SystemModel::single(a1() * 2.0).unwrap(), omega2());
    assert!(matches!(run_algorithm1(&unstable, &IterateOptions::default()), Err(Error::Unstable { .. })));
    let d = run_algorithm1(&single, &IterateOptions::default()).unwrap();
    assert!(matches!(d.contains(&[0.0, 0.0, 0.0]), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn scan_of_the_circle_is_point_symmetric() {
    let spec = ProblemSpec::linear(SystemModel::single(a1()).unwrap(), vec![QuadraticConstraint::ball(2, 1.0)]);
    let d = run_algorithm1(&spec, &IterateOptions::default()).unwrap();
    let scan = grid_membership_scan(&d, &[-1.1, -1.1], &[1.1, 1.1], 101).unwrap();
    let v = &scan.verdicts;
    assert!(scan.members() > 0 && scan.members() < v.len());
    for i in 0..v.len() {
        assert_eq!(v[i], v[v.len() - 1 - i]);
    }
    let far = grid_membership_scan(&d, &[2.0, 2.0], &[3.0, 3.0], 5).unwrap();
    assert_eq!(far.members(), 0);
}
