use invariset_core::certify::{recheck, solve_certificate};
use invariset_core::expr::{evaluate, expand_polynomial, parse};
use invariset_core::lift::{binomial, lift_map, lifted_dimension, monomial_basis, polynomial_to_quadratic};
use invariset_core::linalg::spectral_radius;
use invariset_core::model::{augment_mode, homogenize_lower, homogenize_quadratic, homogenize_upper};
use invariset_core::oracle::jsr_upper_bound;
use invariset_core::poly::Polynomial;
use invariset_core::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn matrix(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| DMatrix::from_row_slice(n, n, &v))
}

fn vector(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn homogenized_value_is_constraint_minus_one(q in matrix(3), l in vector(3), x in vector(3)) {
        let c = QuadraticConstraint::new(SymMat::symmetrize(q), DVector::from_vec(l)).unwrap();
        let h = homogenize_quadratic(&c);
        let lhs = h.value_at(&x);
        let rhs = c.value(&x) - 1.0;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn augmented_mode_acts_on_homogeneous_coordinates(a in matrix(3), x in vector(3)) {
        let ab = augment_mode(&a);
        let mut xh = x.clone();
        xh.push(1.0);
        let y = &ab * DVector::from_vec(xh);
        let ax = &a * DVector::from_vec(x);
        for i in 0..3 {
            prop_assert!((y[i] - ax[i]).abs() < 1e-14);
        }
        prop_assert_eq!(y[3], 1.0);
    }

    #[test]
    fn theta1_envelopes_sandwich(r in 0.0f64..1.0, phi in 0.0f64..std::f64::consts::TAU) {
        let e = parse("sqrt(x1^2+x2^2+1)+2*x1+2*x2-2", 2).unwrap();
        let c = QuasiSmoothConstraint::new(ScalarField::Expr(e), -1.0, DVector::from_row_slice(&[2.0, 2.0]), 1.0).unwrap();
        let x = [r * phi.cos(), r * phi.sin()];
        let h = c.eval(&x).unwrap() - 1.0;
        prop_assert!(homogenize_lower(&c).value_at(&x) <= h + 1e-12);
        prop_assert!(h <= homogenize_upper(&c).value_at(&x) + 1e-9);
    }

    #[test]
    fn pullback_evaluates_along_the_map(a in matrix(2), q in matrix(2), x in vector(2)) {
        let c = QuadraticConstraint::new(SymMat::symmetrize(q), DVector::from_row_slice(&[0.3, -0.1])).unwrap();
        let h = homogenize_quadratic(&c);
        let pulled = h.pullback(&augment_mode(&a));
        let ax = &a * DVector::from_row_slice(&x);
        let expect = h.value_at(ax.as_slice());
        prop_assert!((pulled.value_at(&x) - expect).abs() <= 1e-11 * (1.0 + expect.abs()));
    }

    #[test]
    fn lift_is_functorial(a in matrix(2), b in matrix(2)) {
        let basis = monomial_basis(2, 4).unwrap();
        let ab = lift_map(&(&a * &b), &basis);
        let prod = lift_map(&a, &basis) * lift_map(&b, &basis);
        prop_assert!((ab - prod).amax() < 1e-9);
    }

    #[test]
    fn lift_commutes_with_dynamics(a in matrix(3), x in vector(3)) {
        let basis = monomial_basis(3, 5).unwrap();
        let t = lift_map(&a, &basis);
        let ax = &a * DVector::from_row_slice(&x);
        let lhs = basis.lift(ax.as_slice());
        let rhs = &t * DVector::from_vec(basis.lift(&x));
        for (u, v) in lhs.iter().zip(rhs.iter()) {
            prop_assert!((u - v).abs() <= 1e-10 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn rewriting_is_exact(coeffs in prop::collection::vec(-1.0f64..1.0, 14), x in vector(2)) {
        // All monomials of degree 1..=4 in two variables.
        let mut exps = Vec::new();
        for d in 1..=4u32 {
            for i in 0..=d {
                exps.push(vec![i, d - i]);
            }
        }
        let p = Polynomial::from_terms(2, exps.into_iter().zip(coeffs));
        prop_assume!(!p.is_zero());
        let c = PolynomialConstraint::new(p.clone(), 1.0).unwrap();
        let basis = monomial_basis(2, c.degree().max(3)).unwrap();
        let (pm, f) = polynomial_to_quadratic(&c, &basis).unwrap();
        let z = basis.lift(&x);
        let v = pm.quad_form(&z) + 2.0 * (f[0] * x[0] + f[1] * x[1]);
        prop_assert!((v - p.eval(&x)).abs() <= 1e-9 * (1.0 + v.abs()));
    }

    #[test]
    fn lifted_map_stays_schur(a in matrix(2)) {
        let rho = spectral_radius(&a);
        prop_assume!(rho > 1e-3);
        let a = a * (0.95 / rho);
        let basis = monomial_basis(2, 4).unwrap();
        prop_assert!(spectral_radius(&lift_map(&a, &basis)) < 1.0);
    }

    #[test]
    fn jsr_bound_dominates_spectral_radius(a in matrix(2), b in matrix(2)) {
        let modes = [a.clone(), b.clone()];
        let b1 = jsr_upper_bound(&modes, 1);
        let b4 = jsr_upper_bound(&modes, 4);
        prop_assert!(b4 <= b1 + 1e-12);
        prop_assert!(b4 >= spectral_radius(&a) - 1e-9);
        prop_assert!(b4 >= spectral_radius(&b) - 1e-9);
        prop_assert!(b4 >= spectral_radius(&(&a * &b)).sqrt() - 1e-9);
    }

    #[test]
    fn certified_weights_recheck(q in matrix(3), s1 in matrix(3), s2 in matrix(3)) {
        let hom = |m: DMatrix<f64>| HomForm::new(SymMat::symmetrize(m));
        let target = hom(q);
        let family = vec![hom(s1.transpose() * &s1 * -1.0), hom(s2)];
        let opts = SolverOptions { max_iters: 300, ..SolverOptions::default() };
        let c = solve_certificate(&target, &family, &opts).unwrap();
        prop_assert!(c.weights.iter().all(|&w| w >= 0.0));
        let refs: Vec<&HomForm> = family.iter().collect();
        if c.is_certified() {
            prop_assert!(recheck(&target, &refs, &c.weights, opts.eps_cert).unwrap());
        }
    }
}

const EXPRESSIONS: &[&str] = &[
    "sqrt(x1^2+x2^2+1)+2*x1+2*x2-2",
    "2*x1^2 - x2^2 + 0.4*x1*x2",
    "(x1-x2) + (x1-x2)^2 + (x1-x2)^3 - (x1-x2)^4",
    "-x1^2 + 3/(1+x2^2) - (x1*x2)/4",
    "((x1))^3 - -x2 * 1.5e-1",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printing_round_trips(idx in 0usize..EXPRESSIONS.len(), x in vector(2)) {
        let e = parse(EXPRESSIONS[idx], 2).unwrap();
        let again = parse(&e.to_string(), 2).unwrap();
        let (a, b) = (evaluate(&e, &x).unwrap(), evaluate(&again, &x).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn expansion_matches_evaluation(idx in 1usize..3, x in vector(2)) {
        let e = parse(EXPRESSIONS[idx], 2).unwrap();
        let p = expand_polynomial(&e, 2).unwrap();
        let (a, b) = (evaluate(&e, &x).unwrap(), p.eval(&x));
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }
}

#[test]
fn lifted_dimension_beats_the_lower_bound() {
    assert_eq!(lifted_dimension(2, 2), 5);
    assert_eq!(lifted_dimension(3, 2), 9);
    for n in 3..=5 {
        for d in 3..=6usize {
            let big_n = lifted_dimension(n, d.div_ceil(2));
            assert_eq!(big_n, monomial_basis(n, d).unwrap().len());
            assert!(big_n < binomial(n + d - 1, d), "n={n} d={d}");
        }
    }
}
