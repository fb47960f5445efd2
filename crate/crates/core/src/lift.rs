//! Polynomial constraints through monomial lifting.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::certify::{BatchSolver, Sequential};
use crate::error::{Error, Result};
use crate::expr::{expand_polynomial, Expr};
use crate::iterate::{run_engine, Coordinates, InvariantSetDescription, IterateOptions, Working};
use crate::linalg::SymMat;
use crate::model::{validate_problem, Dynamics, ProblemSpec, QuadraticConstraint, SystemModel};
use crate::poly::{monomial_value, total_degree, MultiIndex, Polynomial};

/// `H(x) ≤ 1` for a polynomial `H` without constant term.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialConstraint {
    poly: Polynomial,
}

impl PolynomialConstraint {
    /// `p(x) ≤ rhs`, normalized to `(p − p(0)) / (rhs − p(0)) ≤ 1`.
    pub fn new(p: Polynomial, rhs: f64) -> Result<Self> {
        let c = p.constant_term();
        let slack = rhs - c;
        if !(slack > 0.0) || !slack.is_finite() {
            return Err(Error::InvalidConstraint(alloc::format!(
                "polynomial constraint needs rhs − p(0) > 0, got {slack}"
            )));
        }
        let mut out = Polynomial::zero(p.nvars());
        for (e, v) in p.terms() {
            if total_degree(e) > 0 {
                out.add_term(e.clone(), v / slack);
            }
        }
        if out.is_zero() {
            return Err(Error::InvalidConstraint(String::from("polynomial constraint is constant")));
        }
        Ok(Self { poly: out })
    }

    pub fn from_expr(e: &Expr, n: usize, rhs: f64) -> Result<Self> {
        Self::new(expand_polynomial(e, n)?, rhs)
    }

    pub fn polynomial(&self) -> &Polynomial {
        &self.poly
    }

    pub fn nvars(&self) -> usize {
        self.poly.nvars()
    }

    pub fn degree(&self) -> usize {
        self.poly.degree()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.poly.eval(x)
    }

    pub fn negated(&self) -> Polynomial {
        self.poly.scale(-1.0)
    }

    /// The same constraint as `xᵀQx + 2qᵀx ≤ 1`; only for degree ≤ 2.
    pub fn to_quadratic(&self) -> Result<QuadraticConstraint> {
        let n = self.nvars();
        if self.degree() > 2 {
            return Err(Error::InvalidConstraint(String::from("polynomial has degree above 2")));
        }
        let mut q = DMatrix::zeros(n, n);
        let mut l = DVector::zeros(n);
        for (e, c) in self.poly.terms() {
            let nz: Vec<usize> = (0..n).filter(|&i| e[i] > 0).collect();
            match (total_degree(e), nz.as_slice()) {
                (1, [i]) => l[*i] += c / 2.0,
                (2, [i]) => q[(*i, *i)] += c,
                (2, [i, j]) => {
                    q[(*i, *j)] += c / 2.0;
                    q[(*j, *i)] += c / 2.0;
                }
                _ => unreachable!("degree checked above"),
            }
        }
        QuadraticConstraint::new(SymMat::symmetrize(q), l)
    }
}

/// Monomials of total degree `1..=dbar` in `n` variables.
///
/// Graded, lexicographic within a grade, except that `n = 2` grade 2 is
/// ordered `(x1·x2, x1², x2²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialBasis {
    n: usize,
    dbar: usize,
    monomials: Vec<MultiIndex>,
}

fn grade_monomials(n: usize, g: usize) -> Vec<MultiIndex> {
    fn rec(n: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
        if prefix.len() == n - 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=left).rev() {
            prefix.push(e);
            rec(n, left - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, g as u32, &mut Vec::new(), &mut out);
    if n == 2 && g == 2 {
        out.swap(0, 1);
    }
    out
}

/// `C(n, k)`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// `N = Σ_{ℓ=1}^{dbar} C(n+ℓ−1, ℓ)`.
pub fn lifted_dimension(n: usize, dbar: usize) -> usize {
    (1..=dbar).map(|l| binomial(n + l - 1, l)).sum()
}

impl MonomialBasis {
    /// Basis of every monomial with grade `1..=dbar`.
    pub fn with_grade(n: usize, dbar: usize) -> Self {
        let monomials = (1..=dbar).flat_map(|g| grade_monomials(n, g)).collect();
        Self { n, dbar, monomials }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dbar(&self) -> usize {
        self.dbar
    }

    /// Lifted dimension `N`.
    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomials(&self) -> &[MultiIndex] {
        &self.monomials
    }

    pub fn position(&self, e: &[u32]) -> Option<usize> {
        self.monomials.iter().position(|m| m.as_slice() == e)
    }

    /// `z = (x^[1], …, x^[dbar])`.
    pub fn lift(&self, x: &[f64]) -> Vec<f64> {
        self.monomials.iter().map(|e| monomial_value(e, x)).collect()
    }
}

/// Basis for polynomial degree `d`: grades up to `ceil(d/2)`.
pub fn monomial_basis(n: usize, d: usize) -> Result<MonomialBasis> {
    if d < 3 {
        return Err(Error::DegreeTooSmall { degree: d });
    }
    if n == 0 {
        return Err(Error::DimensionMismatch { expected: 1, found: 0 });
    }
    Ok(MonomialBasis::with_grade(n, d.div_ceil(2)))
}

pub fn lift_vector(x: &[f64], basis: &MonomialBasis) -> Vec<f64> {
    basis.lift(x)
}

/// `Ã` with `lift(Ax) = Ã·lift(x)`; row `α` holds the coefficients of `(Ax)^α`.
pub fn lift_map(a: &DMatrix<f64>, basis: &MonomialBasis) -> DMatrix<f64> {
    let n = basis.n();
    let rows: Vec<Polynomial> = (0..n).map(|i| Polynomial::linear(a.row(i).transpose().as_slice())).collect();
    let big_n = basis.len();
    let mut out = DMatrix::zeros(big_n, big_n);
    for (r, alpha) in basis.monomials().iter().enumerate() {
        let mut p = Polynomial::constant(n, 1.0);
        for (i, &k) in alpha.iter().enumerate() {
            if k > 0 {
                p = p.mul(&rows[i].pow(k));
            }
        }
        for (e, c) in p.terms() {
            let col = basis.position(e).expect("lifted monomials are homogeneous of the row's grade");
            out[(r, col)] = c;
        }
    }
    out
}

/// `H(x) = zᵀPz + 2Fᵀx`.
///
/// Each term of degree `m ≥ 2` is split as `a·b` with `a` the first basis
/// monomial of grade `max(1, m − dbar)` dividing it; linear terms go to `F`.
pub fn polynomial_to_quadratic(
    poly: &PolynomialConstraint,
    basis: &MonomialBasis,
) -> Result<(SymMat, DVector<f64>)> {
    let d = poly.degree();
    let dbar = basis.dbar();
    if d > 2 * dbar {
        return Err(Error::DegreeExceedsBasis { degree: d, dbar });
    }
    let n = basis.n();
    if poly.nvars() != n {
        return Err(Error::DimensionMismatch { expected: n, found: poly.nvars() });
    }
    let big_n = basis.len();
    let mut p = DMatrix::zeros(big_n, big_n);
    let mut f = DVector::zeros(n);
    for (e, c) in poly.polynomial().terms() {
        let m = total_degree(e);
        if m == 1 {
            let i = e.iter().position(|&k| k == 1).expect("degree one term");
            f[i] += c / 2.0;
            continue;
        }
        let ga = core::cmp::max(1, m.saturating_sub(dbar));
        let (a, quotient) = basis
            .monomials()
            .iter()
            .enumerate()
            .filter(|(_, mono)| total_degree(mono) == ga)
            .find_map(|(ia, mono)| {
                let divides = mono.iter().zip(e.iter()).all(|(x, y)| x <= y);
                divides.then(|| (ia, e.iter().zip(mono.iter()).map(|(y, x)| y - x).collect::<Vec<u32>>()))
            })
            .expect("some variable of the term divides it");
        let b = basis.position(&quotient).expect("quotient grade is within the basis");
        if a == b {
            p[(a, a)] += c;
        } else {
            p[(a, b)] += c / 2.0;
            p[(b, a)] += c / 2.0;
        }
    }
    Ok((SymMat::symmetrize(p), f))
}

/// The lifted linear problem in `z`.
#[derive(Debug, Clone)]
pub struct LiftedProblem {
    pub tilde_a: SystemModel,
    pub constraints: Vec<QuadraticConstraint>,
    pub basis: MonomialBasis,
    pub dz: f64,
}

/// `[I_n 0]ᵀ Q [I_n 0]` and `(q, 0)`.
fn embed(c: &QuadraticConstraint, big_n: usize) -> QuadraticConstraint {
    let n = c.dim();
    let mut q = DMatrix::zeros(big_n, big_n);
    q.view_mut((0, 0), (n, n)).copy_from(c.quad().as_matrix());
    let mut l = DVector::zeros(big_n);
    l.rows_mut(0, n).copy_from(c.lin());
    QuadraticConstraint::new(SymMat::symmetrize(q), l).expect("embedding preserves dimensions")
}

/// Embedded originals, rewritten polynomials, then `‖z‖² ≤ dz` with `dz = Σ_{ℓ=1}^{dbar} dxˡ`.
pub fn build_lifted_problem(
    system: &SystemModel,
    quad: &[QuadraticConstraint],
    polys: &[PolynomialConstraint],
    dx: Option<f64>,
) -> Result<LiftedProblem> {
    if system.mode_count() != 1 {
        return Err(Error::Unsupported(String::from("lifting is implemented for single-mode systems")));
    }
    let dx = dx.ok_or(Error::MissingBallBound)?;
    if !(dx > 0.0) || !dx.is_finite() {
        return Err(Error::InvalidBallBound { dx, reason: String::from("must be positive and finite") });
    }
    let n = system.n();
    let d = polys.iter().map(PolynomialConstraint::degree).max().unwrap_or(0);
    let basis = monomial_basis(n, d)?;
    let big_n = basis.len();
    let tilde_a = SystemModel::single(lift_map(&system.modes()[0], &basis))?;

    let mut constraints: Vec<QuadraticConstraint> = quad.iter().map(|c| embed(c, big_n)).collect();
    for p in polys {
        let (pm, f) = polynomial_to_quadratic(p, &basis)?;
        let mut l = DVector::zeros(big_n);
        l.rows_mut(0, n).copy_from(&f);
        constraints.push(QuadraticConstraint::new(pm, l)?);
    }
    let dz: f64 = (1..=basis.dbar()).map(|l| libm::pow(dx, l as f64)).sum();
    constraints.push(QuadraticConstraint::ball(big_n, dz));
    Ok(LiftedProblem { tilde_a, constraints, basis, dz })
}

/// Algorithm 1 on the lifted problem; membership lifts `x` first.
pub fn run_lifted(spec: &ProblemSpec, opts: &IterateOptions) -> Result<InvariantSetDescription> {
    run_lifted_with(spec, opts, &Sequential)
}

pub fn run_lifted_with(
    spec: &ProblemSpec,
    opts: &IterateOptions,
    backend: &dyn BatchSolver,
) -> Result<InvariantSetDescription> {
    if !spec.quasi.is_empty() {
        return Err(Error::Unsupported(String::from("polynomial and quasi-smooth constraints cannot be combined")));
    }
    let Dynamics::Linear(system) = &spec.system else {
        return Err(Error::Unsupported(String::from("polynomial constraints are not supported on transformed systems")));
    };
    let stability = validate_problem(spec)?;
    let dx = spec.dx.or_else(|| spec.bounding_radius().map(|r| r * r));
    let lifted = build_lifted_problem(system, &spec.quad, &spec.poly, dx)?;
    let work = Working {
        system: lifted.tilde_a,
        quad: lifted.constraints,
        quasi: vec![],
        coordinates: Coordinates::Lift(lifted.basis),
    };
    run_engine(work, spec.clone(), stability, opts, backend)
}
