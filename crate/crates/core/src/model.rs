//! Problem data: systems, constraints, homogenization and assumption checks.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::{evaluate, Expr};
use crate::lift::PolynomialConstraint;
use crate::linalg::{spectral_radius, SymMat};
use crate::oracle::{halton_point, jsr_upper_bound, DEFAULT_JSR_DEPTH};

/// Minimum eigenvalue above which a constraint matrix counts as positive definite.
pub const PD_THRESHOLD: f64 = 1e-10;

/// Number of quasi-random samples used to validate envelopes, transforms and `dx`.
pub const VALIDATION_SAMPLES: usize = 256;

/// `xᵀQx + 2qᵀx ≤ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticConstraint {
    quad: SymMat,
    lin: DVector<f64>,
}

impl QuadraticConstraint {
    pub fn new(quad: SymMat, lin: DVector<f64>) -> Result<Self> {
        if quad.dim() != lin.len() {
            return Err(Error::DimensionMismatch { expected: quad.dim(), found: lin.len() });
        }
        Ok(Self { quad, lin })
    }

    /// `xᵀQx + 2qᵀx ≤ rhs`, rescaled to unit right-hand side.
    pub fn with_rhs(quad: SymMat, lin: DVector<f64>, rhs: f64) -> Result<Self> {
        if !(rhs > 0.0) || !rhs.is_finite() {
            return Err(Error::InvalidConstraint(format!(
                "right-hand side must be positive and finite, got {rhs}"
            )));
        }
        Self::new(quad.scaled(1.0 / rhs), lin / rhs)
    }

    /// `‖x‖² ≤ dx`.
    pub fn ball(n: usize, dx: f64) -> Self {
        Self { quad: SymMat::identity(n).scaled(1.0 / dx), lin: DVector::zeros(n) }
    }

    pub fn dim(&self) -> usize {
        self.lin.len()
    }

    pub fn quad(&self) -> &SymMat {
        &self.quad
    }

    pub fn lin(&self) -> &DVector<f64> {
        &self.lin
    }

    /// `xᵀQx + 2qᵀx`.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.quad.quad_form(x) + 2.0 * self.lin.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.quad.min_eigenvalue() > PD_THRESHOLD
    }

    pub fn is_linear(&self) -> bool {
        self.quad.as_matrix().amax() == 0.0
    }
}

/// A homogenized quadratic inequality `(x,1)ᵀ M (x,1) ≤ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct HomForm(SymMat);

impl HomForm {
    pub fn new(mat: SymMat) -> Self {
        HomForm(mat)
    }

    pub fn mat(&self) -> &SymMat {
        &self.0
    }

    /// Dimension of the underlying state space (matrix dimension minus one).
    pub fn state_dim(&self) -> usize {
        self.0.dim() - 1
    }

    /// `(x,1)ᵀ M (x,1)`.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        let m = self.0.as_matrix();
        let n = x.len();
        debug_assert_eq!(n + 1, m.nrows());
        let mut acc = m[(n, n)];
        for i in 0..n {
            acc += 2.0 * m[(i, n)] * x[i];
            let mut row = 0.0;
            for j in 0..n {
                row += m[(i, j)] * x[j];
            }
            acc += x[i] * row;
        }
        acc
    }

    /// `Āᵀ M Ā` for an augmented mode matrix `Ā`.
    pub fn pullback(&self, augmented: &DMatrix<f64>) -> HomForm {
        HomForm(self.0.congruence(augmented))
    }
}

/// A scalar function of the state.
#[derive(Clone)]
pub enum ScalarField {
    Expr(Expr),
    Callback(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl ScalarField {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            ScalarField::Expr(e) => Ok(evaluate(e, x)?),
            ScalarField::Callback(f) => Ok(f(x)),
        }
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Expr(e) => write!(f, "Expr({e})"),
            ScalarField::Callback(_) => f.write_str("Callback(..)"),
        }
    }
}

/// `H(x) ≤ 1` where `|H(x) − H(0) − gᵀx| ≤ (L/2)‖x‖²` on the quadratic set.
///
/// `H` is `field + offset`; the offset carries a non-unit right-hand side.
#[derive(Debug, Clone)]
pub struct QuasiSmoothConstraint {
    pub field: ScalarField,
    pub offset: f64,
    pub h0: f64,
    pub grad0: DVector<f64>,
    pub lipschitz: f64,
}

impl QuasiSmoothConstraint {
    pub fn new(field: ScalarField, h0: f64, grad0: DVector<f64>, lipschitz: f64) -> Result<Self> {
        if !(lipschitz >= 0.0) || !lipschitz.is_finite() {
            return Err(Error::InvalidConstraint(format!(
                "envelope constant L must be finite and nonnegative, got {lipschitz}"
            )));
        }
        Ok(Self { field, offset: 0.0, h0, grad0, lipschitz })
    }

    /// `field(x) ≤ rhs` with `field(0) = h0`, shifted to `field − rhs + 1 ≤ 1`.
    pub fn with_rhs(field: ScalarField, h0: f64, grad0: DVector<f64>, lipschitz: f64, rhs: f64) -> Result<Self> {
        if !rhs.is_finite() {
            return Err(Error::InvalidConstraint(format!("right-hand side must be finite, got {rhs}")));
        }
        let mut c = Self::new(field, h0, grad0, lipschitz)?;
        c.offset = 1.0 - rhs;
        c.h0 += c.offset;
        Ok(c)
    }

    pub fn dim(&self) -> usize {
        self.grad0.len()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(self.field.eval(x)? + self.offset)
    }
}

/// The mode matrices of a (possibly switched) linear system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    modes: Vec<DMatrix<f64>>,
}

impl SystemModel {
    pub fn new(modes: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = modes
            .first()
            .ok_or_else(|| Error::InvalidConstraint(String::from("system needs at least one mode")))?;
        let n = first.nrows();
        if n == 0 {
            return Err(Error::InvalidConstraint(String::from("state dimension must be positive")));
        }
        for m in &modes {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch { expected: n, found: m.ncols().max(m.nrows()) });
            }
        }
        Ok(Self { modes })
    }

    pub fn single(a: DMatrix<f64>) -> Result<Self> {
        Self::new(alloc::vec![a])
    }

    pub fn modes(&self) -> &[DMatrix<f64>] {
        &self.modes
    }

    pub fn n(&self) -> usize {
        self.modes[0].nrows()
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn step(&self, mode: usize, x: &[f64]) -> Vec<f64> {
        let a = &self.modes[mode];
        (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum()).collect()
    }
}

/// A vector-valued map `ℝⁿ → ℝⁿ`.
#[derive(Clone)]
pub enum VectorField {
    Exprs(Vec<Expr>),
    Callback(Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>),
}

impl VectorField {
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            VectorField::Exprs(es) => es.iter().map(|e| Ok(evaluate(e, x)?)).collect(),
            VectorField::Callback(f) => Ok(f(x)),
        }
    }
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VectorField::Exprs(es) => f.debug_list().entries(es.iter().map(|e| format!("{e}"))).finish(),
            VectorField::Callback(_) => f.write_str("Callback(..)"),
        }
    }
}

/// Nonlinear dynamics `x⁺ = T⁻¹(A T(x))` linearized by a state transform `y = T(x)`.
#[derive(Debug, Clone)]
pub struct TransformedSystem {
    pub inner: SystemModel,
    pub forward: VectorField,
    pub inverse: VectorField,
}

impl TransformedSystem {
    pub fn new(inner: SystemModel, forward: VectorField, inverse: VectorField) -> Self {
        Self { inner, forward, inverse }
    }

    pub fn step(&self, mode: usize, x: &[f64]) -> Result<Vec<f64>> {
        let y = self.forward.eval(x)?;
        self.inverse.eval(&self.inner.step(mode, &y))
    }

    /// Sampled round-trip and origin checks.
    pub fn validate(&self, radius: f64) -> Result<()> {
        let n = self.inner.n();
        let t0 = self.forward.eval(&alloc::vec![0.0; n])?;
        if t0.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: t0.len() });
        }
        if norm(&t0) > 1e-12 {
            return Err(Error::InvalidTransform(format!("T(0) = {t0:?} is not the origin")));
        }
        for i in 0..VALIDATION_SAMPLES {
            let x: Vec<f64> = halton_point(i + 1, n).iter().map(|u| radius * (2.0 * u - 1.0)).collect();
            let back = self.inverse.eval(&self.forward.eval(&x)?)?;
            let err = norm(&back.iter().zip(&x).map(|(a, b)| a - b).collect::<Vec<_>>());
            if err > 1e-8 {
                return Err(Error::InvalidTransform(format!(
                    "round trip error {err:e} at sample {x:?}"
                )));
            }
        }
        Ok(())
    }
}

/// The system a problem is posed on.
#[derive(Debug, Clone)]
pub enum Dynamics {
    Linear(SystemModel),
    Transformed(TransformedSystem),
}

impl Dynamics {
    /// The linear system the certificates are computed for.
    pub fn linear_part(&self) -> &SystemModel {
        match self {
            Dynamics::Linear(s) => s,
            Dynamics::Transformed(t) => &t.inner,
        }
    }

    pub fn n(&self) -> usize {
        self.linear_part().n()
    }

    pub fn mode_count(&self) -> usize {
        self.linear_part().mode_count()
    }

    /// One step of the original-coordinate dynamics under `mode`.
    pub fn step(&self, mode: usize, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Dynamics::Linear(s) => Ok(s.step(mode, x)),
            Dynamics::Transformed(t) => t.step(mode, x),
        }
    }
}

/// A complete problem: dynamics and the constraint set `X = Ω ∩ Θ`.
///
/// For transformed systems the constraints are stated in the transformed
/// coordinates `y`.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub system: Dynamics,
    pub quad: Vec<QuadraticConstraint>,
    pub quasi: Vec<QuasiSmoothConstraint>,
    pub poly: Vec<PolynomialConstraint>,
    pub dx: Option<f64>,
}

impl ProblemSpec {
    pub fn linear(system: SystemModel, quad: Vec<QuadraticConstraint>) -> Self {
        Self { system: Dynamics::Linear(system), quad, quasi: Vec::new(), poly: Vec::new(), dx: None }
    }

    pub fn with_quasi(mut self, quasi: Vec<QuasiSmoothConstraint>) -> Self {
        self.quasi = quasi;
        self
    }

    pub fn with_poly(mut self, poly: Vec<PolynomialConstraint>) -> Self {
        self.poly = poly;
        self
    }

    pub fn with_dx(mut self, dx: f64) -> Self {
        self.dx = Some(dx);
        self
    }

    /// Dimension of the coordinates the constraints are written in.
    pub fn n(&self) -> usize {
        self.system.n()
    }

    /// Membership of `y` (constraint coordinates) in `X`, using the true
    /// nonlinear constraints.
    pub fn constraints_hold(&self, y: &[f64], tol: f64) -> Result<bool> {
        for c in &self.quad {
            if c.value(y) > 1.0 + tol {
                return Ok(false);
            }
        }
        for c in &self.poly {
            if c.eval(y) > 1.0 + tol {
                return Ok(false);
            }
        }
        for c in &self.quasi {
            if c.eval(y)? > 1.0 + tol {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Membership of an original-coordinate state `x` in `X`.
    pub fn contains(&self, x: &[f64], tol: f64) -> Result<bool> {
        match &self.system {
            Dynamics::Linear(_) => self.constraints_hold(x, tol),
            Dynamics::Transformed(t) => self.constraints_hold(&t.forward.eval(x)?, tol),
        }
    }

    /// Radius of a ball known to contain `Ω`, from `dx` or a positive definite constraint.
    pub fn bounding_radius(&self) -> Option<f64> {
        if let Some(dx) = self.dx {
            return Some(libm::sqrt(dx));
        }
        self.quad.iter().filter_map(ellipsoid_radius).fold(None, |acc, r| match acc {
            None => Some(r),
            Some(a) => Some(f64::min(a, r)),
        })
    }
}

/// `[[Q, q], [qᵀ, −1]]`.
pub fn homogenize_quadratic(c: &QuadraticConstraint) -> HomForm {
    let n = c.dim();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(c.quad().as_matrix());
    for i in 0..n {
        m[(i, n)] = c.lin()[i];
        m[(n, i)] = c.lin()[i];
    }
    m[(n, n)] = -1.0;
    HomForm(SymMat::symmetrize(m))
}

fn homogenize_envelope(c: &QuasiSmoothConstraint, curvature_sign: f64) -> HomForm {
    let n = c.dim();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    for i in 0..n {
        m[(i, i)] = curvature_sign * c.lipschitz / 2.0;
        m[(i, n)] = c.grad0[i] / 2.0;
        m[(n, i)] = c.grad0[i] / 2.0;
    }
    m[(n, n)] = c.h0 - 1.0;
    HomForm(SymMat::symmetrize(m))
}

/// Homogenized quadratic upper envelope of `H − 1`.
pub fn homogenize_upper(c: &QuasiSmoothConstraint) -> HomForm {
    homogenize_envelope(c, 1.0)
}

/// Homogenized quadratic lower envelope of `H − 1`.
pub fn homogenize_lower(c: &QuasiSmoothConstraint) -> HomForm {
    homogenize_envelope(c, -1.0)
}

/// `diag(A, 1)`.
pub fn augment_mode(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(a);
    m[(n, n)] = 1.0;
    m
}

/// Prepends the ball `‖x‖² ≤ dx` unless some constraint is already positive definite.
pub fn ensure_ball(n: usize, quad: &[QuadraticConstraint], dx: Option<f64>) -> Result<Vec<QuadraticConstraint>> {
    if quad.iter().any(QuadraticConstraint::is_positive_definite) {
        return Ok(quad.to_vec());
    }
    let dx = dx.ok_or(Error::MissingBallBound)?;
    if !(dx > 0.0) || !dx.is_finite() {
        return Err(Error::InvalidBallBound { dx, reason: String::from("must be positive and finite") });
    }
    let mut out = Vec::with_capacity(quad.len() + 1);
    out.push(QuadraticConstraint::ball(n, dx));
    out.extend_from_slice(quad);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum StabilityReport {
    /// Single mode with spectral radius below one.
    Schur { spectral_radius: f64 },
    /// Several modes; `proven` when the joint spectral radius bound is below one.
    Switched { jsr_bound: f64, proven: bool },
}

impl StabilityReport {
    pub fn warning(&self) -> Option<String> {
        match self {
            StabilityReport::Switched { jsr_bound, proven: false } => Some(format!(
                "joint spectral radius upper bound {jsr_bound:.6} is not below 1; stability under arbitrary switching is not proven"
            )),
            _ => None,
        }
    }
}

/// Schur stability check (single mode) or advisory JSR bound (several modes).
pub fn validate_system(s: &SystemModel) -> Result<StabilityReport> {
    if s.mode_count() == 1 {
        let radius = spectral_radius(&s.modes()[0]);
        if radius >= 1.0 - 1e-9 {
            return Err(Error::Unstable { radius });
        }
        Ok(StabilityReport::Schur { spectral_radius: radius })
    } else {
        let bound = jsr_upper_bound(s.modes(), DEFAULT_JSR_DEPTH);
        Ok(StabilityReport::Switched { jsr_bound: bound, proven: bound < 1.0 })
    }
}

/// Checks the standing assumptions of a problem before iterating:
/// stability, constraint dimensions, ball bound availability and validity,
/// quasi-smooth envelopes and the state transform.
pub fn validate_problem(spec: &ProblemSpec) -> Result<StabilityReport> {
    let n = spec.n();
    if spec.quad.is_empty() && spec.quasi.is_empty() && spec.poly.is_empty() {
        return Err(Error::InvalidConstraint(String::from("at least one constraint is required")));
    }
    for c in &spec.quad {
        if c.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, found: c.dim() });
        }
    }
    for c in &spec.quasi {
        if c.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, found: c.dim() });
        }
    }
    for c in &spec.poly {
        if c.nvars() != n {
            return Err(Error::DimensionMismatch { expected: n, found: c.nvars() });
        }
    }
    let report = validate_system(spec.system.linear_part())?;
    if !spec.quad.iter().any(QuadraticConstraint::is_positive_definite) && spec.dx.is_none() {
        return Err(Error::MissingBallBound);
    }
    let radius = spec.bounding_radius().ok_or(Error::MissingBallBound)?;
    if let Some(dx) = spec.dx {
        if !(dx > 0.0) || !dx.is_finite() {
            return Err(Error::InvalidBallBound { dx, reason: String::from("must be positive and finite") });
        }
    }

    // Samples from a box twice the claimed radius; any sample of X outside
    // the ball refutes dx.
    let samples: Vec<Vec<f64>> = (0..VALIDATION_SAMPLES)
        .map(|i| halton_point(i + 1, n).iter().map(|u| 2.0 * radius * (2.0 * u - 1.0)).collect())
        .collect();
    let in_ball = |x: &[f64]| spec.dx.is_none_or(|dx| x.iter().map(|v| v * v).sum::<f64>() <= dx);
    let in_omega = |x: &[f64]| in_ball(x) && spec.quad.iter().all(|c| c.value(x) <= 1.0);
    if let Some(dx) = spec.dx {
        let mut in_x = Vec::new();
        for x in &samples {
            if spec.constraints_hold(x, 0.0)? {
                in_x.push(x);
            }
        }
        for x in in_x {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            if r2 > dx * (1.0 + 1e-12) {
                return Err(Error::InvalidBallBound {
                    dx,
                    reason: format!("sample {x:?} of the constraint set has squared norm {r2}"),
                });
            }
        }
    }

    for (index, c) in spec.quasi.iter().enumerate() {
        let at0 = c.eval(&alloc::vec![0.0; n])?;
        if (at0 - c.h0).abs() > 1e-10 {
            return Err(Error::EnvelopeViolation {
                index,
                reason: format!("H(0) = {at0} but h0 = {}", c.h0),
            });
        }
        for x in samples.iter().filter(|x| in_omega(x)) {
            let h = c.eval(x)?;
            let lin: f64 = c.grad0.iter().zip(x.iter()).map(|(g, v)| g * v).sum();
            let r2: f64 = x.iter().map(|v| v * v).sum();
            let gap = (h - c.h0 - lin).abs();
            if gap > c.lipschitz / 2.0 * r2 + 1e-9 {
                return Err(Error::EnvelopeViolation {
                    index,
                    reason: format!("|H(x) − H(0) − gᵀx| = {gap} exceeds (L/2)‖x‖² = {} at {x:?}", c.lipschitz / 2.0 * r2),
                });
            }
        }
    }

    if let Dynamics::Transformed(t) = &spec.system {
        t.validate(radius)?;
    }
    Ok(report)
}

/// Radius of a ball containing `{x : xᵀQx + 2qᵀx ≤ 1}` when `Q ≻ 0`.
fn ellipsoid_radius(c: &QuadraticConstraint) -> Option<f64> {
    if !c.is_positive_definite() {
        return None;
    }
    let chol = c.quad().as_matrix().clone().cholesky()?;
    let center = chol.solve(c.lin());
    let slack = 1.0 + c.lin().dot(&center);
    let lmin = c.quad().min_eigenvalue();
    Some(center.norm() + libm::sqrt(slack / lmin))
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|a| a * a).sum())
}

/// Boxed callback helper for scalar constraints defined in code.
pub fn scalar_callback(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> ScalarField {
    ScalarField::Callback(Arc::new(f))
}

/// Boxed callback helper for vector maps defined in code.
pub fn vector_callback(f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> VectorField {
    VectorField::Callback(Arc::new(f))
}
