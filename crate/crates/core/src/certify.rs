//! S-procedure certificates: `min_{τ ≥ 0} λ_max(Q − Σ τ_j S_j)`.
//!
//! A value `≤ 0` proves `{S_j ≤ 0 ∀j} ⊆ {Q ≤ 0}` on the homogenized
//! coordinates `(x, 1)`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{SymMat, DEGENERACY_TOL};
use crate::model::HomForm;

/// Consecutive non-improving iterations before the Polyak target is relaxed.
const STALL_LIMIT: usize = 25;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Scale-relative certification slack: certified iff `r ≤ eps_cert·(1+‖Q‖_F)`.
    pub eps_cert: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Stop as soon as the certification threshold is reached instead of
    /// continuing towards the minimum.
    pub early_exit: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { eps_cert: 1e-9, max_iters: 2000, seed: 0, early_exit: false }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_cert > 0.0) || !self.eps_cert.is_finite() {
            return Err(Error::InvalidConstraint(alloc::format!(
                "eps_cert must be positive, got {}",
                self.eps_cert
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConstraint(alloc::string::String::from("max_iters must be at least 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateStatus {
    Certified,
    NotCertified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub status: CertificateStatus,
    /// Best `λ_max(Q − Σ τ_j S_j)` found; an upper bound on the true minimum.
    pub value: f64,
    pub weights: Vec<f64>,
    pub iterations: usize,
}

impl Certificate {
    pub fn is_certified(&self) -> bool {
        self.status == CertificateStatus::Certified
    }
}

/// `eps_cert·(1 + ‖Q‖_F)`.
pub fn certification_threshold(q: &HomForm, eps_cert: f64) -> f64 {
    eps_cert * (1.0 + q.mat().frobenius_norm())
}

fn check_dims(q: &HomForm, s: &[&HomForm]) -> Result<()> {
    let n = q.mat().dim();
    for f in s {
        if f.mat().dim() != n {
            return Err(Error::DimensionMismatch { expected: n, found: f.mat().dim() });
        }
    }
    Ok(())
}

fn combination(q: &HomForm, s: &[&HomForm], tau: &[f64]) -> DMatrix<f64> {
    let mut m = q.mat().as_matrix().clone();
    for (f, &t) in s.iter().zip(tau) {
        if t != 0.0 {
            m -= f.mat().as_matrix() * t;
        }
    }
    m
}

/// `λ_max(Q − Σ τ_j S_j)`.
pub fn evaluate_r(q: &HomForm, s: &[HomForm], tau: &[f64]) -> Result<f64> {
    let refs: Vec<&HomForm> = s.iter().collect();
    evaluate_r_refs(q, &refs, tau)
}

pub fn evaluate_r_refs(q: &HomForm, s: &[&HomForm], tau: &[f64]) -> Result<f64> {
    if tau.len() != s.len() {
        return Err(Error::DimensionMismatch { expected: s.len(), found: tau.len() });
    }
    check_dims(q, s)?;
    let m = SymMat::symmetrize(combination(q, s, tau));
    Ok(m.eigen().eigenvalues.max())
}

/// Objective value and a subgradient, averaged over the top eigenspace when
/// it is degenerate. `plain` receives the subgradient of the single top
/// eigenvector, used when the average cancels out.
fn value_and_subgradient(q: &HomForm, s: &[&HomForm], tau: &[f64], grad: &mut [f64], plain: &mut [f64]) -> f64 {
    let m = SymMat::symmetrize(combination(q, s, tau));
    let eig = m.eigen();
    let (imax, top) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, v)| if v > b.1 { (i, v) } else { b });
    let cols: Vec<usize> =
        (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] >= top - DEGENERACY_TOL).collect();
    let w = 1.0 / cols.len() as f64;
    let curvature = |c: usize, f: &HomForm| {
        let v = eig.eigenvectors.column(c);
        v.dot(&(f.mat().as_matrix() * v))
    };
    for ((g, p), f) in grad.iter_mut().zip(plain.iter_mut()).zip(s) {
        *g = -w * cols.iter().map(|&c| curvature(c, f)).sum::<f64>();
        *p = -curvature(imax, f);
    }
    top
}

/// Zeroes components that would push a coordinate pinned at zero outwards; returns the squared norm.
fn project(grad: &mut [f64], tau: &[f64]) -> f64 {
    let mut gn = 0.0;
    for (g, &t) in grad.iter_mut().zip(tau) {
        if t <= 0.0 && *g > 0.0 {
            *g = 0.0;
        }
        gn += *g * *g;
    }
    gn
}

/// Projected subgradient with Polyak steps towards an adaptive target and
/// seeded restarts from the incumbent.
pub fn solve_certificate(q: &HomForm, s: &[HomForm], opts: &SolverOptions) -> Result<Certificate> {
    let refs: Vec<&HomForm> = s.iter().collect();
    solve_certificate_refs(q, &refs, opts)
}

pub fn solve_certificate_refs(q: &HomForm, s: &[&HomForm], opts: &SolverOptions) -> Result<Certificate> {
    opts.validate()?;
    check_dims(q, s)?;
    let m = s.len();
    let threshold = certification_threshold(q, opts.eps_cert);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut tau = vec![0.0; m];
    let mut grad = vec![0.0; m];
    let mut plain = vec![0.0; m];
    let mut f = value_and_subgradient(q, s, &tau, &mut grad, &mut plain);
    let mut best = f;
    let mut best_tau = tau.clone();
    let finish = |value: f64, weights: Vec<f64>, iterations: usize| Certificate {
        status: if value <= threshold { CertificateStatus::Certified } else { CertificateStatus::NotCertified },
        value,
        weights,
        iterations,
    };
    if m == 0 || (opts.early_exit && best <= threshold) {
        return Ok(finish(best, best_tau, 0));
    }

    let mut delta = 0.5 * f64::max(best.abs(), 1.0);
    let mut stall = 0;
    let mut restarts = 0usize;
    let mut iters = 0;
    while iters < opts.max_iters {
        iters += 1;
        let mut gn = project(&mut grad, &tau);
        if gn < 1e-30 {
            grad.copy_from_slice(&plain);
            gn = project(&mut grad, &tau);
            if gn < 1e-30 {
                break;
            }
        }
        let mut target = best - delta;
        if opts.early_exit {
            target = target.min(-threshold);
        }
        let step = (f - target) / gn;
        for (t, g) in tau.iter_mut().zip(&grad) {
            *t = (*t - step * g).max(0.0);
        }
        f = value_and_subgradient(q, s, &tau, &mut grad, &mut plain);
        if f < best - 1e-14 * (1.0 + best.abs()) {
            if best - f >= 0.5 * delta {
                delta *= 1.5;
            }
            best = f;
            best_tau.copy_from_slice(&tau);
            stall = 0;
            if opts.early_exit && best <= threshold {
                break;
            }
        } else {
            stall += 1;
        }
        if stall >= STALL_LIMIT {
            delta *= 0.5;
            stall = 0;
            restarts += 1;
            tau.copy_from_slice(&best_tau);
            if restarts.is_multiple_of(4) {
                let scale = 1e-3 * (1.0 + tau.iter().fold(0.0f64, |a, &b| a.max(b)));
                for t in tau.iter_mut() {
                    *t = (*t + scale * rng.random_range(-1.0..1.0)).max(0.0);
                }
            }
            f = value_and_subgradient(q, s, &tau, &mut grad, &mut plain);
            if delta < 1e-13 * (1.0 + best.abs()) {
                break;
            }
        }
    }
    if best > threshold {
        let polished = barrier_polish(q, s, &best_tau, threshold, opts.early_exit);
        iters += polished.steps;
        if polished.value < best {
            best = polished.value;
            best_tau = polished.tau;
        }
    }
    Ok(finish(best, best_tau, iters))
}

struct Polished {
    value: f64,
    tau: Vec<f64>,
    steps: usize,
}

/// Interior-point refinement of `min t s.t. tI − Q + Σ τ_j S_j ⪰ 0, τ ≥ 0`.
///
/// Path-following on `σ·t − log det Z − Σ log τ_j − log(T − Σ τ_j)` with
/// damped Newton steps. The cap `T` keeps the barrier bounded when some
/// combination of the `S_j` is definite. Stops once the target is certified
/// (early exit), once the duality-gap bound shows it cannot be, or when the
/// gap falls below a tenth of the threshold.
fn barrier_polish(q: &HomForm, s: &[&HomForm], start: &[f64], threshold: f64, early_exit: bool) -> Polished {
    const GROWTH: f64 = 8.0;
    const MAX_CENTERING: usize = 60;
    const MAX_STEPS: usize = 600;
    let d = q.mat().dim();
    let m = s.len();
    let mut tau: Vec<f64> = start.iter().map(|&t| t.max(0.0) + 1.0 / m as f64).collect();
    let cap = 1e6 * (1.0 + tau.iter().sum::<f64>());
    let mut t = evaluate_unchecked(q, s, &tau) + 1.0;
    let mut best = Polished { value: f64::INFINITY, tau: tau.clone(), steps: 0 };
    let nu = (d + m + 1) as f64;
    let mut sigma = nu / (1.0 + t.abs());
    let mut steps = 0;

    let barrier = |t: f64, tau: &[f64], sigma: f64| -> Option<f64> {
        let total: f64 = tau.iter().sum();
        if tau.iter().any(|&x| x <= 0.0) || total >= cap {
            return None;
        }
        let mut z = -combination(q, s, tau);
        for i in 0..d {
            z[(i, i)] += t;
        }
        let chol = z.cholesky()?;
        let logdet: f64 = (0..d).map(|i| 2.0 * libm::log(chol.l_dirty()[(i, i)])).sum();
        Some(sigma * t - logdet - tau.iter().map(|&x| libm::log(x)).sum::<f64>() - libm::log(cap - total))
    };

    'outer: while steps < MAX_STEPS {
        for _ in 0..MAX_CENTERING {
            let Some(phi) = barrier(t, &tau, sigma) else { break 'outer };
            let mut z = -combination(q, s, &tau);
            for i in 0..d {
                z[(i, i)] += t;
            }
            let Some(w) = z.cholesky().map(|c| c.inverse()) else { break 'outer };
            let ws: Vec<DMatrix<f64>> = s.iter().map(|f| &w * f.mat().as_matrix()).collect();
            let slack = cap - tau.iter().sum::<f64>();
            let mut grad = vec![0.0; m + 1];
            let mut hess = DMatrix::zeros(m + 1, m + 1);
            grad[0] = sigma - w.trace();
            hess[(0, 0)] = (&w * &w).trace();
            for j in 0..m {
                grad[j + 1] = -ws[j].trace() - 1.0 / tau[j] + 1.0 / slack;
                let wws = &w * &ws[j];
                hess[(0, j + 1)] = wws.trace();
                hess[(j + 1, 0)] = hess[(0, j + 1)];
                for k in 0..=j {
                    let h = ws[j].dot(&ws[k].transpose()) + 1.0 / (slack * slack);
                    hess[(j + 1, k + 1)] = h;
                    hess[(k + 1, j + 1)] = h;
                }
                hess[(j + 1, j + 1)] += 1.0 / (tau[j] * tau[j]);
            }
            let g = nalgebra::DVector::from_vec(grad);
            let dir = match hess.clone().cholesky() {
                Some(c) => c.solve(&(-&g)),
                None => {
                    let ridge = 1e-12 * (1.0 + hess.diagonal().amax());
                    match (hess + DMatrix::identity(m + 1, m + 1) * ridge).cholesky() {
                        Some(c) => c.solve(&(-&g)),
                        None => break 'outer,
                    }
                }
            };
            let decrement = -g.dot(&dir);
            if !(decrement > 1e-14) {
                break;
            }
            let mut alpha = 1.0;
            let accepted = loop {
                let nt = t + alpha * dir[0];
                let ntau: Vec<f64> = tau.iter().enumerate().map(|(j, &x)| x + alpha * dir[j + 1]).collect();
                if let Some(v) = barrier(nt, &ntau, sigma) {
                    if v <= phi - 0.25 * alpha * decrement {
                        t = nt;
                        tau = ntau;
                        break true;
                    }
                }
                alpha *= 0.5;
                if alpha < 1e-12 {
                    break false;
                }
            };
            steps += 1;
            if !accepted {
                break;
            }
            let value = evaluate_unchecked(q, s, &tau);
            if value < best.value {
                best.value = value;
                best.tau.copy_from_slice(&tau);
            }
            if (early_exit && best.value <= threshold) || steps >= MAX_STEPS {
                break 'outer;
            }
            if decrement < 1e-10 {
                break;
            }
        }
        let gap = nu / sigma;
        if t - gap > threshold || gap < 0.1 * threshold {
            break;
        }
        sigma *= GROWTH;
    }
    best.steps = steps;
    best
}

fn evaluate_unchecked(q: &HomForm, s: &[&HomForm], tau: &[f64]) -> f64 {
    SymMat::symmetrize(combination(q, s, tau)).eigen().eigenvalues.max()
}

/// Recomputes `λ_max(Q − Σ τ_j S_j)` from stored weights and checks the threshold.
pub fn recheck(q: &HomForm, s: &[&HomForm], weights: &[f64], eps_cert: f64) -> Result<bool> {
    if weights.iter().any(|&w| w < 0.0) {
        return Ok(false);
    }
    Ok(evaluate_r_refs(q, s, weights)? <= certification_threshold(q, eps_cert))
}

/// Result of a redundancy sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneOutcome {
    /// Indices of kept members, in input order.
    pub retained: Vec<usize>,
    /// Removed member, its certificate, and the family the certificate refers
    /// to (indices into the input first, then `fixed` offset by the input length).
    pub removed: Vec<(usize, Certificate, Vec<usize>)>,
}

/// Removes members certified by the rest, in insertion order.
pub fn prune_family(s: &[HomForm], opts: &SolverOptions) -> Result<PruneOutcome> {
    prune_family_against(s, &[], opts)
}

/// As [`prune_family`], with `fixed` forms always available as certifiers and never removed.
pub fn prune_family_against(s: &[HomForm], fixed: &[HomForm], opts: &SolverOptions) -> Result<PruneOutcome> {
    let refs: Vec<&HomForm> = s.iter().collect();
    let fixed_refs: Vec<&HomForm> = fixed.iter().collect();
    prune_refs(&refs, &fixed_refs, opts)
}

pub(crate) fn prune_refs(s: &[&HomForm], fixed: &[&HomForm], opts: &SolverOptions) -> Result<PruneOutcome> {
    let mut alive = vec![true; s.len()];
    let mut removed = Vec::new();
    for i in 0..s.len() {
        let family: Vec<usize> =
            (0..s.len()).filter(|&j| j != i && alive[j]).chain(s.len()..s.len() + fixed.len()).collect();
        if family.is_empty() {
            continue;
        }
        let forms: Vec<&HomForm> =
            family.iter().map(|&j| if j < s.len() { s[j] } else { fixed[j - s.len()] }).collect();
        let cert = solve_certificate_refs(s[i], &forms, opts)?;
        if cert.is_certified() {
            alive[i] = false;
            removed.push((i, cert, family));
        }
    }
    Ok(PruneOutcome { retained: (0..s.len()).filter(|&i| alive[i]).collect(), removed })
}

/// Solves many certificates against one family; lets callers plug in parallel execution.
pub trait BatchSolver: Sync {
    fn solve_batch(&self, targets: &[&HomForm], family: &[&HomForm], opts: &SolverOptions) -> Result<Vec<Certificate>>;
}

/// Solves targets one after another.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl BatchSolver for Sequential {
    fn solve_batch(&self, targets: &[&HomForm], family: &[&HomForm], opts: &SolverOptions) -> Result<Vec<Certificate>> {
        targets.iter().map(|t| solve_certificate_refs(t, family, opts)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(a: f64, b: f64) -> HomForm {
        HomForm::new(SymMat::from_row_slice(2, &[a, 0.0, 0.0, b]).unwrap())
    }

    #[test]
    fn evaluate_examples() {
        let q = diag(0.25, -1.0);
        assert!((evaluate_r(&q, &[diag(1.0, -1.0)], &[0.0]).unwrap() - 0.25).abs() < 1e-12);
        assert!((evaluate_r(&q, &[diag(1.0, -1.0)], &[0.625]).unwrap() + 0.375).abs() < 1e-12);
        assert!(evaluate_r(&q, core::slice::from_ref(&q), &[1.0]).unwrap().abs() < 1e-12);
        assert!(matches!(
            evaluate_r(&q, &[diag(1.0, -1.0)], &[]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn hom3(m: [f64; 9]) -> HomForm {
        HomForm::new(SymMat::from_row_slice(3, &m).unwrap())
    }

    #[test]
    fn nearly_tangent_half_plane() {
        // 0.499·(x1 + x2) ≤ 1 on the unit box cut by ‖x‖² ≤ 4; the margin at (1, 1) is 2e-3.
        let x1 = hom3([0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.5, 0.0, -1.0]);
        let x2 = hom3([0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.5, -1.0]);
        let ball = hom3([0.25, 0.0, 0.0, 0.0, 0.25, 0.0, 0.0, 0.0, -1.0]);
        let q = hom3([0.0, 0.0, 0.2495, 0.0, 0.0, 0.2495, 0.2495, 0.2495, -1.0]);
        let c = solve_certificate(&q, &[x1, x2, ball], &SolverOptions { early_exit: true, ..SolverOptions::default() })
            .unwrap();
        assert!(c.is_certified(), "{c:?}");
    }

    #[test]
    fn solve_examples() {
        let opts = SolverOptions::default();
        let c = solve_certificate(&diag(0.25, -1.0), &[diag(1.0, -1.0)], &opts).unwrap();
        assert!(c.is_certified());
        assert!((c.value + 0.375).abs() < 1e-6, "{c:?}");
        assert!((c.weights[0] - 0.625).abs() < 1e-5);

        let s = diag(1.0, -1.0);
        let c = solve_certificate(&s, core::slice::from_ref(&s), &opts).unwrap();
        assert!(c.is_certified(), "{c:?}");
        assert!(c.value.abs() < 1e-8);
        assert!((c.weights[0] - 1.0).abs() < 1e-6);

        let c = solve_certificate(&diag(4.0, -1.0), &[diag(1.0, -1.0)], &opts).unwrap();
        assert!(!c.is_certified());
        assert!((c.value - 1.5).abs() < 1e-6);
        assert!((c.weights[0] - 2.5).abs() < 1e-5);
    }

    #[test]
    fn early_exit_stops_at_threshold() {
        let opts = SolverOptions { early_exit: true, ..SolverOptions::default() };
        let c = solve_certificate(&diag(0.25, -1.0), &[diag(1.0, -1.0)], &opts).unwrap();
        assert!(c.is_certified());
        assert!(c.iterations < 10);
    }

    #[test]
    fn prune_examples() {
        let opts = SolverOptions::default();
        let base = diag(1.0, -1.0);
        let twice = HomForm::new(base.mat().scaled(2.0));
        let out = prune_family(&[base.clone(), twice], &opts).unwrap();
        assert_eq!(out.retained.len(), 1);

        let out = prune_family(core::slice::from_ref(&base), &opts).unwrap();
        assert_eq!(out.retained, vec![0]);

        let out = prune_family(&[base, diag(0.25, -1.0)], &opts).unwrap();
        assert_eq!(out.retained, vec![0]);
        assert_eq!(out.removed[0].0, 1);
    }
}
