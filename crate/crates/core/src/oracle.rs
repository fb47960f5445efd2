//! Brute-force checks and benchmark utilities that do not rely on certificates.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Matrix4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::certify::evaluate_r;
use crate::error::{Error, Result};
use crate::iterate::{membership, InvariantSetDescription};
use crate::linalg::{spectral_norm, spectral_radius, SymMat};
use crate::model::{Dynamics, HomForm, ProblemSpec, QuadraticConstraint, SystemModel};

pub const DEFAULT_JSR_DEPTH: usize = 8;

/// Upper limit on the number of products formed by [`jsr_upper_bound`].
const JSR_MAX_PRODUCTS: usize = 1 << 16;

const PRIMES: [u32; 24] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89];

/// Point `index` of the Halton sequence in `[0,1)^dim`.
pub fn halton_point(index: usize, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "Halton sequence supports up to {} dimensions", PRIMES.len());
    PRIMES[..dim]
        .iter()
        .map(|&b| {
            let (mut i, mut f, mut r) = (index, 1.0, 0.0);
            while i > 0 {
                f /= b as f64;
                r += f * (i % b as usize) as f64;
                i /= b as usize;
            }
            r
        })
        .collect()
}

/// States visited under `schedule` (modes in application order), starting with `x0`.
pub fn simulate(system: &Dynamics, x0: &[f64], schedule: &[usize]) -> Result<Vec<Vec<f64>>> {
    if x0.len() != system.n() {
        return Err(Error::DimensionMismatch { expected: system.n(), found: x0.len() });
    }
    let mut out = Vec::with_capacity(schedule.len() + 1);
    out.push(x0.to_vec());
    for &m in schedule {
        if m >= system.mode_count() {
            return Err(Error::DimensionMismatch { expected: system.mode_count(), found: m + 1 });
        }
        let next = system.step(m, out.last().expect("nonempty"))?;
        out.push(next);
    }
    Ok(out)
}

/// `steps` applications of the first mode.
pub fn simulate_steps(system: &Dynamics, x0: &[f64], steps: usize) -> Result<Vec<Vec<f64>>> {
    simulate(system, x0, &vec![0; steps])
}

/// A schedule of length `≤ k` whose orbit leaves `X`, if one exists.
pub fn escape_schedule(spec: &ProblemSpec, x: &[f64], k: usize, tol: f64) -> Result<Option<Vec<usize>>> {
    fn dfs(
        spec: &ProblemSpec,
        x: &[f64],
        left: usize,
        tol: f64,
        path: &mut Vec<usize>,
    ) -> Result<bool> {
        if !spec.contains(x, tol)? {
            return Ok(true);
        }
        if left == 0 {
            return Ok(false);
        }
        for m in 0..spec.system.mode_count() {
            let y = spec.system.step(m, x)?;
            path.push(m);
            if dfs(spec, &y, left - 1, tol, path)? {
                return Ok(true);
            }
            path.pop();
        }
        Ok(false)
    }
    let mut path = Vec::new();
    Ok(dfs(spec, x, k, tol, &mut path)?.then_some(path))
}

/// `A_w x ∈ X` for every word with `|w| ≤ k`.
pub fn orbit_admissible(spec: &ProblemSpec, x: &[f64], k: usize, tol: f64) -> Result<bool> {
    Ok(escape_schedule(spec, x, k, tol)?.is_none())
}

/// A regular grid over a box with one verdict per point; the first axis varies slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridScan {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub resolution: usize,
    pub verdicts: Vec<bool>,
}

impl GridScan {
    pub fn point_count(dim: usize, resolution: usize) -> usize {
        resolution.pow(dim as u32)
    }

    /// Coordinates of grid point `index`.
    pub fn point(lo: &[f64], hi: &[f64], resolution: usize, index: usize) -> Vec<f64> {
        let dim = lo.len();
        let mut coords = vec![0.0; dim];
        let mut rest = index;
        for axis in (0..dim).rev() {
            let i = rest % resolution;
            rest /= resolution;
            coords[axis] = if resolution <= 1 {
                lo[axis]
            } else {
                lo[axis] + (hi[axis] - lo[axis]) * i as f64 / (resolution - 1) as f64
            };
        }
        coords
    }

    pub fn points(&self) -> impl Iterator<Item = (Vec<f64>, bool)> + '_ {
        self.verdicts.iter().enumerate().map(|(i, &v)| (Self::point(&self.lo, &self.hi, self.resolution, i), v))
    }

    pub fn members(&self) -> usize {
        self.verdicts.iter().filter(|&&v| v).count()
    }
}

/// Membership verdict at every grid point.
pub fn grid_membership_scan(
    desc: &InvariantSetDescription,
    lo: &[f64],
    hi: &[f64],
    resolution: usize,
) -> Result<GridScan> {
    if lo.len() != desc.n() || hi.len() != desc.n() {
        return Err(Error::DimensionMismatch { expected: desc.n(), found: lo.len().max(hi.len()) });
    }
    let count = GridScan::point_count(lo.len(), resolution);
    let verdicts = (0..count)
        .map(|i| membership(desc, &GridScan::point(lo, hi, resolution, i)))
        .collect::<Result<Vec<bool>>>()?;
    Ok(GridScan { lo: lo.to_vec(), hi: hi.to_vec(), resolution, verdicts })
}

/// Minimum of `evaluate_r` over the grid `{0, h, …, tau_hi}^|S|` with `steps` points per axis.
pub fn brute_force_r(q: &HomForm, s: &[HomForm], tau_hi: f64, steps: usize) -> Result<f64> {
    if s.len() > 3 {
        return Err(Error::TooManyFamilyMembers { max: 3, found: s.len() });
    }
    let steps = steps.max(2);
    let total = steps.pow(s.len() as u32);
    let dim = q.mat().dim();
    if s.iter().any(|f| f.mat().dim() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, found: s.iter().map(|f| f.mat().dim()).max().unwrap_or(0) });
    }
    let mut best = f64::INFINITY;
    let mut tau = vec![0.0; s.len()];
    let grid = |rest: &mut usize, tau: &mut [f64]| {
        for t in tau.iter_mut() {
            *t = tau_hi * (*rest % steps) as f64 / (steps - 1) as f64;
            *rest /= steps;
        }
    };
    if dim <= 4 {
        // Fixed-size path: pad with a strongly negative diagonal that never
        // becomes the largest eigenvalue.
        let pad = |m: &DMatrix<f64>| {
            let mut out = Matrix4::from_diagonal_element(-1e12);
            out.view_mut((0, 0), (dim, dim)).copy_from(m);
            out
        };
        let q4 = pad(q.mat().as_matrix());
        let s4: Vec<Matrix4<f64>> = s.iter().map(|f| {
            let mut m = pad(f.mat().as_matrix());
            for i in dim..4 {
                m[(i, i)] = 0.0;
            }
            m
        }).collect();
        for idx in 0..total {
            let mut rest = idx;
            grid(&mut rest, &mut tau);
            let mut m = q4;
            for (f, &t) in s4.iter().zip(&tau) {
                m -= f * t;
            }
            best = best.min(m.symmetric_eigenvalues().max());
        }
        return Ok(best);
    }
    for idx in 0..total {
        let mut rest = idx;
        grid(&mut rest, &mut tau);
        best = best.min(evaluate_r(q, s, &tau)?);
    }
    Ok(best)
}

type Polygon = Vec<[f64; 2]>;

/// Keeps the part of a convex polygon with `c·x ≤ 1`.
fn clip(poly: &Polygon, c: [f64; 2]) -> Polygon {
    let val = |p: &[f64; 2]| c[0] * p[0] + c[1] * p[1] - 1.0;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        let (vp, vq) = (val(&p), val(&q));
        if vp <= 0.0 {
            out.push(p);
        }
        if (vp < 0.0 && vq > 0.0) || (vp > 0.0 && vq < 0.0) {
            let t = vp / (vp - vq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

/// `k_min` of the exact polyhedral recursion for linear constraints `2qᵀx ≤ 1`
/// in the plane: the first `k` with `O_{k+1} = O_k`.
pub fn polyhedral_mias_2d(constraints: &[QuadraticConstraint], a: &DMatrix<f64>) -> Result<usize> {
    const BIG: f64 = 1e6;
    const TOL: f64 = 1e-9;
    const K_LIMIT: usize = 10_000;
    if a.nrows() != 2 || a.ncols() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: a.nrows() });
    }
    let radius = spectral_radius(a);
    if radius >= 1.0 - 1e-9 {
        return Err(Error::Unstable { radius });
    }
    let mut normals = Vec::new();
    for c in constraints {
        if c.dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: c.dim() });
        }
        if !c.is_linear() {
            return Err(Error::InvalidConstraint(String::from("polyhedral baseline takes linear constraints only")));
        }
        normals.push(DVector::from_row_slice(&[2.0 * c.lin()[0], 2.0 * c.lin()[1]]));
    }
    let mut poly: Polygon = vec![[-BIG, -BIG], [BIG, -BIG], [BIG, BIG], [-BIG, BIG]];
    for c in &normals {
        poly = clip(&poly, [c[0], c[1]]);
    }
    if poly.iter().any(|p| p[0].abs() > BIG / 10.0 || p[1].abs() > BIG / 10.0) {
        return Err(Error::InvalidConstraint(String::from("linear constraints do not bound a polygon")));
    }
    let at = a.transpose();
    let mut current: Vec<DVector<f64>> = normals.clone();
    for k in 0..K_LIMIT {
        // Rows of C·A^{k+1}, as column vectors (A^{k+1})ᵀ c.
        current = current.iter().map(|c| &at * c).collect();
        let redundant = current
            .iter()
            .all(|c| poly.iter().all(|p| c[0] * p[0] + c[1] * p[1] <= 1.0 + TOL));
        if redundant {
            return Ok(k);
        }
        for c in &current {
            poly = clip(&poly, [c[0], c[1]]);
        }
        poly = snap_dedup(poly, TOL);
    }
    Err(Error::IterationBudgetExceeded { k_max: K_LIMIT })
}

/// Drops consecutive vertices closer than `tol`.
fn snap_dedup(poly: Polygon, tol: f64) -> Polygon {
    let mut out: Polygon = Vec::with_capacity(poly.len());
    for p in poly {
        if out.last().is_none_or(|q: &[f64; 2]| (q[0] - p[0]).abs() > tol || (q[1] - p[1]).abs() > tol) {
            out.push(p);
        }
    }
    while out.len() > 1 {
        let (f, l) = (out[0], out[out.len() - 1]);
        if (f[0] - l[0]).abs() <= tol && (f[1] - l[1]).abs() <= tol {
            out.pop();
        } else {
            break;
        }
    }
    out
}

/// `min_{k ≤ depth} max_{|w| = k} ‖A_w‖₂^{1/k}`, an upper bound on the joint spectral radius.
pub fn jsr_upper_bound(modes: &[DMatrix<f64>], depth: usize) -> f64 {
    if modes.is_empty() {
        return 0.0;
    }
    let m = modes.len();
    let mut products: Vec<DMatrix<f64>> = modes.to_vec();
    let mut best = f64::INFINITY;
    for k in 1..=depth.max(1) {
        let worst = products.iter().map(spectral_norm).fold(0.0, f64::max);
        best = best.min(libm::pow(worst, 1.0 / k as f64));
        if k == depth || products.len() * m > JSR_MAX_PRODUCTS || best == 0.0 {
            break;
        }
        products = products.iter().flat_map(|p| modes.iter().map(move |a| a * p)).collect();
    }
    best
}

/// Random two-mode switched instance: `A_i = Â_i / (ρ̂ + 0.1)` with `Â_i`
/// entries uniform in `[−1, 1]` and `ρ̂` the JSR bound, constrained by the
/// unit ball and two random quadratics (symmetric part of a uniform matrix,
/// uniform linear term).
pub fn random_instance_example3(n: usize, seed: u64) -> Result<ProblemSpec> {
    const EPSILON: f64 = 0.1;
    if n < 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform_matrix = |rng: &mut ChaCha8Rng| DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..=1.0));
    let raw = vec![uniform_matrix(&mut rng), uniform_matrix(&mut rng)];
    let rho = jsr_upper_bound(&raw, DEFAULT_JSR_DEPTH);
    let modes: Vec<DMatrix<f64>> = raw.iter().map(|a| a / (rho + EPSILON)).collect();
    let mut quad = vec![QuadraticConstraint::ball(n, 1.0)];
    for _ in 0..2 {
        let q = SymMat::symmetrize(uniform_matrix(&mut rng));
        let l = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
        quad.push(QuadraticConstraint::new(q, l)?);
    }
    Ok(ProblemSpec::linear(SystemModel::new(modes)?, quad))
}

/// Random certificate problem for [`brute_force_r`] comparisons: state
/// dimension 1 to 3, a family of one or two homogenized forms (the first
/// positive definite) and an indefinite target, all with `−1` in the corner.
pub fn random_certificate_instance(seed: u64) -> (HomForm, Vec<HomForm>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=3);
    let hom = |rng: &mut ChaCha8Rng, definite: bool| {
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let q = if definite { b.transpose() * &b + DMatrix::identity(n, n) * 0.2 } else { (&b + b.transpose()) * 0.5 };
        let mut m = DMatrix::zeros(n + 1, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(&q);
        for i in 0..n {
            let l = rng.random_range(-0.3..0.3);
            m[(i, n)] = l;
            m[(n, i)] = l;
        }
        m[(n, n)] = -1.0;
        HomForm::new(SymMat::symmetrize(m))
    };
    let size = rng.random_range(1..=2);
    let s: Vec<HomForm> = (0..size).map(|k| hom(&mut rng, k == 0)).collect();
    (hom(&mut rng, false), s)
}

/// Random planar instance for the polyhedral comparison: a bounded polygon
/// of 3 to 8 half-planes `2qᵀx ≤ 1` around the origin, a perturbed rotation
/// scaled to `‖A‖₂ ∈ [0.9, 0.99]`, and `dx` at 1.5 times the largest squared vertex norm.
pub fn random_polygon_instance(seed: u64) -> Result<ProblemSpec> {
    const TWO_PI: f64 = 2.0 * core::f64::consts::PI;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angles = loop {
        let m = rng.random_range(3..=8);
        let mut angles: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..TWO_PI)).collect();
        angles.sort_by(|a, b| a.total_cmp(b));
        let wrap = angles[0] + TWO_PI - angles[m - 1];
        let widest = angles.windows(2).map(|w| w[1] - w[0]).fold(wrap, f64::max);
        if widest < core::f64::consts::PI - 0.2 {
            break angles;
        }
    };
    let mut quad = Vec::with_capacity(angles.len());
    let mut poly: Polygon = vec![[-1e3, -1e3], [1e3, -1e3], [1e3, 1e3], [-1e3, 1e3]];
    for t in angles {
        let r = rng.random_range(0.2..2.0);
        let c = [libm::cos(t) / r, libm::sin(t) / r];
        poly = clip(&poly, c);
        quad.push(QuadraticConstraint::new(SymMat::zeros(2), DVector::from_row_slice(&[c[0] / 2.0, c[1] / 2.0]))?);
    }
    let a = loop {
        let t: f64 = rng.random_range(0.0..TWO_PI);
        let rot = DMatrix::from_row_slice(2, 2, &[libm::cos(t), -libm::sin(t), libm::sin(t), libm::cos(t)]);
        let raw = rot + DMatrix::from_fn(2, 2, |_, _| rng.random_range(-0.3..=0.3));
        let norm = spectral_norm(&raw);
        if norm > 1e-3 {
            break raw * (rng.random_range(0.9..0.99) / norm);
        }
    };
    let far = poly.iter().map(|p| p[0] * p[0] + p[1] * p[1]).fold(0.0, f64::max);
    Ok(ProblemSpec::linear(SystemModel::single(a)?, quad).with_dx(1.5 * far))
}
