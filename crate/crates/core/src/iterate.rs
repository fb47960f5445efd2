//! Certificate families and the outer iteration loops.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::DMatrix;

use crate::certify::{prune_refs, BatchSolver, Certificate, CertificateStatus, Sequential, SolverOptions};
use crate::error::{Error, Result};
use crate::lift::{run_lifted_with, MonomialBasis};
use crate::linalg::dedup_key;
use crate::model::{
    augment_mode, ensure_ball, homogenize_lower, homogenize_quadratic, homogenize_upper, validate_problem, Dynamics,
    HomForm, ProblemSpec, QuadraticConstraint, QuasiSmoothConstraint, StabilityReport, SystemModel, VectorField,
};

/// Slack used by [`membership`].
pub const TOL_MEM: f64 = 1e-9;

/// Entry rounding used to detect duplicate forms.
pub const DEDUP_RESOLUTION: f64 = 1e-10;

pub const DEFAULT_K_MAX: usize = 200;

/// Mode indices, most recently applied first: `[i0, …, ik]` stands for `A_{i0}⋯A_{ik}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default, Hash)]
pub struct Word(pub Vec<usize>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    /// The word for "apply `mode` first, then `self`".
    pub fn then_after(&self, mode: usize) -> Word {
        let mut w = self.0.clone();
        w.push(mode);
        Word(w)
    }

    /// Modes in application order.
    pub fn schedule(&self) -> Vec<usize> {
        self.0.iter().rev().copied().collect()
    }

    /// `A_w x`.
    pub fn apply(&self, system: &SystemModel, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for &i in self.0.iter().rev() {
            y = system.step(i, &y);
        }
        y
    }

    /// All words of length `0..=k` over `modes` letters, shortest first.
    pub fn all_up_to(modes: usize, k: usize) -> Vec<Word> {
        let mut out = vec![Word::empty()];
        let mut layer = vec![Word::empty()];
        for _ in 0..k {
            let next: Vec<Word> = layer.iter().flat_map(|w| (0..modes).map(move |i| w.then_after(i))).collect();
            out.extend(next.iter().cloned());
            layer = next;
        }
        out
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("I");
        }
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str("·")?;
            }
            write!(f, "A{}", i + 1)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormKind {
    /// Homogenized quadratic constraint pulled back along the word.
    Quadratic,
    /// Upper envelope of a quasi-smooth constraint.
    Upper,
    /// Lower envelope of a quasi-smooth constraint.
    Lower,
}

/// A homogenized form with its provenance: `Ā_wᵀ·base(source)·Ā_w`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedForm {
    pub id: usize,
    pub kind: FormKind,
    pub source: usize,
    pub word: Word,
    pub form: HomForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PruneCadence {
    /// Every iteration for switched systems, every third otherwise.
    Default,
    Never,
    Every(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateOptions {
    pub k_max: usize,
    pub solver: SolverOptions,
    pub prune: PruneCadence,
    /// Prune the final family before building the description.
    pub final_prune: bool,
}

impl Default for IterateOptions {
    fn default() -> Self {
        Self {
            k_max: DEFAULT_K_MAX,
            solver: SolverOptions { early_exit: true, ..SolverOptions::default() },
            prune: PruneCadence::Default,
            final_prune: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificatePurpose {
    Termination { k: usize },
    Prune { k: usize },
}

/// A certified inclusion, re-checkable from the description archive.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateRecord {
    pub target: usize,
    pub family: Vec<usize>,
    pub weights: Vec<f64>,
    pub value: f64,
    pub purpose: CertificatePurpose,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunStats {
    /// Largest best-found certificate value per iteration (`-inf` when there was nothing to certify).
    pub r_max: Vec<f64>,
    pub solves: usize,
    pub pruned: usize,
    /// Quadratic family size per iteration, before that iteration's test.
    pub family_sizes: Vec<usize>,
}

/// Evolving certificate families.
#[derive(Debug, Clone)]
pub struct FamilyState {
    pub k: usize,
    pub quad_family: Vec<TaggedForm>,
    pub quad_frontier: Vec<TaggedForm>,
    pub upper_frontier: Vec<TaggedForm>,
    pub lower_family: Vec<TaggedForm>,
    pub lower_frontier: Vec<TaggedForm>,
    archive: Vec<TaggedForm>,
    seen_quad: BTreeSet<Vec<i64>>,
    seen_lower: BTreeSet<Vec<i64>>,
}

impl FamilyState {
    pub fn new(quad: &[QuadraticConstraint], quasi: &[QuasiSmoothConstraint]) -> Self {
        let mut s = FamilyState {
            k: 0,
            quad_family: Vec::new(),
            quad_frontier: Vec::new(),
            upper_frontier: Vec::new(),
            lower_family: Vec::new(),
            lower_frontier: Vec::new(),
            archive: Vec::new(),
            seen_quad: BTreeSet::new(),
            seen_lower: BTreeSet::new(),
        };
        for (i, c) in quad.iter().enumerate() {
            let form = homogenize_quadratic(c);
            if s.seen_quad.insert(dedup_key(form.mat(), DEDUP_RESOLUTION)) {
                let t = s.register(FormKind::Quadratic, i, Word::empty(), form);
                s.quad_family.push(t.clone());
                s.quad_frontier.push(t);
            }
        }
        for (i, c) in quasi.iter().enumerate() {
            let up = s.register(FormKind::Upper, i, Word::empty(), homogenize_upper(c));
            s.upper_frontier.push(up);
            let lo = homogenize_lower(c);
            if s.seen_lower.insert(dedup_key(lo.mat(), DEDUP_RESOLUTION)) {
                let t = s.register(FormKind::Lower, i, Word::empty(), lo);
                s.lower_family.push(t.clone());
                s.lower_frontier.push(t);
            }
        }
        s
    }

    fn register(&mut self, kind: FormKind, source: usize, word: Word, form: HomForm) -> TaggedForm {
        let t = TaggedForm { id: self.archive.len(), kind, source, word, form };
        self.archive.push(t.clone());
        t
    }

    /// Every form ever created, indexed by id.
    pub fn archive(&self) -> &[TaggedForm] {
        &self.archive
    }

    fn pushforward(
        &mut self,
        from: &[TaggedForm],
        modes: &[DMatrix<f64>],
        seen: Option<&mut BTreeSet<Vec<i64>>>,
    ) -> Vec<TaggedForm> {
        let mut local = BTreeSet::new();
        let seen = match seen {
            Some(s) => s,
            None => &mut local,
        };
        let mut out = Vec::new();
        for f in from {
            for (i, a) in modes.iter().enumerate() {
                let form = f.form.pullback(a);
                if seen.insert(dedup_key(form.mat(), DEDUP_RESOLUTION)) {
                    out.push((f.kind, f.source, f.word.then_after(i), form));
                }
            }
        }
        out.into_iter().map(|(kind, src, w, form)| self.register(kind, src, w, form)).collect()
    }

    /// `𝒬_{k+1} ∖ 𝒬_k`: pushforwards of the frontier not seen before.
    pub fn quad_candidates(&mut self, modes: &[DMatrix<f64>]) -> Vec<TaggedForm> {
        let frontier = core::mem::take(&mut self.quad_frontier);
        let mut seen = core::mem::take(&mut self.seen_quad);
        let out = self.pushforward(&frontier, modes, Some(&mut seen));
        self.seen_quad = seen;
        self.quad_frontier = frontier;
        out
    }

    /// `ℋᵘ_{k+1}`.
    pub fn upper_candidates(&mut self, modes: &[DMatrix<f64>]) -> Vec<TaggedForm> {
        let frontier = core::mem::take(&mut self.upper_frontier);
        let out = self.pushforward(&frontier, modes, None);
        self.upper_frontier = frontier;
        out
    }

    /// `ℋˡ_{k+1} ∖ ℋˡ_k`.
    pub fn lower_candidates(&mut self, modes: &[DMatrix<f64>]) -> Vec<TaggedForm> {
        let frontier = core::mem::take(&mut self.lower_frontier);
        let mut seen = core::mem::take(&mut self.seen_lower);
        let out = self.pushforward(&frontier, modes, Some(&mut seen));
        self.seen_lower = seen;
        self.lower_frontier = frontier;
        out
    }

    fn absorb(&mut self, quad: Vec<TaggedForm>, upper: Vec<TaggedForm>, lower: Vec<TaggedForm>) {
        self.quad_family.extend(quad.iter().cloned());
        self.quad_frontier = quad;
        self.upper_frontier = upper;
        self.lower_family.extend(lower.iter().cloned());
        self.lower_frontier = lower;
        self.k += 1;
    }

    /// Removes certified-redundant members: quadratic forms only against
    /// quadratic forms, lower envelopes against both families.
    fn prune(
        &mut self,
        opts: &SolverOptions,
        purpose: CertificatePurpose,
        records: &mut Vec<CertificateRecord>,
    ) -> Result<usize> {
        let before = self.quad_family.len() + self.lower_family.len();
        let quad_refs: Vec<&HomForm> = self.quad_family.iter().map(|t| &t.form).collect();
        let out = prune_refs(&quad_refs, &[], opts)?;
        for (i, cert, fam) in out.removed {
            let ids = fam.iter().map(|&j| self.quad_family[j].id).collect();
            records.push(record(self.quad_family[i].id, ids, cert, purpose));
        }
        self.quad_family = out.retained.iter().map(|&i| self.quad_family[i].clone()).collect();

        if !self.lower_family.is_empty() {
            let lower_refs: Vec<&HomForm> = self.lower_family.iter().map(|t| &t.form).collect();
            let fixed: Vec<&HomForm> = self.quad_family.iter().map(|t| &t.form).collect();
            let out = prune_refs(&lower_refs, &fixed, opts)?;
            let nl = self.lower_family.len();
            for (i, cert, fam) in out.removed {
                let ids = fam
                    .iter()
                    .map(|&j| if j < nl { self.lower_family[j].id } else { self.quad_family[j - nl].id })
                    .collect();
                records.push(record(self.lower_family[i].id, ids, cert, purpose));
            }
            self.lower_family = out.retained.iter().map(|&i| self.lower_family[i].clone()).collect();
        }

        let keep_q: BTreeSet<usize> = self.quad_family.iter().map(|t| t.id).collect();
        self.quad_frontier.retain(|t| keep_q.contains(&t.id));
        let keep_l: BTreeSet<usize> = self.lower_family.iter().map(|t| t.id).collect();
        self.lower_frontier.retain(|t| keep_l.contains(&t.id));
        Ok(before - self.quad_family.len() - self.lower_family.len())
    }
}

fn record(target: usize, family: Vec<usize>, cert: Certificate, purpose: CertificatePurpose) -> CertificateRecord {
    CertificateRecord { target, family, weights: cert.weights, value: cert.value, purpose }
}

/// One quadratic family step: frontier pushed forward through every mode,
/// deduplicated, absorbed into the family.
pub fn step_quadratic(mut state: FamilyState, modes: &[DMatrix<f64>]) -> FamilyState {
    let aug: Vec<_> = modes.iter().map(augment_mode).collect();
    let q = state.quad_candidates(&aug);
    let upper = state.upper_frontier.clone();
    state.absorb(q, upper, Vec::new());
    state
}

/// One step of all three families.
pub fn step_quasismooth(mut state: FamilyState, modes: &[DMatrix<f64>]) -> FamilyState {
    let aug: Vec<_> = modes.iter().map(augment_mode).collect();
    let q = state.quad_candidates(&aug);
    let u = state.upper_candidates(&aug);
    let l = state.lower_candidates(&aug);
    state.absorb(q, u, l);
    state
}

/// How original coordinates map to the coordinates the description lives in.
#[derive(Debug, Clone)]
pub enum Coordinates {
    Identity,
    Lift(MonomialBasis),
    Transform(VectorField),
}

impl Coordinates {
    pub fn map(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Coordinates::Identity => Ok(x.to_vec()),
            Coordinates::Lift(b) => Ok(b.lift(x)),
            Coordinates::Transform(t) => t.eval(x),
        }
    }
}

/// A finitely described set `O_{k*}` with exact membership semantics.
#[derive(Debug, Clone)]
pub struct InvariantSetDescription {
    pub k_star: usize,
    /// The linear system in working coordinates (lifted or transformed when applicable).
    pub system: SystemModel,
    /// Retained quadratic forms.
    pub forms: Vec<TaggedForm>,
    /// True nonlinear constraints, checked along every word in `quasi_words`.
    pub quasi: Vec<QuasiSmoothConstraint>,
    pub quasi_words: Vec<Word>,
    pub coordinates: Coordinates,
    pub source: ProblemSpec,
    /// Every form created during the run, indexed by id.
    pub archive: Vec<TaggedForm>,
    pub certificates: Vec<CertificateRecord>,
    pub stats: RunStats,
    pub stability: StabilityReport,
    /// Certification slack the run used.
    pub eps_cert: f64,
}

impl InvariantSetDescription {
    /// Dimension of the original state.
    pub fn n(&self) -> usize {
        self.source.n()
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        membership(self, x)
    }

    /// Number of quadratic forms in the final description.
    pub fn constraint_count(&self) -> usize {
        self.forms.len()
    }

    /// Re-validates every stored certificate from its weights.
    pub fn audit_certificates(&self) -> Result<Vec<usize>> {
        let mut failures = Vec::new();
        for (i, r) in self.certificates.iter().enumerate() {
            let fam: Vec<&HomForm> = r.family.iter().map(|&j| &self.archive[j].form).collect();
            if !crate::certify::recheck(&self.archive[r.target].form, &fam, &r.weights, self.eps_cert)? {
                failures.push(i);
            }
        }
        Ok(failures)
    }
}

/// `x ∈ O_{k*}`: every retained form is `≤ TOL_MEM` at `(z, 1)` and every true
/// quasi-smooth constraint holds along every stored word.
pub fn membership(desc: &InvariantSetDescription, x: &[f64]) -> Result<bool> {
    if x.len() != desc.n() {
        return Err(Error::DimensionMismatch { expected: desc.n(), found: x.len() });
    }
    let z = desc.coordinates.map(x)?;
    for f in &desc.forms {
        if f.form.value_at(&z) > TOL_MEM {
            return Ok(false);
        }
    }
    if !desc.quasi.is_empty() {
        for w in &desc.quasi_words {
            let y = w.apply(&desc.system, &z);
            for c in &desc.quasi {
                if c.eval(&y)? > 1.0 + TOL_MEM {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Problem data in the coordinates the certificates are computed in.
#[derive(Debug, Clone)]
pub(crate) struct Working {
    pub system: SystemModel,
    pub quad: Vec<QuadraticConstraint>,
    pub quasi: Vec<QuasiSmoothConstraint>,
    pub coordinates: Coordinates,
}

fn should_prune(cadence: PruneCadence, switched: bool, k: usize) -> bool {
    match cadence {
        PruneCadence::Never => false,
        PruneCadence::Every(0) => false,
        PruneCadence::Every(p) => k.is_multiple_of(p),
        PruneCadence::Default => switched || k.is_multiple_of(3),
    }
}

pub(crate) fn run_engine(
    work: Working,
    source: ProblemSpec,
    stability: StabilityReport,
    opts: &IterateOptions,
    backend: &dyn BatchSolver,
) -> Result<InvariantSetDescription> {
    opts.solver.validate()?;
    let aug: Vec<_> = work.system.modes().iter().map(augment_mode).collect();
    let switched = work.system.mode_count() > 1;
    let mut state = FamilyState::new(&work.quad, &work.quasi);
    let mut stats = RunStats::default();
    let mut records = Vec::new();

    let k_star = loop {
        let k = state.k;
        stats.family_sizes.push(state.quad_family.len());
        let qc = state.quad_candidates(&aug);
        let uc = state.upper_candidates(&aug);
        let targets: Vec<&TaggedForm> = qc.iter().chain(uc.iter()).collect();
        let family: Vec<&TaggedForm> = state.quad_family.iter().chain(state.lower_family.iter()).collect();
        let target_forms: Vec<&HomForm> = targets.iter().map(|t| &t.form).collect();
        let family_forms: Vec<&HomForm> = family.iter().map(|t| &t.form).collect();
        let certs = backend.solve_batch(&target_forms, &family_forms, &opts.solver)?;
        stats.solves += certs.len();
        stats.r_max.push(certs.iter().map(|c| c.value).fold(f64::NEG_INFINITY, f64::max));
        let all = certs.iter().all(Certificate::is_certified);
        let family_ids: Vec<usize> = family.iter().map(|t| t.id).collect();
        for (t, c) in targets.iter().zip(certs) {
            if c.status == CertificateStatus::Certified {
                records.push(record(t.id, family_ids.clone(), c, CertificatePurpose::Termination { k }));
            }
        }
        if all {
            break k;
        }
        if k >= opts.k_max {
            return Err(Error::IterationBudgetExceeded { k_max: opts.k_max });
        }
        let lc = state.lower_candidates(&aug);
        state.absorb(qc, uc, lc);
        if should_prune(opts.prune, switched, state.k) {
            stats.pruned += state.prune(&opts.solver, CertificatePurpose::Prune { k: state.k }, &mut records)?;
        }
    };
    if opts.final_prune && opts.prune != PruneCadence::Never {
        stats.pruned += state.prune(&opts.solver, CertificatePurpose::Prune { k: k_star }, &mut records)?;
    }

    let quasi_words =
        if work.quasi.is_empty() { Vec::new() } else { Word::all_up_to(work.system.mode_count(), k_star) };
    Ok(InvariantSetDescription {
        k_star,
        system: work.system,
        forms: state.quad_family,
        quasi: work.quasi,
        quasi_words,
        coordinates: work.coordinates,
        source,
        archive: state.archive,
        certificates: records,
        stats,
        stability,
        eps_cert: opts.solver.eps_cert,
    })
}

fn working_for(spec: &ProblemSpec) -> Result<Working> {
    let quad = ensure_ball(spec.n(), &spec.quad, spec.dx)?;
    let coordinates = match &spec.system {
        Dynamics::Linear(_) => Coordinates::Identity,
        Dynamics::Transformed(t) => Coordinates::Transform(t.forward.clone()),
    };
    Ok(Working { system: spec.system.linear_part().clone(), quad, quasi: spec.quasi.clone(), coordinates })
}

fn run_quadratic_pipeline(
    spec: &ProblemSpec,
    opts: &IterateOptions,
    backend: &dyn BatchSolver,
) -> Result<InvariantSetDescription> {
    let stability = validate_problem(spec)?;
    let work = working_for(spec)?;
    run_engine(work, spec.clone(), stability, opts, backend)
}

/// Algorithm 1: quadratic constraints only.
pub fn run_algorithm1(spec: &ProblemSpec, opts: &IterateOptions) -> Result<InvariantSetDescription> {
    if !spec.quasi.is_empty() || !spec.poly.is_empty() {
        return Err(Error::Unsupported(String::from(
            "run_algorithm1 takes quadratic constraints only; use run_problem for mixed constraints",
        )));
    }
    run_quadratic_pipeline(spec, opts, &Sequential)
}

/// Algorithm 2: quadratic plus quasi-smooth constraints. Without quasi-smooth
/// constraints this is Algorithm 1.
pub fn run_algorithm2(spec: &ProblemSpec, opts: &IterateOptions) -> Result<InvariantSetDescription> {
    if !spec.poly.is_empty() {
        return Err(Error::Unsupported(String::from("polynomial constraints go through the lifted pipeline")));
    }
    run_quadratic_pipeline(spec, opts, &Sequential)
}

/// Switched-system variant; requires at least two modes.
pub fn run_switched(spec: &ProblemSpec, opts: &IterateOptions) -> Result<InvariantSetDescription> {
    if spec.system.mode_count() < 2 {
        return Err(Error::Unsupported(String::from("run_switched needs at least two modes")));
    }
    run_algorithm2(spec, opts)
}

/// Runs the linear pipeline on `y = T(x)`; constraints are given in `y`.
pub fn run_transformed(
    system: crate::model::TransformedSystem,
    quad: Vec<QuadraticConstraint>,
    quasi: Vec<QuasiSmoothConstraint>,
    dx: Option<f64>,
    opts: &IterateOptions,
) -> Result<InvariantSetDescription> {
    let spec = ProblemSpec { system: Dynamics::Transformed(system), quad, quasi, poly: Vec::new(), dx };
    run_problem(&spec, opts)
}

/// Routes a problem: polynomial constraints to the lifted pipeline,
/// quasi-smooth constraints to Algorithm 2, otherwise Algorithm 1.
pub fn run_problem(spec: &ProblemSpec, opts: &IterateOptions) -> Result<InvariantSetDescription> {
    run_problem_with(spec, opts, &Sequential)
}

pub fn run_problem_with(
    spec: &ProblemSpec,
    opts: &IterateOptions,
    backend: &dyn BatchSolver,
) -> Result<InvariantSetDescription> {
    if spec.poly.is_empty() {
        return run_quadratic_pipeline(spec, opts, backend);
    }
    if !spec.quasi.is_empty() {
        return Err(Error::Unsupported(String::from(
            "polynomial and quasi-smooth constraints cannot be combined",
        )));
    }
    if matches!(spec.system, Dynamics::Transformed(_)) {
        return Err(Error::Unsupported(String::from(
            "polynomial constraints are not supported on transformed systems",
        )));
    }
    if spec.poly.iter().all(|p| p.degree() <= 2) {
        let mut quad = spec.quad.clone();
        for p in &spec.poly {
            quad.push(p.to_quadratic()?);
        }
        let reduced = ProblemSpec { quad, poly: Vec::new(), ..spec.clone() };
        let stability = validate_problem(spec)?;
        let work = working_for(&reduced)?;
        return run_engine(work, spec.clone(), stability, opts, backend);
    }
    run_lifted_with(spec, opts, backend)
}

/// Description of `O_k` for a fixed `k`, without any termination test or pruning.
pub fn describe_level(spec: &ProblemSpec, k: usize) -> Result<InvariantSetDescription> {
    if !spec.poly.is_empty() {
        return Err(Error::Unsupported(String::from("describe_level takes quadratic and quasi-smooth constraints")));
    }
    let stability = validate_problem(spec)?;
    let work = working_for(spec)?;
    let mut state = FamilyState::new(&work.quad, &work.quasi);
    for _ in 0..k {
        state = step_quadratic(state, work.system.modes());
    }
    let quasi_words = if work.quasi.is_empty() { Vec::new() } else { Word::all_up_to(work.system.mode_count(), k) };
    Ok(InvariantSetDescription {
        k_star: k,
        system: work.system,
        forms: state.quad_family,
        quasi: work.quasi,
        quasi_words,
        coordinates: work.coordinates,
        source: spec.clone(),
        archive: state.archive,
        certificates: Vec::new(),
        stats: RunStats::default(),
        stability,
        eps_cert: SolverOptions::default().eps_cert,
    })
}
