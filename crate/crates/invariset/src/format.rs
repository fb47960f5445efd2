//! JSON problem files and description files.
//!
//! Problem files give matrices as arrays of rows. Description files store
//! every matrix row-major with an explicit `dim`.

use std::fs;
use std::path::Path;

use invariset_core::expr::parse;
use invariset_core::lift::MonomialBasis;
use invariset_core::{
    CertificatePurpose, CertificateRecord, Coordinates, Dynamics, FormKind, HomForm, InvariantSetDescription,
    IterateOptions, PolynomialConstraint, ProblemSpec, QuadraticConstraint, QuasiSmoothConstraint, RunStats,
    ScalarField, StabilityReport, SymMat, SystemModel, TaggedForm, TransformedSystem, VectorField, Word,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const DESCRIPTION_FORMAT: &str = "invariset-description";
pub const DESCRIPTION_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema: {0}")]
    Schema(String),
    #[error(transparent)]
    Core(#[from] invariset_core::Error),
}

type Rows = Vec<Vec<f64>>;

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub system: SystemEntry,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub quadratic: Vec<QuadraticEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub quasismooth: Vec<QuasiSmoothEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub polynomial: Vec<PolynomialEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx: Option<f64>,
    #[serde(default)]
    pub options: OptionsEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum SystemEntry {
    Modes(Vec<Rows>),
    Transformed(TransformedEntry),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformedEntry {
    pub modes: Vec<Rows>,
    #[serde(rename = "T")]
    pub forward: Vec<String>,
    #[serde(rename = "Tinv")]
    pub inverse: Vec<String>,
}

/// `xᵀQx + 2qᵀx ≤ rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticEntry {
    #[serde(rename = "Q")]
    pub quad: Rows,
    pub q: Vec<f64>,
    #[serde(default = "one")]
    pub rhs: f64,
}

/// `H(x) ≤ rhs` (default 1) with `H(0) = h0`, `∇H(0) = grad0` and envelope constant `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuasiSmoothEntry {
    pub expr: String,
    pub h0: f64,
    pub grad0: Vec<f64>,
    #[serde(rename = "L")]
    pub lipschitz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialEntry {
    pub expr: String,
    #[serde(default = "one")]
    pub rhs: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionsEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_cert: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn read(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|source| FormatError::Io { path: path.display().to_string(), source })
}

fn square(rows: &Rows, n: Option<usize>, what: &str) -> Result<DMatrix<f64>, FormatError> {
    let dim = rows.len();
    if dim == 0 || rows.iter().any(|r| r.len() != dim) {
        return Err(FormatError::Schema(format!("{what} must be a nonempty square matrix")));
    }
    if let Some(n) = n {
        if dim != n {
            return Err(FormatError::Schema(format!("{what} is {dim}x{dim}, expected {n}x{n}")));
        }
    }
    Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
}

fn modes(list: &[Rows]) -> Result<SystemModel, FormatError> {
    let first = list.first().ok_or_else(|| FormatError::Schema("system needs at least one mode".into()))?;
    let n = first.len();
    let mats = list
        .iter()
        .enumerate()
        .map(|(i, m)| square(m, Some(n), &format!("mode {i}")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SystemModel::new(mats)?)
}

fn exprs(list: &[String], n: usize, what: &str) -> Result<VectorField, FormatError> {
    if list.len() != n {
        return Err(FormatError::Schema(format!("{what} needs {n} expressions, got {}", list.len())));
    }
    let parsed = list.iter().map(|s| parse(s, n)).collect::<Result<Vec<_>, _>>().map_err(invariset_core::Error::from)?;
    Ok(VectorField::Exprs(parsed))
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, FormatError> {
        Self::from_json(&read(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files always serialize")
    }

    pub fn to_spec(&self) -> Result<ProblemSpec, FormatError> {
        let system = match &self.system {
            SystemEntry::Modes(m) => Dynamics::Linear(modes(m)?),
            SystemEntry::Transformed(t) => {
                let inner = modes(&t.modes)?;
                let n = inner.n();
                Dynamics::Transformed(TransformedSystem::new(
                    inner,
                    exprs(&t.forward, n, "T")?,
                    exprs(&t.inverse, n, "Tinv")?,
                ))
            }
        };
        let n = system.n();
        let vector = |v: &[f64], what: &str| {
            if v.len() == n {
                Ok(DVector::from_row_slice(v))
            } else {
                Err(FormatError::Schema(format!("{what} has length {}, expected {n}", v.len())))
            }
        };
        let mut quad = Vec::with_capacity(self.quadratic.len());
        for (i, c) in self.quadratic.iter().enumerate() {
            let m = SymMat::new(square(&c.quad, Some(n), &format!("quadratic[{i}].Q"))?)?;
            quad.push(QuadraticConstraint::with_rhs(m, vector(&c.q, &format!("quadratic[{i}].q"))?, c.rhs)?);
        }
        let mut quasi = Vec::with_capacity(self.quasismooth.len());
        for (i, c) in self.quasismooth.iter().enumerate() {
            let field = ScalarField::Expr(parse(&c.expr, n).map_err(invariset_core::Error::from)?);
            let grad = vector(&c.grad0, &format!("quasismooth[{i}].grad0"))?;
            quasi.push(match c.rhs {
                Some(rhs) => QuasiSmoothConstraint::with_rhs(field, c.h0, grad, c.lipschitz, rhs)?,
                None => QuasiSmoothConstraint::new(field, c.h0, grad, c.lipschitz)?,
            });
        }
        let mut poly = Vec::with_capacity(self.polynomial.len());
        for c in &self.polynomial {
            let e = parse(&c.expr, n).map_err(invariset_core::Error::from)?;
            poly.push(PolynomialConstraint::from_expr(&e, n, c.rhs)?);
        }
        Ok(ProblemSpec { system, quad, quasi, poly, dx: self.dx })
    }

    /// Iteration options from the file, with command-line overrides.
    pub fn iterate_options(&self, k_max: Option<usize>, seed: Option<u64>) -> IterateOptions {
        let mut opts = IterateOptions::default();
        if let Some(k) = k_max.or(self.options.k_max) {
            opts.k_max = k;
        }
        if let Some(e) = self.options.eps_cert {
            opts.solver.eps_cert = e;
        }
        if let Some(m) = self.options.max_iters {
            opts.solver.max_iters = m;
        }
        if let Some(s) = seed.or(self.options.seed) {
            opts.solver.seed = s;
        }
        opts
    }
}

/// A square matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixEntry {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl MatrixEntry {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self { dim: m.nrows(), data: m.transpose().as_slice().to_vec() }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>, FormatError> {
        if self.data.len() != self.dim * self.dim {
            return Err(FormatError::Schema(format!(
                "matrix of dim {} needs {} entries, got {}",
                self.dim,
                self.dim * self.dim,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(self.dim, self.dim, &self.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CoordinatesEntry {
    Identity,
    Lift {
        n: usize,
        dbar: usize,
    },
    Transform {
        #[serde(rename = "T")]
        forward: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormKindEntry {
    Quadratic,
    Upper,
    Lower,
}

/// A homogenized form `Ā_wᵀ·base(source)·Ā_w`; `word` lists mode indices, most recently applied first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormEntry {
    pub id: usize,
    pub kind: FormKindEntry,
    pub source: usize,
    pub word: Vec<usize>,
    pub matrix: MatrixEntry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PurposeEntry {
    Termination { k: usize },
    Prune { k: usize },
}

/// `λ_max(archive[target] − Σ weights_j·archive[family_j]) = value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateEntry {
    pub target: usize,
    pub family: Vec<usize>,
    pub weights: Vec<f64>,
    pub value: f64,
    pub purpose: PurposeEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsEntry {
    /// `null` where an iteration had nothing to certify.
    pub r_max: Vec<Option<f64>>,
    pub solves: usize,
    pub pruned: usize,
    pub family_sizes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum StabilityEntry {
    Schur { spectral_radius: f64 },
    Switched { jsr_bound: f64, proven: bool },
}

/// A computed set `O_{k*}` with its provenance, certificates and the problem it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescriptionFile {
    pub format: String,
    pub version: u32,
    pub k_star: usize,
    pub problem: ProblemFile,
    pub coordinates: CoordinatesEntry,
    /// Mode matrices in the coordinates the forms live in.
    pub system: Vec<MatrixEntry>,
    pub forms: Vec<FormEntry>,
    /// Words along which the true quasi-smooth constraints are checked.
    pub quasi_words: Vec<Vec<usize>>,
    pub archive: Vec<FormEntry>,
    pub certificates: Vec<CertificateEntry>,
    pub stats: StatsEntry,
    pub stability: StabilityEntry,
    pub eps_cert: f64,
}

fn form_entry(f: &TaggedForm) -> FormEntry {
    FormEntry {
        id: f.id,
        kind: match f.kind {
            FormKind::Quadratic => FormKindEntry::Quadratic,
            FormKind::Upper => FormKindEntry::Upper,
            FormKind::Lower => FormKindEntry::Lower,
        },
        source: f.source,
        word: f.word.0.clone(),
        matrix: MatrixEntry::from_matrix(f.form.mat().as_matrix()),
    }
}

fn tagged_form(e: &FormEntry) -> Result<TaggedForm, FormatError> {
    Ok(TaggedForm {
        id: e.id,
        kind: match e.kind {
            FormKindEntry::Quadratic => FormKind::Quadratic,
            FormKindEntry::Upper => FormKind::Upper,
            FormKindEntry::Lower => FormKind::Lower,
        },
        source: e.source,
        word: Word(e.word.clone()),
        form: HomForm::new(SymMat::new(e.matrix.to_matrix()?)?),
    })
}

impl DescriptionFile {
    /// Fails for descriptions built from callbacks, which have no textual form.
    pub fn from_description(desc: &InvariantSetDescription, problem: &ProblemFile) -> Result<Self, FormatError> {
        let coordinates = match &desc.coordinates {
            Coordinates::Identity => CoordinatesEntry::Identity,
            Coordinates::Lift(b) => CoordinatesEntry::Lift { n: b.n(), dbar: b.dbar() },
            Coordinates::Transform(VectorField::Exprs(es)) => {
                CoordinatesEntry::Transform { forward: es.iter().map(|e| e.to_string()).collect() }
            }
            Coordinates::Transform(VectorField::Callback(_)) => {
                return Err(FormatError::Schema("callback transforms cannot be serialized".into()))
            }
        };
        let certificates = desc
            .certificates
            .iter()
            .map(|c| CertificateEntry {
                target: c.target,
                family: c.family.clone(),
                weights: c.weights.clone(),
                value: c.value,
                purpose: match c.purpose {
                    CertificatePurpose::Termination { k } => PurposeEntry::Termination { k },
                    CertificatePurpose::Prune { k } => PurposeEntry::Prune { k },
                },
            })
            .collect();
        Ok(Self {
            format: DESCRIPTION_FORMAT.into(),
            version: DESCRIPTION_VERSION,
            k_star: desc.k_star,
            problem: problem.clone(),
            coordinates,
            system: desc.system.modes().iter().map(MatrixEntry::from_matrix).collect(),
            forms: desc.forms.iter().map(form_entry).collect(),
            quasi_words: desc.quasi_words.iter().map(|w| w.0.clone()).collect(),
            archive: desc.archive.iter().map(form_entry).collect(),
            certificates,
            stats: StatsEntry {
                r_max: desc.stats.r_max.iter().map(|&r| r.is_finite().then_some(r)).collect(),
                solves: desc.stats.solves,
                pruned: desc.stats.pruned,
                family_sizes: desc.stats.family_sizes.clone(),
            },
            stability: match desc.stability {
                StabilityReport::Schur { spectral_radius } => StabilityEntry::Schur { spectral_radius },
                StabilityReport::Switched { jsr_bound, proven } => StabilityEntry::Switched { jsr_bound, proven },
            },
            eps_cert: desc.eps_cert,
        })
    }

    pub fn to_description(&self) -> Result<InvariantSetDescription, FormatError> {
        if self.format != DESCRIPTION_FORMAT || self.version != DESCRIPTION_VERSION {
            return Err(FormatError::Schema(format!(
                "expected {DESCRIPTION_FORMAT} version {DESCRIPTION_VERSION}, found {} version {}",
                self.format, self.version
            )));
        }
        let source = self.problem.to_spec()?;
        let system = SystemModel::new(self.system.iter().map(MatrixEntry::to_matrix).collect::<Result<_, _>>()?)?;
        let coordinates = match &self.coordinates {
            CoordinatesEntry::Identity => Coordinates::Identity,
            CoordinatesEntry::Lift { n, dbar } => Coordinates::Lift(MonomialBasis::with_grade(*n, *dbar)),
            CoordinatesEntry::Transform { forward } => Coordinates::Transform(exprs(forward, source.n(), "T")?),
        };
        let forms = self.forms.iter().map(tagged_form).collect::<Result<Vec<_>, _>>()?;
        let archive = self.archive.iter().map(tagged_form).collect::<Result<Vec<_>, _>>()?;
        let dim = system.n() + 1;
        if let Some(f) = forms.iter().chain(&archive).find(|f| f.form.mat().dim() != dim) {
            return Err(FormatError::Schema(format!("form {} has dim {}, expected {dim}", f.id, f.form.mat().dim())));
        }
        let modes = system.mode_count();
        if self.quasi_words.iter().chain(self.forms.iter().map(|f| &f.word)).flatten().any(|&m| m >= modes) {
            return Err(FormatError::Schema(format!("word refers to a mode outside 0..{modes}")));
        }
        let mut certificates = Vec::with_capacity(self.certificates.len());
        for c in &self.certificates {
            if c.target >= archive.len() || c.family.iter().any(|&j| j >= archive.len()) || c.family.len() != c.weights.len() {
                return Err(FormatError::Schema("certificate refers to forms outside the archive".into()));
            }
            certificates.push(CertificateRecord {
                target: c.target,
                family: c.family.clone(),
                weights: c.weights.clone(),
                value: c.value,
                purpose: match c.purpose {
                    PurposeEntry::Termination { k } => CertificatePurpose::Termination { k },
                    PurposeEntry::Prune { k } => CertificatePurpose::Prune { k },
                },
            });
        }
        Ok(InvariantSetDescription {
            k_star: self.k_star,
            system,
            forms,
            quasi: source.quasi.clone(),
            quasi_words: self.quasi_words.iter().cloned().map(Word).collect(),
            coordinates,
            source,
            archive,
            certificates,
            stats: RunStats {
                r_max: self.stats.r_max.iter().map(|r| r.unwrap_or(f64::NEG_INFINITY)).collect(),
                solves: self.stats.solves,
                pruned: self.stats.pruned,
                family_sizes: self.stats.family_sizes.clone(),
            },
            stability: match self.stability {
                StabilityEntry::Schur { spectral_radius } => StabilityReport::Schur { spectral_radius },
                StabilityEntry::Switched { jsr_bound, proven } => StabilityReport::Switched { jsr_bound, proven },
            },
            eps_cert: self.eps_cert,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, FormatError> {
        Self::from_json(&read(path)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("descriptions always serialize");
        s.push('\n');
        s
    }
}
