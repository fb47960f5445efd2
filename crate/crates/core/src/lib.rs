//! Exact maximal constraint-admissible invariant sets for discrete-time
//! linear and switched linear systems.
//!
//! The constraint set `X` may mix quadratic inequalities, quasi-smooth
//! nonlinear inequalities (functions bracketed by quadratic envelopes around
//! the origin) and polynomial inequalities (handled through a monomial lift).
//! The recursion `O_{k+1} = O_k ∩ A⁻¹O_k` is driven by S-procedure
//! certificates: a new homogenized constraint is redundant once it is
//! dominated by a nonnegative combination of the current family, which is
//! decided by minimizing a maximum eigenvalue over the nonnegative orthant.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the command line
//! front end and parallel batch runs live in the `invariset` crate.
#![no_std]
#![deny(missing_debug_implementations)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod certify;
pub mod error;
pub mod expr;
pub mod iterate;
pub mod lift;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod poly;

pub use certify::{
    evaluate_r, prune_family, prune_family_against, recheck, solve_certificate, BatchSolver,
    Certificate, CertificateStatus, PruneOutcome, Sequential, SolverOptions,
};
pub use error::{Error, Result};
pub use expr::Expr;
pub use iterate::{
    describe_level, membership, run_algorithm1, run_algorithm2, run_problem, run_problem_with,
    run_switched, run_transformed, CertificatePurpose, CertificateRecord, Coordinates, FamilyState,
    FormKind, InvariantSetDescription, IterateOptions, PruneCadence, RunStats, TaggedForm, Word,
    TOL_MEM,
};
pub use lift::{run_lifted, MonomialBasis, PolynomialConstraint};
pub use linalg::SymMat;
pub use model::{
    validate_problem, validate_system, Dynamics, HomForm, ProblemSpec, QuadraticConstraint,
    QuasiSmoothConstraint, ScalarField, StabilityReport, SystemModel, TransformedSystem,
    VectorField,
};
