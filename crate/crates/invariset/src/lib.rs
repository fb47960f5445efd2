//! File formats, the command line front end and rayon-backed batch solving
//! for `invariset-core`.

pub mod commands;
pub mod format;
pub mod parallel;

pub use format::{DescriptionFile, FormatError, ProblemFile};
pub use parallel::RayonSolver;
