//! Linear and mixed-integer programming engine.
//!
//! Provides a sparse bounded primal simplex with LU factorization, a dense
//! tableau simplex for cross-checking, best-bound branch-and-bound, and
//! fixed-format MPS import/export.

pub mod branch;
pub mod dense;
pub mod error;
mod lu;
pub mod mps;
pub mod problem;
pub mod simplex;

pub use branch::{branch_and_bound, BranchOptions, MilpResult, MilpStatus};
pub use dense::{solve_dense, DenseResult};
pub use error::LpError;
pub use mps::{export_mps, import_mps, read_mps, write_mps, NameMap};
pub use problem::{Constraint, LinearProblem, Sense, Variable};
pub use simplex::{solve_relaxation, Basis, LpResult, LpStatus, Simplex, SimplexOptions, VarStatus};
