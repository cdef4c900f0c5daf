//! Block-diagonal semidefinite programming.
//!
//! Problems are stated in linear-matrix-inequality form with free variables
//! and optional linear equalities (see [`SdpProblem`]) and solved by a
//! primal-dual interior-point method ([`solve`]).

mod embed;
mod error;
mod problem;
mod schur;
mod solver;
mod verify;

pub use embed::{embed_hermitian, extract_hermitian, hermitian_entries};
pub use error::{Result, SdpError};
pub use problem::{Entry, LinearEquality, SdpProblem, SparseBlockMatrix};
pub use solver::{solve, IterateRecord, SdpSolution, SolveStatus, SolverOptions};
pub use verify::{verify_solution, VerificationReport};
