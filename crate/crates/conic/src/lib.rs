//! Mixed-integer second-order cone programming.
//!
//! [`ConicProgram`] collects variables, a linear objective and linear/conic
//! rows. [`solve_continuous`] lowers the model to a symmetric-cone
//! interior-point solve (Clarabel runs embedded as the backend);
//! [`solve_mixed`] wraps it in best-first branch-and-bound over the binary
//! variables. [`textio`] defines a plain-text dump/load format so instances
//! can be inspected or shipped to an external solver.

mod error;
mod mip;
mod program;
mod solve;
pub mod textio;

pub use error::{ProgramError, SolveError, TextError};
pub use mip::{solve_mixed, DEFAULT_GAP, MAX_BINARIES};
pub use program::{ConicProgram, LinExpr, Row, RowId, VarId};
pub use solve::{solve_continuous, ConicSolution, Status, DEFAULT_TOL};
