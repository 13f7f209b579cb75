//! Taylor-coefficient solver for Cauchy problems of functional differential
//! equations with constant, proportional and time-dependent delays.
//!
//! The pipeline is: parse a problem ([`problem_file`]), classify its delayed
//! terms ([`expr::analyze`]), replace history-dependent terms by series of
//! the initial function ([`reduce`]), then run the coefficient recurrence
//! ([`engine`]). [`oracle`] provides an RK4 reference for comparison.

pub mod engine;
pub mod expr;
pub mod oracle;
pub mod problem;
pub mod problem_file;
pub mod reduce;
pub mod series;

pub use engine::{
    estimate_error, evaluate_solution, residual, solve, solve_reduced, EngineError, ErrorEstimate,
    PivotEntry, SolveFailure, TaylorSolution,
};
pub use expr::{Expr, StateRef, Symbols};
pub use oracle::{compare, integrate_reference, DenseTrajectory, OracleError};
pub use problem::{CauchyProblem, DelayKind, DelaySpec, ValidityInterval};
pub use problem_file::{parse_problem, FileError};
pub use reduce::{substitute_history, ReducedSystem};
pub use series::{Elementary, Series, SeriesError};
