//! Probabilistic reachability and expected-reward properties over DTMCs.
//!
//! Supported fragment: `P>=p [path]`, `P<=p [path]`, `P=? [path]` and
//! `R{"label"}` with the same bounds, where `path` is `F expr` or
//! `expr U expr` and `expr` combines atoms such as `m=3` or `e<=2` with
//! `!`, `&` and `|`. Atoms range over the abstract-state fields `m`, `e`,
//! `do` and `du`.

mod ast;
mod checker;
mod parser;
mod solver;

pub use ast::{Bound, CmpOp, PathFormula, PctlFormula, StateExpr};
pub use checker::{
    check_prob, check_prob_with, check_reward, check_reward_with, evaluate, evaluate_with,
    prob_until, sat, CheckResult,
};
pub use parser::{parse, parse_properties, NamedProperty};
pub use solver::{gaussian, sccs, solve, value_iteration, SolveMethod, SolverOptions};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PctlError {
    #[error("syntax error at position {pos}: expected {}, found {found}", expected.join(" or "))]
    Syntax {
        pos: usize,
        found: String,
        expected: Vec<String>,
    },
    #[error("semantic error{}: {message}", pos.map(|p| format!(" at position {p}")).unwrap_or_default())]
    Semantic { pos: Option<usize>, message: String },
    #[error("line {line}: {source}")]
    Property {
        line: usize,
        #[source]
        source: Box<PctlError>,
    },
    #[error("usage error: {0}")]
    Usage(String),
    #[error("value iteration did not converge within {sweeps} sweeps")]
    NonConvergence { sweeps: usize },
    #[error("numeric error: {0}")]
    Numeric(String),
}
