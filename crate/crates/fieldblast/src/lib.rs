//! fieldblast verifies equivalence goals that mix prime-field, natural-number
//! and bitvector arithmetic. Field terms are translated to the naturals and
//! then to bitvectors by a guarded rewrite calculus; the side inequalities the
//! guards generate are discharged by a dedicated range analysis; the residual
//! bitvector goals are lowered to CNF and decided by a built-in SAT solver.
//! A brute-force enumeration oracle provides ground truth at small scale.

pub mod bench;
pub mod bitblast;
pub mod ff2nat;
pub mod nat2bv;
pub mod oracle;
pub mod parse;
pub mod pipeline;
pub mod range;
pub mod sat;
pub mod term;
pub mod trace;


pub use bench::{gen_jolt_or, gen_random, JoltSign, RandomSpec};
pub use parse::{parse_problem, pretty_problem, Problem};
pub use pipeline::{
    emit_report, run_pipeline, run_pipeline_full, OracleCheck, PipelineOptions, ReportFormat,
    RunDiagnostics, Verdict, VerdictStatus,
};
pub use term::{
    normalize, normalize_term, sort_check, sort_check_formula, substitute, subterm_occurs,
    Formula, FormulaNode, ProofContext, Sort, Term, TermNode,
};

use thiserror::Error as ThisError;

/// Errors shared across the crate.
#[derive(Debug, ThisError)]
pub enum Error {
    #[error("parse error at {line}:{col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("sort mismatch at {path}: {msg}")]
    SortMismatch { path: String, msg: String },
    #[error("field order {0} is not prime")]
    NonPrimeField(u64),
    #[error("timeout during {0}")]
    Timeout(String),
    #[error("memory limit exceeded during {0}")]
    MemoryExceeded(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("enumeration budget exceeded (space of {0} assignments)")]
    BudgetExceeded(u128),
    #[error("unbound variable {0}")]
    UnboundVariable(String),
    #[error("countermodel lift failure: {0}")]
    LiftFailure(String),
    #[error("constraint violation: {0}")]
    ConstraintViolation(String),
    #[error("value overflow during evaluation")]
    Overflow,
    #[error("internal invariant violated: {0}")]
    Internal(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Wall-clock budget threaded through every stage.
#[derive(Clone, Debug)]
pub struct Deadline {
    start: std::time::Instant,
    limit: Option<std::time::Duration>,
}

impl Deadline {
    pub fn new(limit: Option<std::time::Duration>) -> Deadline {
        Deadline {
            start: std::time::Instant::now(),
            limit,
        }
    }

    pub fn unlimited() -> Deadline {
        Deadline::new(None)
    }

    pub fn expired(&self) -> bool {
        match self.limit {
            Some(l) => self.start.elapsed() >= l,
            None => false,
        }
    }

    pub fn check(&self, stage: &str) -> Result<()> {
        if self.expired() {
            Err(Error::Timeout(stage.to_string()))
        } else {
            Ok(())
        }
    }
}
