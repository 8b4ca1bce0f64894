use thiserror::Error;

use crate::model::{VarId, Violation};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid influence diagram: {}", format_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("adding arc {from} -> {to} would create a cycle")]
    Cycle { from: VarId, to: VarId },

    #[error("unknown variable {0}")]
    UnknownVariable(String),

    #[error("{info} is not a parent of {decision}")]
    NotAParent { info: VarId, decision: VarId },

    #[error("node sets passed to a separation query overlap")]
    OverlappingSets,

    #[error("no separating set exists between the given node sets")]
    Infeasible,

    #[error("enumeration exceeds {limit} leaf scenarios")]
    TooLarge { limit: usize },

    #[error("table shape mismatch: {0}")]
    Shape(String),

    #[error("strong order violated while eliminating {var}: probability varies over the decision")]
    StrongOrder { var: VarId },

    #[error("table with scope {0:?} fits no clique")]
    Assignment(Vec<VarId>),

    #[error("inconsistent evidence: separator mass reappeared after being zero")]
    InconsistentEvidence,

    #[error("evidence has probability zero")]
    ZeroProbability,

    #[error("checkpoint restored out of order")]
    CheckpointMisuse,

    #[error("join tree needs {needed} table entries, budget is {budget}")]
    MemoryBudget { needed: usize, budget: usize },

    #[error("search plan does not match the join tree: {0}")]
    PlanMismatch(String),

    #[error("malformed policy tree: {0}")]
    MalformedPolicy(String),

    #[error("invalid maze: {0}")]
    Maze(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
