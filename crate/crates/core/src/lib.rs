//! Exact evaluation of influence diagrams by AND/OR search over a strong
//! join tree, with branch-and-bound pruning from an upper-bound diagram.

pub mod enumerate;
pub mod error;
pub mod graph;
pub mod io;
pub mod jointree;
pub mod maze;
pub mod model;
pub mod policy;
pub mod potential;
pub mod propagation;
pub mod search;
pub mod solver;
pub mod upper_bound;

pub use error::{Error, Result};
pub use model::{
    Assignment, DiagramBuilder, InfluenceDiagram, PartialOrder, VarId, VarKind, Variable, Violation,
};
pub use potential::Potential;
