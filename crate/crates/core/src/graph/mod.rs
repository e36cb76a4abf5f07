//! Graph algebra: DAGs, CPDAGs, orientation rules, extensions, distances and export.

mod cpdag;
mod dag;
mod export;

pub use cpdag::{consistent_extension, cpdag_of, meek_closure, shd, v_structures, Cpdag, Extension, PairStatus};
pub use dag::{is_acyclic, Dag};
pub use export::{cpdag_to_text, dag_to_dot, parse_cpdag_text, to_dot, EdgeList};
