//! Discrete structural causal models over a supplied DAG.

mod graph;
mod model;

pub use graph::{load_graph, parse_graph, CausalGraph};
pub use model::{fit_cpts, Cpt, Roles, ScmModel, DEFAULT_ALPHA};
