//! Probabilistic rule reasoning over a pair of graphs.
//!
//! Long cross-graph rules are never grounded explicitly. Instead, unit-length
//! rules are applied in synchronous sweeps: after `L` sweeps from the
//! observed pairs, every pair derivable through equal-length relation paths
//! of length at most `L` carries a score. Rule weights reduce to relation
//! functionalities (fixed) and subrelation probabilities (re-estimated from
//! labels).

mod functionality;
mod propagate;
mod subrelation;
mod truth;

pub use functionality::{compute_functionalities, FunctionalityTable};
pub use propagate::{
    apply_lazy_retention, extract_positive_pairs, propagate_entity_scores,
    run_symbolic_inference, PropagationOptions, SymbolicLabels,
};
pub(crate) use propagate::with_workers;
pub use subrelation::{update_subrelation_probs, SubrelationOptions, SubrelationTable};
pub use truth::TruthScoreTable;
