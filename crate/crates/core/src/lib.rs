//! Entity alignment between two knowledge graphs by alternating symbolic
//! rule inference and neural embedding training.

pub mod em;
pub mod error;
pub mod eval;
pub mod explain;
pub mod io;
pub mod kg;
pub mod neural;
pub mod symbolic;
pub mod synthetic;

pub use em::{fuse_predictions, run_default, run_em, EmConfig, EmRun, EmState, FusedPredictions, IterationRecord, Prediction};
pub use error::{Error, Result};
pub use kg::{AlignmentSeed, DirectedRelation, Direction, EntityId, EntityPair, KnowledgeGraph, KnowledgeGraphPair, RelationId};
