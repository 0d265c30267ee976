//! Embedding-based scorer standing in for the variational distribution.
//!
//! Any type implementing [`AlignmentModel`] can drive the EM loop. The
//! bundled [`NeuralModel`] places both graphs' entities in one unit-sphere
//! space, pulls labelled pairs together with a margin ranking loss and keeps
//! relational structure with a translational triple loss.

mod checkpoint;
mod matching;
mod model;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kg::{EntityId, EntityPair, KnowledgeGraphPair};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use matching::{greedy_one_to_one, rank_candidates};
pub use model::NeuralModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub dim: usize,
    pub learning_rate: f64,
    /// Margin for both the alignment and the triple ranking losses.
    pub margin: f64,
    /// Negatives sampled per positive pair and per triple.
    pub negatives: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Weight of the translational triple loss.
    pub triple_weight: f64,
    /// Weight of observed (seed) pairs in the alignment loss.
    pub observed_weight: f64,
    /// Weight of symbolically inferred pairs in the alignment loss.
    pub inferred_weight: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            dim: 64,
            learning_rate: 0.05,
            margin: 0.5,
            negatives: 5,
            epochs: 30,
            seed: 7,
            triple_weight: 1.0,
            observed_weight: 1.0,
            inferred_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelOrigin {
    Observed,
    Symbolic,
    Neural,
}

impl LabelOrigin {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelOrigin::Observed => "observed",
            LabelOrigin::Symbolic => "symbolic",
            LabelOrigin::Neural => "neural",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "observed" => Some(LabelOrigin::Observed),
            "symbolic" => Some(LabelOrigin::Symbolic),
            "neural" => Some(LabelOrigin::Neural),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    pub source: EntityId,
    pub target: EntityId,
    pub confidence: f64,
    pub origin: LabelOrigin,
}

/// Labelled pairs fed to training or to subrelation re-estimation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PseudoLabelSet {
    labels: Vec<PseudoLabel>,
}

impl PseudoLabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, source: EntityId, target: EntityId, confidence: f64, origin: LabelOrigin) {
        self.labels.push(PseudoLabel {
            source,
            target,
            confidence,
            origin,
        });
    }

    pub fn extend_from(&mut self, other: &PseudoLabelSet) {
        self.labels.extend_from_slice(&other.labels);
    }

    pub fn labels(&self) -> &[PseudoLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = EntityPair> + '_ {
        self.labels.iter().map(|l| (l.source, l.target))
    }

    pub fn with_origin(&self, origin: LabelOrigin) -> impl Iterator<Item = &PseudoLabel> + '_ {
        self.labels.iter().filter(move |l| l.origin == origin)
    }

    /// True iff no entity occurs twice among the labels of `origin`.
    pub fn is_one_to_one(&self, origin: LabelOrigin) -> bool {
        let mut sources = std::collections::HashSet::new();
        let mut targets = std::collections::HashSet::new();
        self.with_origin(origin)
            .all(|l| sources.insert(l.source) && targets.insert(l.target))
    }
}

/// Per-epoch mean loss of one `train` call.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epoch_losses: Vec<f64>,
}

impl TrainingReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

/// Contract between the EM loop and a neural scorer.
pub trait AlignmentModel: Send + Sync {
    fn init(pair: &KnowledgeGraphPair, hyperparams: &Hyperparams) -> Result<Self>
    where
        Self: Sized;

    /// Fits the model to `positives`, drawing part of its negatives from
    /// `hard_negatives`. Fails on an empty positive set.
    fn train(
        &mut self,
        pair: &KnowledgeGraphPair,
        positives: &PseudoLabelSet,
        hard_negatives: &[EntityPair],
    ) -> Result<TrainingReport>;

    /// Similarity in [-1, 1].
    fn score(&self, source: EntityId, target: EntityId) -> f64;

    fn num_targets(&self) -> usize;

    /// Digest of all trainable parameters.
    fn parameter_digest(&self) -> u64;

    fn rank(&self, source: EntityId, candidates: &[EntityId]) -> Vec<(EntityId, f64)> {
        rank_candidates(self, source, candidates)
    }

    /// The `k` best-scoring admissible targets of `source`, best first,
    /// ties by ascending id.
    fn nearest_targets(
        &self,
        source: EntityId,
        k: usize,
        admissible: &(dyn Fn(EntityId) -> bool + Sync),
    ) -> Vec<(EntityId, f64)> {
        let mut scored: Vec<(EntityId, f64)> = (0..self.num_targets() as u32)
            .map(EntityId)
            .filter(|&t| admissible(t))
            .map(|t| (t, self.score(source, t)))
            .collect();
        let cmp = |a: &(EntityId, f64), b: &(EntityId, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
        if scored.len() > k {
            scored.select_nth_unstable_by(k, cmp);
            scored.truncate(k);
        }
        scored.sort_by(cmp);
        scored
    }
}

/// Maps a similarity in [-1, 1] to a probability in [0, 1].
#[inline]
pub fn similarity_to_probability(score: f64) -> f64 {
    ((score + 1.0) / 2.0).clamp(0.0, 1.0)
}
