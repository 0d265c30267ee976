//! Variational EM loop coupling the symbolic engine and the neural scorer.
//!
//! * E-step: rule weights are frozen. Symbolic inference from the observed
//!   pairs yields confident positives (score above `delta`) and a pool of
//!   hard negatives; the neural model is trained on observed plus inferred
//!   positives.
//! * M-step: the neural model is frozen. It proposes one-to-one
//!   pseudo-labels for the hidden pairs, and subrelation probabilities are
//!   re-estimated from observed plus pseudo-labelled pairs.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, EntityPair, KnowledgeGraphPair};
use crate::neural::{
    greedy_one_to_one, similarity_to_probability, AlignmentModel, Hyperparams, LabelOrigin,
    NeuralModel, PseudoLabelSet,
};
use crate::symbolic::{
    compute_functionalities, extract_positive_pairs, run_symbolic_inference,
    update_subrelation_probs, with_workers, FunctionalityTable, PropagationOptions,
    SubrelationOptions, SubrelationTable, SymbolicLabels, TruthScoreTable,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    /// Symbolic scores strictly above this become positive labels.
    pub delta: f64,
    pub iterations: usize,
    /// Sweeps per symbolic inference, i.e. the maximum rule length.
    pub rule_length: usize,
    /// Skip the neural model entirely (pure symbolic baseline).
    pub symbolic_only: bool,
    /// Nearest targets per unlabelled source considered for pseudo-labels.
    pub candidate_pool: usize,
    /// Neural pseudo-labels need a mapped probability strictly above this.
    pub confidence_floor: f64,
    /// Maximum neural pseudo-labels per M-step; defaults to the number of
    /// unlabelled source entities.
    pub pseudo_label_budget: Option<usize>,
    /// Stop once reference hit@1 improves by less than 1e-4 over two
    /// iterations.
    pub plateau_stop: bool,
    /// Length of each fused ranked candidate list.
    pub ranked_depth: usize,
    /// Seed for the neural model; overrides `neural.seed`.
    pub seed: u64,
    pub propagation: PropagationOptions,
    pub subrelation: SubrelationOptions,
    pub neural: Hyperparams,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            delta: 0.9,
            iterations: 5,
            rule_length: 2,
            symbolic_only: false,
            candidate_pool: 50,
            confidence_floor: 0.5,
            pseudo_label_budget: None,
            plateau_stop: false,
            ranked_depth: 50,
            seed: 7,
            propagation: PropagationOptions::default(),
            subrelation: SubrelationOptions::default(),
            neural: Hyperparams::default(),
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.iterations == 0 {
            return fail("iterations must be at least 1".into());
        }
        if self.rule_length == 0 {
            return fail("rule length must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.propagation.retention) {
            return fail(format!("retention must lie in [0, 1], got {}", self.propagation.retention));
        }
        if !(0.0..=1.0).contains(&self.confidence_floor) {
            return fail(format!("confidence floor must lie in [0, 1], got {}", self.confidence_floor));
        }
        if self.subrelation.smoothing < 0.0 || self.subrelation.min_support < 0.0 {
            return fail("subrelation smoothing and support must be non-negative".into());
        }
        if self.ranked_depth == 0 {
            return fail("ranked depth must be at least 1".into());
        }
        if !self.symbolic_only {
            if self.neural.dim < 2 {
                return fail(format!("embedding dimension must be at least 2, got {}", self.neural.dim));
            }
            if !(self.neural.learning_rate > 0.0) {
                return fail("learning rate must be positive".into());
            }
        }
        Ok(())
    }

    fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            seed: self.seed,
            ..self.neural.clone()
        }
    }
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Symbolic positives produced in the E-step.
    pub inferred_pairs: usize,
    /// Share of inferred pairs matching the reference alignment, among
    /// those whose source the reference covers.
    pub inferred_precision: Option<f64>,
    pub hard_negatives: usize,
    pub neural_loss: Option<f64>,
    pub pseudo_labels: usize,
    pub pseudo_label_precision: Option<f64>,
    pub subrelation_entries: usize,
    /// Neural hit@1 on the reference alignment after the E-step.
    pub reference_hit1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct EmState<M = NeuralModel> {
    pub eta_source: FunctionalityTable,
    pub eta_target: FunctionalityTable,
    pub psub: SubrelationTable,
    pub truth_scores: TruthScoreTable,
    /// Observed pairs, pinned at 1.
    pub seeds: TruthScoreTable,
    pub model: Option<M>,
    pub iteration: usize,
    pub history: Vec<IterationRecord>,
    /// Symbolic labels from the latest E-step.
    pub symbolic: SymbolicLabels,
    /// Neural pseudo-labels from the latest M-step.
    pub pseudo_labels: PseudoLabelSet,
    reference: Option<HashMap<EntityId, EntityId>>,
    pending: Option<IterationRecord>,
}

fn precision_against(
    reference: &HashMap<EntityId, EntityId>,
    pairs: impl Iterator<Item = EntityPair>,
) -> Option<f64> {
    let mut covered = 0usize;
    let mut correct = 0usize;
    for (s, t) in pairs {
        if let Some(&gold) = reference.get(&s) {
            covered += 1;
            correct += usize::from(gold == t);
        }
    }
    (covered > 0).then(|| correct as f64 / covered as f64)
}

impl<M: AlignmentModel> EmState<M> {
    /// Computes functionalities, pins the observed pairs, bootstraps
    /// subrelation probabilities from them and initialises the model.
    pub fn initialize(pair: &KnowledgeGraphPair, observed: &[EntityPair], config: &EmConfig) -> Result<Self> {
        config.validate()?;
        let seeds = TruthScoreTable::with_observed(
            pair.source.num_entities(),
            pair.target.num_entities(),
            observed,
        );
        let psub = with_workers(config.propagation.workers, || {
            update_subrelation_probs(pair, &seeds, &config.subrelation)
        });
        let model = if config.symbolic_only {
            None
        } else {
            Some(M::init(pair, &config.hyperparams())?)
        };
        Ok(EmState {
            eta_source: compute_functionalities(&pair.source),
            eta_target: compute_functionalities(&pair.target),
            psub,
            truth_scores: seeds.clone(),
            seeds,
            model,
            iteration: 0,
            history: Vec::new(),
            symbolic: SymbolicLabels::default(),
            pseudo_labels: PseudoLabelSet::new(),
            reference: None,
            pending: None,
        })
    }

    /// Gold pairs used only for diagnostics in the history.
    pub fn set_reference(&mut self, reference: &[EntityPair]) {
        self.reference = Some(reference.iter().copied().collect());
    }

    pub fn observed(&self) -> impl Iterator<Item = EntityPair> + '_ {
        self.seeds.pinned()
    }

    fn unlabeled_sources(&self) -> Vec<EntityId> {
        (0..self.seeds.num_sources() as u32)
            .map(EntityId)
            .filter(|&s| !self.seeds.is_pinned_source(s))
            .collect()
    }

    fn run_inference(&self, pair: &KnowledgeGraphPair, config: &EmConfig) -> Result<TruthScoreTable> {
        with_workers(config.propagation.workers, || {
            run_symbolic_inference(
                pair,
                &self.eta_source,
                &self.eta_target,
                &self.psub,
                &self.seeds,
                config.rule_length,
                &config.propagation,
            )
        })
    }

    /// Inference with frozen rule weights, then neural training on observed
    /// and inferred positives.
    pub fn e_step(&mut self, pair: &KnowledgeGraphPair, config: &EmConfig) -> Result<()> {
        config.validate()?;
        let truth = self.run_inference(pair, config)?;
        let labels = extract_positive_pairs(&truth, config.delta);

        let mut record = IterationRecord {
            iteration: self.iteration + 1,
            inferred_pairs: labels.positives.len(),
            hard_negatives: labels.negatives.len(),
            ..Default::default()
        };
        if let Some(reference) = &self.reference {
            record.inferred_precision =
                precision_against(reference, labels.positives.iter().map(|&(s, t, _)| (s, t)));
        }

        if let Some(model) = self.model.as_mut() {
            let mut positives = PseudoLabelSet::new();
            for (s, t) in self.seeds.pinned() {
                positives.push(s, t, 1.0, LabelOrigin::Observed);
            }
            for &(s, t, v) in &labels.positives {
                positives.push(s, t, v, LabelOrigin::Symbolic);
            }
            let negatives: Vec<EntityPair> = labels.negatives.iter().map(|&(s, t, _)| (s, t)).collect();
            let report = model.train(pair, &positives, &negatives)?;
            record.neural_loss = report.final_loss();
        }

        self.truth_scores = truth;
        self.symbolic = labels;
        if let (Some(reference), Some(model)) = (&self.reference, &self.model) {
            record.reference_hit1 = Some(reference_hit1(model, &self.seeds, reference));
        }
        self.pending = Some(record);
        Ok(())
    }

    /// Pseudo-labels from the frozen model, then subrelation re-estimation.
    pub fn m_step(&mut self, pair: &KnowledgeGraphPair, config: &EmConfig) -> Result<()> {
        config.validate()?;
        let pseudo = match &self.model {
            Some(model) => self.neural_pseudo_labels(model, config),
            None => {
                // symbolic-only mode labels with its own one-to-one positives
                greedy_one_to_one(&self.symbolic.positives, None, LabelOrigin::Symbolic)
            }
        };

        let mut labels = self.seeds.clone();
        for l in pseudo.labels() {
            labels.set(l.source, l.target, 1.0);
        }
        self.psub = with_workers(config.propagation.workers, || {
            update_subrelation_probs(pair, &labels, &config.subrelation)
        });

        let mut record = self.pending.take().unwrap_or_else(|| IterationRecord {
            iteration: self.iteration + 1,
            ..Default::default()
        });
        record.pseudo_labels = pseudo.len();
        record.subrelation_entries = self.psub.len();
        if let Some(reference) = &self.reference {
            record.pseudo_label_precision = precision_against(reference, pseudo.pairs());
        }
        self.pseudo_labels = pseudo;
        self.history.push(record);
        self.iteration += 1;
        Ok(())
    }

    fn neural_pseudo_labels(&self, model: &M, config: &EmConfig) -> PseudoLabelSet {
        let unlabeled = self.unlabeled_sources();
        let seeds = &self.seeds;
        let admissible = |t: EntityId| !seeds.is_pinned_target(t);

        let mut candidates: HashSet<EntityPair> = self
            .truth_scores
            .iter()
            .filter(|&(s, t, _)| !seeds.is_pinned_source(s) && !seeds.is_pinned_target(t))
            .map(|(s, t, _)| (s, t))
            .collect();
        let nearest: Vec<Vec<(EntityId, f64)>> = with_workers(config.propagation.workers, || {
            unlabeled
                .par_iter()
                .map(|&s| model.nearest_targets(s, config.candidate_pool, &admissible))
                .collect()
        });
        for (&s, list) in unlabeled.iter().zip(&nearest) {
            candidates.extend(list.iter().map(|&(t, _)| (s, t)));
        }

        let scored: Vec<(EntityId, EntityId, f64)> = candidates
            .into_iter()
            .map(|(s, t)| (s, t, similarity_to_probability(model.score(s, t))))
            .filter(|&(_, _, q)| q > config.confidence_floor)
            .collect();
        let budget = config.pseudo_label_budget.unwrap_or(unlabeled.len());
        greedy_one_to_one(&scored, Some(budget), LabelOrigin::Neural)
    }

    /// Fraction of the latest reference-hit computation; see
    /// [`IterationRecord::reference_hit1`].
    pub fn last_record(&self) -> Option<&IterationRecord> {
        self.history.last()
    }
}

fn reference_hit1<M: AlignmentModel>(
    model: &M,
    seeds: &TruthScoreTable,
    reference: &HashMap<EntityId, EntityId>,
) -> f64 {
    if reference.is_empty() {
        return 0.0;
    }
    let admissible = |t: EntityId| !seeds.is_pinned_target(t);
    let hits: usize = reference
        .par_iter()
        .map(|(&s, &gold)| {
            let top = model.nearest_targets(s, 1, &admissible);
            usize::from(top.first().map(|&(t, _)| t) == Some(gold))
        })
        .sum();
    hits as f64 / reference.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub source: EntityId,
    pub target: EntityId,
    pub score: f64,
    pub origin: LabelOrigin,
}

/// Final joint output.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FusedPredictions {
    /// One-to-one alignment: observed pairs, then symbolic pairs above
    /// `delta`, then neural matches among the remaining entities.
    pub alignments: Vec<Prediction>,
    /// Ranked candidates per unlabelled source, best first.
    pub ranked: BTreeMap<EntityId, Vec<(EntityId, f64)>>,
}

impl FusedPredictions {
    pub fn alignment_pairs(&self) -> Vec<EntityPair> {
        self.alignments.iter().map(|p| (p.source, p.target)).collect()
    }

    pub fn ranked_ids(&self) -> HashMap<EntityId, Vec<EntityId>> {
        self.ranked
            .iter()
            .map(|(&s, list)| (s, list.iter().map(|&(t, _)| t).collect()))
            .collect()
    }
}

/// Combines the symbolic and neural views.
///
/// Symbolic pairs above `delta` (made one-to-one greedily) are trusted
/// first; neural greedy matching completes the alignment over entities left
/// free. Ranked lists come from the neural model, with a symbolic
/// counterpart promoted to rank 1. Without a model the ranking follows the
/// truth scores.
pub fn fuse_predictions<M: AlignmentModel>(state: &EmState<M>, config: &EmConfig) -> FusedPredictions {
    let seeds = &state.seeds;
    let mut alignments: Vec<Prediction> = seeds
        .pinned()
        .map(|(s, t)| Prediction {
            source: s,
            target: t,
            score: 1.0,
            origin: LabelOrigin::Observed,
        })
        .collect();

    let symbolic_candidates: Vec<(EntityId, EntityId, f64)> = extract_positive_pairs(&state.truth_scores, config.delta)
        .positives
        .into_iter()
        .filter(|&(s, t, _)| !seeds.is_pinned_source(s) && !seeds.is_pinned_target(t))
        .collect();
    let symbolic = greedy_one_to_one(&symbolic_candidates, None, LabelOrigin::Symbolic);
    let mut used_sources: HashSet<EntityId> = alignments.iter().map(|p| p.source).collect();
    let mut used_targets: HashSet<EntityId> = alignments.iter().map(|p| p.target).collect();
    let mut confirmed: HashMap<EntityId, (EntityId, f64)> = HashMap::new();
    for l in symbolic.labels() {
        used_sources.insert(l.source);
        used_targets.insert(l.target);
        confirmed.insert(l.source, (l.target, l.confidence));
        alignments.push(Prediction {
            source: l.source,
            target: l.target,
            score: l.confidence,
            origin: LabelOrigin::Symbolic,
        });
    }

    let unlabeled: Vec<EntityId> = (0..seeds.num_sources() as u32)
        .map(EntityId)
        .filter(|&s| !seeds.is_pinned_source(s))
        .collect();
    let admissible = |t: EntityId| !seeds.is_pinned_target(t);

    let mut ranked = BTreeMap::new();
    match &state.model {
        Some(model) => {
            let depth = config.ranked_depth.max(config.candidate_pool);
            let lists: Vec<Vec<(EntityId, f64)>> = with_workers(config.propagation.workers, || {
                unlabeled
                    .par_iter()
                    .map(|&s| model.nearest_targets(s, depth, &admissible))
                    .collect()
            });

            let mut completion = Vec::new();
            for (&s, list) in unlabeled.iter().zip(&lists) {
                if used_sources.contains(&s) {
                    continue;
                }
                for &(t, score) in list.iter().take(config.candidate_pool) {
                    let q = similarity_to_probability(score);
                    if !used_targets.contains(&t) && q > config.confidence_floor {
                        completion.push((s, t, q));
                    }
                }
            }
            for l in greedy_one_to_one(&completion, None, LabelOrigin::Neural).labels() {
                alignments.push(Prediction {
                    source: l.source,
                    target: l.target,
                    score: l.confidence,
                    origin: LabelOrigin::Neural,
                });
            }

            for (&s, list) in unlabeled.iter().zip(lists) {
                let mut list: Vec<(EntityId, f64)> = list
                    .into_iter()
                    .take(config.ranked_depth)
                    .map(|(t, score)| (t, similarity_to_probability(score)))
                    .collect();
                if let Some(&(t, v)) = confirmed.get(&s) {
                    list.retain(|&(x, _)| x != t);
                    list.insert(0, (t, v));
                    list.truncate(config.ranked_depth);
                }
                ranked.insert(s, list);
            }
        }
        None => {
            for &s in &unlabeled {
                let mut list: Vec<(EntityId, f64)> = state
                    .truth_scores
                    .row(s)
                    .iter()
                    .copied()
                    .filter(|&(t, _)| admissible(t))
                    .collect();
                list.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                if let Some(&(t, v)) = confirmed.get(&s) {
                    list.retain(|&(x, _)| x != t);
                    list.insert(0, (t, v));
                }
                list.truncate(config.ranked_depth);
                if !list.is_empty() {
                    ranked.insert(s, list);
                }
            }
        }
    }

    FusedPredictions { alignments, ranked }
}

/// Everything produced by a full run.
#[derive(Debug, Clone)]
pub struct EmRun<M = NeuralModel> {
    pub state: EmState<M>,
    pub predictions: FusedPredictions,
}

/// Alternates E- and M-steps for `config.iterations` rounds, refreshes the
/// symbolic scores with the final rule weights and fuses the predictions.
/// `reference`, when given, only feeds the per-iteration diagnostics and
/// the optional plateau stop.
pub fn run_em<M: AlignmentModel>(
    pair: &KnowledgeGraphPair,
    observed: &[EntityPair],
    config: &EmConfig,
    reference: Option<&[EntityPair]>,
) -> Result<EmRun<M>> {
    let mut state = EmState::<M>::initialize(pair, observed, config)?;
    if let Some(reference) = reference {
        state.set_reference(reference);
    }
    for _ in 0..config.iterations {
        state.e_step(pair, config)?;
        state.m_step(pair, config)?;
        let record = state.history.last().expect("m_step records history");
        log::info!(
            "iteration {}: {} inferred pairs, {} pseudo-labels, {} subrelation entries",
            record.iteration,
            record.inferred_pairs,
            record.pseudo_labels,
            record.subrelation_entries
        );
        if config.plateau_stop && plateaued(&state.history) {
            log::info!("reference hit@1 plateaued; stopping early");
            break;
        }
    }
    state.truth_scores = state.run_inference(pair, config)?;
    let predictions = fuse_predictions(&state, config);
    Ok(EmRun { state, predictions })
}

fn plateaued(history: &[IterationRecord]) -> bool {
    let n = history.len();
    if n < 3 {
        return false;
    }
    match (history[n - 3].reference_hit1, history[n - 1].reference_hit1) {
        (Some(before), Some(now)) => now - before < 1e-4,
        _ => false,
    }
}

/// Convenience wrapper running the bundled [`NeuralModel`].
pub fn run_default(
    pair: &KnowledgeGraphPair,
    observed: &[EntityPair],
    config: &EmConfig,
    reference: Option<&[EntityPair]>,
) -> Result<EmRun<NeuralModel>> {
    run_em::<NeuralModel>(pair, observed, config, reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::KnowledgeGraph;

    fn chain_pair() -> KnowledgeGraphPair {
        KnowledgeGraphPair::new(
            KnowledgeGraph::load_graph([("a", "r", "b"), ("b", "r", "c")]),
            KnowledgeGraph::load_graph([("a'", "r'", "b'"), ("b'", "r'", "c'")]),
        )
    }

    #[test]
    fn config_validation() {
        let mut c = EmConfig::default();
        c.validate().unwrap();
        c.rule_length = 0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = EmConfig {
            delta: 1.0,
            ..EmConfig::default()
        };
        assert!(c.validate().is_err());
        let c = EmConfig {
            iterations: 0,
            ..EmConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn history_tracks_iterations() {
        let pair = chain_pair();
        let observed = [(EntityId(2), EntityId(2))];
        let config = EmConfig {
            iterations: 3,
            neural: Hyperparams {
                dim: 4,
                epochs: 2,
                ..Default::default()
            },
            ..EmConfig::default()
        };
        let run = run_default(&pair, &observed, &config, None).unwrap();
        assert_eq!(run.state.history.len(), 3);
        assert_eq!(run.state.iteration, 3);
        assert!(run
            .predictions
            .alignments
            .iter()
            .any(|p| p.origin == LabelOrigin::Observed && (p.source, p.target) == observed[0]));
    }

    #[test]
    fn symbolic_only_has_no_model() {
        let pair = chain_pair();
        let config = EmConfig {
            iterations: 1,
            symbolic_only: true,
            ..EmConfig::default()
        };
        let run = run_default(&pair, &[(EntityId(2), EntityId(2))], &config, None).unwrap();
        assert!(run.state.model.is_none());
    }
}
