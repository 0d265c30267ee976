use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraphPair};
use crate::symbolic::{FunctionalityTable, SubrelationTable, TruthScoreTable};

/// Knobs for entity-score sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationOptions {
    /// Lazy-retention factor: between sweeps a pair survives only if its
    /// score is at least `retention` times the best score of its source and
    /// of its target. 1 keeps mutual argmaxes, 0 keeps everything.
    pub retention: f64,
    /// Skip candidates whose source or target already takes part in an
    /// observed pair.
    pub exclude_observed: bool,
    /// Worker threads for a sweep; 0 uses the global rayon pool.
    pub workers: usize,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        PropagationOptions {
            retention: 1.0,
            exclude_observed: true,
            workers: 0,
        }
    }
}

pub(crate) fn with_workers<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        return job();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(job),
        Err(err) => {
            log::warn!("falling back to the global pool: {err}");
            job()
        }
    }
}

/// One synchronous sweep of noisy-OR evidence aggregation.
///
/// For every candidate `(e, e')` the new score is
/// `1 - prod (1 - eta(d) p(d ⊆ d') prev(n, n')) (1 - eta'(d') p(d' ⊆ d) prev(n, n'))`
/// over all edge pairs `e -[d]-> n`, `e' -[d']-> n'` where `(n, n')` has a
/// positive score in `prev`. Edges run in both triple directions. Only
/// `prev` is read, so rows can be computed in any order or in parallel
/// and the result is identical. Pinned pairs stay at 1.
pub fn propagate_entity_scores(
    pair: &KnowledgeGraphPair,
    eta_source: &FunctionalityTable,
    eta_target: &FunctionalityTable,
    psub: &SubrelationTable,
    prev: &TruthScoreTable,
    options: &PropagationOptions,
) -> TruthScoreTable {
    let source = &pair.source;
    let target = &pair.target;
    let exclude = options.exclude_observed;

    let score_row = |e: EntityId| -> Vec<(EntityId, f64)> {
        if exclude && prev.is_pinned_source(e) {
            return Vec::new();
        }
        let mut products: HashMap<EntityId, f64> = HashMap::new();
        for &(d, n) in source.neighbors_of(e) {
            let eta_d = eta_source.toward(d);
            for &(n2, p) in prev.row(n) {
                // n2 -[d2]-> e2 in the target graph means e2 -[d2^-1]-> n2
                for &(d2, e2) in target.neighbors_of(n2) {
                    if exclude && prev.is_pinned_target(e2) {
                        continue;
                    }
                    let d_t = d2.inverse();
                    let a = eta_d * psub.source_in_target(d, d_t) * p;
                    let b = eta_target.toward(d_t) * psub.target_in_source(d_t, d) * p;
                    if a == 0.0 && b == 0.0 {
                        continue;
                    }
                    *products.entry(e2).or_insert(1.0) *= (1.0 - a) * (1.0 - b);
                }
            }
        }
        let mut row: Vec<(EntityId, f64)> = products
            .into_iter()
            .map(|(t, prod)| (t, 1.0 - prod))
            .filter(|&(_, v)| v > 0.0)
            .collect();
        row.sort_unstable_by_key(|&(t, _)| t);
        row
    };

    let rows: Vec<Vec<(EntityId, f64)>> = with_workers(options.workers, || {
        (0..source.num_entities() as u32)
            .into_par_iter()
            .map(|s| score_row(EntityId(s)))
            .collect()
    });

    let mut next = prev.fresh_like();
    for (s, row) in rows.into_iter().enumerate() {
        next.replace_row(EntityId(s as u32), row);
    }
    next
}

/// Keeps, for every source and every target, only the pairs within
/// `retention` of that entity's best score; a pair must pass on both sides.
/// Ties are all kept and pinned pairs always survive.
pub fn apply_lazy_retention(table: &TruthScoreTable, retention: f64) -> TruthScoreTable {
    if retention <= 0.0 {
        return table.clone();
    }
    let mut row_max = vec![0.0f64; table.num_sources()];
    let mut col_max = vec![0.0f64; table.num_targets()];
    for (s, t, v) in table.iter() {
        row_max[s.index()] = row_max[s.index()].max(v);
        col_max[t.index()] = col_max[t.index()].max(v);
    }
    let mut out = table.fresh_like();
    for s in 0..table.num_sources() {
        let s = EntityId(s as u32);
        let row: Vec<(EntityId, f64)> = table
            .row(s)
            .iter()
            .copied()
            .filter(|&(t, v)| {
                table.is_pinned(s, t)
                    || (v >= retention * row_max[s.index()] && v >= retention * col_max[t.index()])
            })
            .collect();
        out.replace_row(s, row);
    }
    out
}

/// Runs `sweeps` propagation steps from `seeds`, applying lazy retention
/// after each. `sweeps` unit steps realise rules of length up to `sweeps`.
pub fn run_symbolic_inference(
    pair: &KnowledgeGraphPair,
    eta_source: &FunctionalityTable,
    eta_target: &FunctionalityTable,
    psub: &SubrelationTable,
    seeds: &TruthScoreTable,
    sweeps: usize,
    options: &PropagationOptions,
) -> Result<TruthScoreTable> {
    if sweeps == 0 {
        return Err(Error::Config("rule length (sweeps) must be at least 1".into()));
    }
    let mut current = seeds.clone();
    for _ in 0..sweeps {
        let next = propagate_entity_scores(pair, eta_source, eta_target, psub, &current, options);
        current = apply_lazy_retention(&next, options.retention);
    }
    Ok(current)
}

/// Thresholded view of a truth table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SymbolicLabels {
    /// Non-pinned pairs scoring strictly above the threshold.
    pub positives: Vec<(EntityId, EntityId, f64)>,
    /// Scored non-pinned pairs at or below the threshold, usable as hard
    /// negatives.
    pub negatives: Vec<(EntityId, EntityId, f64)>,
}

pub fn extract_positive_pairs(scores: &TruthScoreTable, delta: f64) -> SymbolicLabels {
    let mut labels = SymbolicLabels::default();
    for (s, t, v) in scores.iter() {
        if scores.is_pinned(s, t) {
            continue;
        }
        if v > delta {
            labels.positives.push((s, t, v));
        } else {
            labels.negatives.push((s, t, v));
        }
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{DirectedRelation, KnowledgeGraph, RelationId};
    use crate::symbolic::compute_functionalities;

    fn no_exclusion() -> PropagationOptions {
        PropagationOptions {
            retention: 1.0,
            exclude_observed: false,
            workers: 0,
        }
    }

    /// Source a -r-> b, target a' -r'-> b', with (b, b') at score 1.
    fn one_edge() -> (KnowledgeGraphPair, TruthScoreTable) {
        let pair = KnowledgeGraphPair::new(
            KnowledgeGraph::load_graph([("a", "r", "b")]),
            KnowledgeGraph::load_graph([("a'", "r'", "b'")]),
        );
        let prev = TruthScoreTable::with_observed(2, 2, &[(EntityId(1), EntityId(1))]);
        (pair, prev)
    }

    #[test]
    fn perfect_evidence_scores_one() {
        let (pair, prev) = one_edge();
        let eta = compute_functionalities(&pair.source);
        let eta2 = compute_functionalities(&pair.target);
        let mut psub = SubrelationTable::new();
        let r = DirectedRelation::forward(RelationId(0));
        psub.set_symmetric(r, r, 1.0);
        let next = propagate_entity_scores(&pair, &eta, &eta2, &psub, &prev, &no_exclusion());
        assert_eq!(next.get(EntityId(0), EntityId(0)), 1.0);
        assert_eq!(next.get(EntityId(1), EntityId(1)), 1.0);
    }

    #[test]
    fn half_functional_relation() {
        // Two heads share tail b, so eta(r^-1) = 1/2 in both graphs.
        let pair = KnowledgeGraphPair::new(
            KnowledgeGraph::load_graph([("a", "r", "b"), ("c", "r", "b")]),
            KnowledgeGraph::load_graph([("a'", "r'", "b'"), ("c'", "r'", "b'")]),
        );
        let eta = compute_functionalities(&pair.source);
        let eta2 = compute_functionalities(&pair.target);
        let r = DirectedRelation::forward(RelationId(0));
        assert_eq!(eta.toward(r), 0.5);
        let mut psub = SubrelationTable::new();
        psub.set_symmetric(r, r, 0.8);
        let b = (pair.source.entity_id("b").unwrap(), pair.target.entity_id("b'").unwrap());
        let prev = TruthScoreTable::with_observed(3, 3, &[b]);
        let next = propagate_entity_scores(&pair, &eta, &eta2, &psub, &prev, &no_exclusion());
        let a = (pair.source.entity_id("a").unwrap(), pair.target.entity_id("a'").unwrap());
        assert!((next.get(a.0, a.1) - 0.64).abs() < 1e-15);
    }

    #[test]
    fn two_independent_evidence_terms() {
        // a -r-> b and a -s-> c, mirrored; (b,b') and (c,c') known. Each
        // term contributes (1 - 0.4)^2 with eta = 0.5 and p = 0.8.
        let src = KnowledgeGraph::load_graph([
            ("a", "r", "b"),
            ("x", "r", "b"),
            ("a", "s", "c"),
            ("y", "s", "c"),
        ]);
        let tgt = KnowledgeGraph::load_graph([
            ("a'", "r'", "b'"),
            ("x'", "r'", "b'"),
            ("a'", "s'", "c'"),
            ("y'", "s'", "c'"),
        ]);
        let pair = KnowledgeGraphPair::new(src, tgt);
        let eta = compute_functionalities(&pair.source);
        let eta2 = compute_functionalities(&pair.target);
        let mut psub = SubrelationTable::new();
        for r in 0..2 {
            let d = DirectedRelation::forward(RelationId(r));
            psub.set_symmetric(d, d, 0.8);
        }
        let id = |l: &str| pair.source.entity_id(l).unwrap();
        let id2 = |l: &str| pair.target.entity_id(l).unwrap();
        let prev = TruthScoreTable::with_observed(
            5,
            5,
            &[(id("b"), id2("b'")), (id("c"), id2("c'"))],
        );
        let next = propagate_entity_scores(&pair, &eta, &eta2, &psub, &prev, &no_exclusion());
        let expected = 1.0 - 0.36 * 0.36;
        assert!((next.get(id("a"), id2("a'")) - expected).abs() < 1e-12);
    }

    #[test]
    fn no_evidence_without_subrelations() {
        let (pair, prev) = one_edge();
        let eta = compute_functionalities(&pair.source);
        let next = propagate_entity_scores(
            &pair,
            &eta,
            &eta,
            &SubrelationTable::new(),
            &prev,
            &no_exclusion(),
        );
        assert_eq!(next.len(), 1);
    }

    #[test]
    fn retention_keeps_mutual_best_and_ties() {
        let mut t = TruthScoreTable::new(2, 3);
        t.set(EntityId(0), EntityId(0), 0.9);
        t.set(EntityId(0), EntityId(1), 0.9);
        t.set(EntityId(0), EntityId(2), 0.3);
        t.set(EntityId(1), EntityId(2), 0.5);
        t.set(EntityId(1), EntityId(0), 0.95);
        let kept = apply_lazy_retention(&t, 1.0);
        let pairs: Vec<_> = kept.iter().map(|(s, t, _)| (s.0, t.0)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(apply_lazy_retention(&t, 0.0), t);
    }

    #[test]
    fn zero_sweeps_rejected() {
        let (pair, prev) = one_edge();
        let eta = compute_functionalities(&pair.source);
        let res = run_symbolic_inference(
            &pair,
            &eta,
            &eta,
            &SubrelationTable::new(),
            &prev,
            0,
            &PropagationOptions::default(),
        );
        assert!(matches!(res, Err(Error::Config(_))));
    }

    #[test]
    fn no_seeds_gives_empty_table() {
        let (pair, _) = one_edge();
        let eta = compute_functionalities(&pair.source);
        let out = run_symbolic_inference(
            &pair,
            &eta,
            &eta,
            &SubrelationTable::new(),
            &TruthScoreTable::for_pair(&pair),
            1,
            &PropagationOptions::default(),
        )
        .unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn threshold_is_strict() {
        let mut t = TruthScoreTable::new(2, 2);
        t.set(EntityId(0), EntityId(0), 0.99);
        t.set(EntityId(1), EntityId(1), 0.5);
        let labels = extract_positive_pairs(&t, 0.9);
        assert_eq!(labels.positives, vec![(EntityId(0), EntityId(0), 0.99)]);
        assert_eq!(labels.negatives, vec![(EntityId(1), EntityId(1), 0.5)]);
        let labels = extract_positive_pairs(&t, 0.99);
        assert!(labels.positives.is_empty());
        assert!(extract_positive_pairs(&TruthScoreTable::new(1, 1), 0.5)
            .positives
            .is_empty());
    }
}
