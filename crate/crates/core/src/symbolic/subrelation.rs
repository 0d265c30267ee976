use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kg::{DirectedRelation, EntityId, KnowledgeGraph, KnowledgeGraphPair, Triple};
use crate::symbolic::TruthScoreTable;

/// Smoothing and pruning applied when re-estimating subrelation probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubrelationOptions {
    /// Added to the denominator.
    pub smoothing: f64,
    /// Entries whose numerator falls below this are dropped.
    pub min_support: f64,
}

impl Default for SubrelationOptions {
    fn default() -> Self {
        SubrelationOptions {
            smoothing: 1e-9,
            min_support: 1e-6,
        }
    }
}

/// Directed subrelation probabilities between the two graphs.
///
/// `source_in_target[(d, d')]` is the probability that source relation `d`
/// is a subrelation of target relation `d'`; `target_in_source[(d', d)]`
/// the converse. Absent entries read as 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubrelationTable {
    source_in_target: HashMap<(DirectedRelation, DirectedRelation), f64>,
    target_in_source: HashMap<(DirectedRelation, DirectedRelation), f64>,
}

impl SubrelationTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// p(source `d` ⊆ target `d_target`).
    #[inline]
    pub fn source_in_target(&self, d: DirectedRelation, d_target: DirectedRelation) -> f64 {
        self.source_in_target
            .get(&(d, d_target))
            .copied()
            .unwrap_or(0.0)
    }

    /// p(target `d_target` ⊆ source `d`).
    #[inline]
    pub fn target_in_source(&self, d_target: DirectedRelation, d: DirectedRelation) -> f64 {
        self.target_in_source
            .get(&(d_target, d))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn set_source_in_target(&mut self, d: DirectedRelation, d_target: DirectedRelation, p: f64) {
        assert!((0.0..=1.0).contains(&p), "probability out of range: {p}");
        self.source_in_target.insert((d, d_target), p);
    }

    pub fn set_target_in_source(&mut self, d_target: DirectedRelation, d: DirectedRelation, p: f64) {
        assert!((0.0..=1.0).contains(&p), "probability out of range: {p}");
        self.target_in_source.insert((d_target, d), p);
    }

    /// Sets both orientations of a relation pair and of its inverse pair.
    pub fn set_symmetric(&mut self, d: DirectedRelation, d_target: DirectedRelation, p: f64) {
        self.set_source_in_target(d, d_target, p);
        self.set_source_in_target(d.inverse(), d_target.inverse(), p);
        self.set_target_in_source(d_target, d, p);
        self.set_target_in_source(d_target.inverse(), d.inverse(), p);
    }

    pub fn is_empty(&self) -> bool {
        self.source_in_target.is_empty() && self.target_in_source.is_empty()
    }

    pub fn len(&self) -> usize {
        self.source_in_target.len() + self.target_in_source.len()
    }

    /// `(source relation, target relation, p)` sorted by key.
    pub fn source_in_target_entries(&self) -> Vec<(DirectedRelation, DirectedRelation, f64)> {
        let mut v: Vec<_> = self
            .source_in_target
            .iter()
            .map(|(&(a, b), &p)| (a, b, p))
            .collect();
        v.sort_by_key(|a| (a.0, a.1));
        v
    }

    /// `(target relation, source relation, p)` sorted by key.
    pub fn target_in_source_entries(&self) -> Vec<(DirectedRelation, DirectedRelation, f64)> {
        let mut v: Vec<_> = self
            .target_in_source
            .iter()
            .map(|(&(a, b), &p)| (a, b, p))
            .collect();
        v.sort_by_key(|a| (a.0, a.1));
        v
    }

    /// Writes `r<TAB>r'<TAB>p` lines for the source-in-target direction.
    pub fn write_source_in_target_tsv<W: Write>(&self, pair: &KnowledgeGraphPair, mut w: W) -> Result<()> {
        for (a, b, p) in self.source_in_target_entries() {
            writeln!(w, "{}\t{}\t{}", pair.source.directed_label(a), pair.target.directed_label(b), p)?;
        }
        Ok(())
    }

    /// Writes `r'<TAB>r<TAB>p` lines for the target-in-source direction.
    pub fn write_target_in_source_tsv<W: Write>(&self, pair: &KnowledgeGraphPair, mut w: W) -> Result<()> {
        for (a, b, p) in self.target_in_source_entries() {
            writeln!(w, "{}\t{}\t{}", pair.target.directed_label(a), pair.source.directed_label(b), p)?;
        }
        Ok(())
    }
}

/// Re-estimates subrelation probabilities from (pseudo-)labels.
///
/// For every triple `(h, d, t)` of a source relation, the numerator gains
/// `1 - prod over (h', d', t') of (1 - v(h,h') v(t,t'))` and the denominator
/// `1 - prod over all h', t' of (1 - v(h,h') v(t,t'))`. The denominator
/// product only visits labelled pairs, since unlabelled ones contribute a
/// factor of 1. The converse direction repeats this with the graphs
/// swapped.
pub fn update_subrelation_probs(
    pair: &KnowledgeGraphPair,
    labels: &TruthScoreTable,
    options: &SubrelationOptions,
) -> SubrelationTable {
    let forward = estimate(&pair.source, &pair.target, labels, options);
    let transposed = labels.transposed();
    let backward = estimate(&pair.target, &pair.source, &transposed, options);
    SubrelationTable {
        source_in_target: forward,
        target_in_source: backward,
    }
}

fn lookup(row: &[(EntityId, f64)], e: EntityId) -> f64 {
    row.binary_search_by_key(&e, |&(x, _)| x)
        .map(|i| row[i].1)
        .unwrap_or(0.0)
}

fn estimate(
    from: &KnowledgeGraph,
    to: &KnowledgeGraph,
    labels: &TruthScoreTable,
    options: &SubrelationOptions,
) -> HashMap<(DirectedRelation, DirectedRelation), f64> {
    let mut by_relation: Vec<Vec<Triple>> = vec![Vec::new(); from.num_relations()];
    for t in from.triples() {
        by_relation[t.relation.index()].push(*t);
    }

    // Only forward source relations are estimated; the inverse pair
    // (r^-1, d'^-1) sums the same terms, so it takes the same value.
    let per_relation: Vec<Vec<(DirectedRelation, DirectedRelation, f64)>> = by_relation
        .par_iter()
        .map(|triples| {
            let mut numerators: HashMap<DirectedRelation, f64> = HashMap::new();
            let mut denominator = 0.0;
            let mut products: HashMap<DirectedRelation, f64> = HashMap::new();
            for triple in triples {
                let head_row = labels.row(triple.head);
                let tail_row = labels.row(triple.tail);
                if head_row.is_empty() || tail_row.is_empty() {
                    continue;
                }
                let mut all = 1.0;
                for &(_, vh) in head_row {
                    for &(_, vt) in tail_row {
                        all *= 1.0 - vh * vt;
                    }
                }
                denominator += 1.0 - all;

                products.clear();
                for &(h2, vh) in head_row {
                    for &(d2, t2) in to.neighbors_of(h2) {
                        let vt = lookup(tail_row, t2);
                        if vt > 0.0 {
                            *products.entry(d2).or_insert(1.0) *= 1.0 - vh * vt;
                        }
                    }
                }
                for (&d2, &prod) in &products {
                    *numerators.entry(d2).or_insert(0.0) += 1.0 - prod;
                }
            }
            let Some(first) = triples.first() else {
                return Vec::new();
            };
            let d = DirectedRelation::forward(first.relation);
            let mut out: Vec<_> = numerators
                .into_iter()
                .filter(|&(_, num)| num > 0.0 && num >= options.min_support)
                .map(|(d2, num)| (d, d2, (num / (denominator + options.smoothing)).min(1.0)))
                .collect();
            out.sort_by_key(|a| a.1);
            out
        })
        .collect();

    let mut table = HashMap::new();
    for (d, d2, p) in per_relation.into_iter().flatten() {
        table.insert((d, d2), p);
        table.insert((d.inverse(), d2.inverse()), p);
    }
    table
}
