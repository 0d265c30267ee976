//! Ranking and binary alignment metrics.
//!
//! Ranks are 1-based. A gold target missing from a ranked list (or a query
//! with no list at all) contributes 0 to every ranking metric. Recall of a
//! binary prediction set is reported as the hit@1 equivalent.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::hash::Hash;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub hits_at: BTreeMap<usize, f64>,
    pub mrr: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// Number of gold pairs evaluated.
    pub evaluated: usize,
    /// Gold sources that had no ranked list.
    pub missing: usize,
}

impl MetricsReport {
    pub fn hit(&self, k: usize) -> Option<f64> {
        self.hits_at.get(&k).copied()
    }

    /// `(name, value)` pairs in a stable order.
    pub fn entries(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = self
            .hits_at
            .iter()
            .map(|(k, v)| (format!("hit@{k}"), *v))
            .collect();
        for (name, v) in [
            ("mrr", self.mrr),
            ("precision", self.precision),
            ("recall", self.recall),
            ("f1", self.f1),
        ] {
            if let Some(v) = v {
                out.push((name.to_owned(), v));
            }
        }
        out.push(("evaluated".to_owned(), self.evaluated as f64));
        out
    }

    /// Flat `metric<TAB>value` lines.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        for (name, v) in self.entries() {
            writeln!(w, "{name}\t{v}")?;
        }
        Ok(())
    }

    /// Combines a ranking report with the binary metrics of another.
    pub fn merged_with_binary(mut self, binary: &MetricsReport) -> Self {
        self.precision = binary.precision;
        self.recall = binary.recall;
        self.f1 = binary.f1;
        self
    }
}

/// Hit@k and MRR of ranked candidate lists against gold pairs.
pub fn evaluate_ranking<K>(ranked: &HashMap<K, Vec<K>>, gold: &[(K, K)], ks: &[usize]) -> MetricsReport
where
    K: Eq + Hash + std::fmt::Debug,
{
    let mut hits: BTreeMap<usize, usize> = ks.iter().map(|&k| (k, 0)).collect();
    let mut reciprocal = 0.0;
    let mut missing = 0;
    for (source, target) in gold {
        let Some(list) = ranked.get(source) else {
            missing += 1;
            continue;
        };
        if let Some(pos) = list.iter().position(|c| c == target) {
            let rank = pos + 1;
            reciprocal += 1.0 / rank as f64;
            for (&k, count) in hits.iter_mut() {
                if rank <= k {
                    *count += 1;
                }
            }
        }
    }
    if missing > 0 {
        log::warn!("{missing} gold sources have no ranked candidates");
    }
    let n = gold.len();
    let ratio = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    MetricsReport {
        hits_at: hits.into_iter().map(|(k, c)| (k, ratio(c))).collect(),
        mrr: Some(if n == 0 { 0.0 } else { reciprocal / n as f64 }),
        evaluated: n,
        missing,
        ..Default::default()
    }
}

/// Precision, recall and F1 over exact pair matches.
pub fn evaluate_binary<K>(predicted: &[(K, K)], gold: &[(K, K)]) -> MetricsReport
where
    K: Eq + Hash + Clone,
{
    let gold_set: HashSet<(K, K)> = gold.iter().cloned().collect();
    let predicted_set: HashSet<(K, K)> = predicted.iter().cloned().collect();
    let correct = predicted_set.intersection(&gold_set).count();
    let precision = if predicted_set.is_empty() {
        0.0
    } else {
        correct as f64 / predicted_set.len() as f64
    };
    let recall = if gold_set.is_empty() {
        0.0
    } else {
        correct as f64 / gold_set.len() as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let mut hits_at = BTreeMap::new();
    hits_at.insert(1, recall);
    MetricsReport {
        hits_at,
        mrr: None,
        precision: Some(precision),
        recall: Some(recall),
        f1: Some(f1),
        evaluated: gold_set.len(),
        missing: 0,
    }
}
