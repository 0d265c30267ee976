//! Rule-level explanations for an aligned pair.
//!
//! A rule for `(e, e')` pairs a source path `a -> ... -> e` with a target
//! path `a' -> ... -> e'` of equal length, where `(a, a')` is an anchor
//! alignment. Its confidence is the product over steps of
//! `eta(d) * eta'(d') * (p(d in d') + p(d' in d)) / 2`, with `eta` taken for
//! the step as it points toward the query. Rules with zero confidence are
//! discarded.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::em::Prediction;
use crate::error::{Error, Result};
use crate::kg::{DirectedRelation, EntityId, EntityPair, KnowledgeGraph, KnowledgeGraphPair};
use crate::neural::LabelOrigin;
use crate::symbolic::{FunctionalityTable, SubrelationTable};

/// One hop `from -[relation]-> to`.
pub type Step = (EntityId, DirectedRelation, EntityId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorMode {
    /// Observed pairs only.
    Hard,
    /// Every pair of the predicted one-to-one alignment.
    Soft,
}

impl std::str::FromStr for AnchorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(AnchorMode::Hard),
            "soft" => Ok(AnchorMode::Soft),
            other => Err(Error::Config(format!("unknown anchor mode `{other}`"))),
        }
    }
}

/// Source-to-target anchor map.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnchorSet {
    map: HashMap<EntityId, EntityId>,
}

impl AnchorSet {
    pub fn from_pairs(pairs: impl IntoIterator<Item = EntityPair>) -> Self {
        AnchorSet {
            map: pairs.into_iter().collect(),
        }
    }

    /// Anchors from predictions: observed rows in hard mode, all binary
    /// rows in soft mode.
    pub fn from_predictions(predictions: &[Prediction], mode: AnchorMode) -> Self {
        Self::from_pairs(
            predictions
                .iter()
                .filter(|p| mode == AnchorMode::Soft || p.origin == LabelOrigin::Observed)
                .map(|p| (p.source, p.target)),
        )
    }

    pub fn get(&self, s: EntityId) -> Option<EntityId> {
        self.map.get(&s).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleExplanation {
    pub anchor: EntityPair,
    /// Anchor-to-query path in the source graph.
    pub source_path: Vec<Step>,
    /// Anchor-to-query path in the target graph.
    pub target_path: Vec<Step>,
    pub confidence: f64,
}

impl RuleExplanation {
    pub fn len(&self) -> usize {
        self.source_path.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_path.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExplainOptions {
    pub rule_length: usize,
    /// Enumerate every simple path up to `rule_length` instead of one
    /// shortest path per reachable entity.
    pub exhaustive: bool,
}

impl Default for ExplainOptions {
    fn default() -> Self {
        ExplainOptions {
            rule_length: 2,
            exhaustive: false,
        }
    }
}

/// Model quantities needed to weigh rules.
#[derive(Debug, Clone, Copy)]
pub struct RuleWeights<'a> {
    pub eta_source: &'a FunctionalityTable,
    pub eta_target: &'a FunctionalityTable,
    pub psub: &'a SubrelationTable,
}

impl RuleWeights<'_> {
    /// Confidence of one aligned step pair.
    pub fn step_weight(&self, d: DirectedRelation, d_target: DirectedRelation) -> f64 {
        let eta = self.eta_source.get(d).unwrap_or(0.0) * self.eta_target.get(d_target).unwrap_or(0.0);
        let sub = (self.psub.source_in_target(d, d_target) + self.psub.target_in_source(d_target, d)) / 2.0;
        eta * sub
    }

    pub fn rule_confidence(&self, source_path: &[Step], target_path: &[Step]) -> f64 {
        source_path
            .iter()
            .zip(target_path)
            .map(|(&(_, d, _), &(_, d_target, _))| self.step_weight(d, d_target))
            .product()
    }
}

/// Entities within `max_len` hops of `start` (itself excluded), each with
/// the first shortest path found. Paths run from `start`; neighbours are
/// visited in adjacency order.
pub fn bfs_reachable(kg: &KnowledgeGraph, start: EntityId, max_len: usize) -> HashMap<EntityId, Vec<Step>> {
    let mut found: HashMap<EntityId, Vec<Step>> = HashMap::new();
    if !kg.contains(start) {
        return found;
    }
    let mut queue = VecDeque::from([start]);
    while let Some(x) = queue.pop_front() {
        let depth = found.get(&x).map_or(0, Vec::len);
        if depth == max_len {
            continue;
        }
        for &(d, y) in kg.neighbors_of(x) {
            if y == start || found.contains_key(&y) {
                continue;
            }
            let mut path = found.get(&x).cloned().unwrap_or_default();
            path.push((x, d, y));
            found.insert(y, path);
            queue.push_back(y);
        }
    }
    found
}

/// Every simple path of length `1..=max_len` from `start`, grouped by end.
fn all_paths(kg: &KnowledgeGraph, start: EntityId, max_len: usize) -> HashMap<EntityId, Vec<Vec<Step>>> {
    fn walk(
        kg: &KnowledgeGraph,
        path: &mut Vec<Step>,
        visited: &mut Vec<EntityId>,
        max_len: usize,
        out: &mut HashMap<EntityId, Vec<Vec<Step>>>,
    ) {
        let x = *visited.last().expect("start is visited");
        if path.len() == max_len {
            return;
        }
        for &(d, y) in kg.neighbors_of(x) {
            if visited.contains(&y) {
                continue;
            }
            path.push((x, d, y));
            visited.push(y);
            out.entry(y).or_default().push(path.clone());
            walk(kg, path, visited, max_len, out);
            visited.pop();
            path.pop();
        }
    }
    let mut out = HashMap::new();
    if kg.contains(start) {
        walk(kg, &mut Vec::new(), &mut vec![start], max_len, &mut out);
    }
    out
}

/// Turns a query-rooted path into the same path walked from its far end.
fn reversed(path: &[Step]) -> Vec<Step> {
    path.iter().rev().map(|&(x, d, y)| (y, d.inverse(), x)).collect()
}

/// Rules supporting `query`, highest confidence first.
pub fn explain(
    pair: &KnowledgeGraphPair,
    weights: RuleWeights<'_>,
    anchors: &AnchorSet,
    query: EntityPair,
    options: ExplainOptions,
) -> Result<Vec<RuleExplanation>> {
    let (e, e_target) = query;
    if !pair.source.contains(e) {
        return Err(Error::UnknownEntity(e.0));
    }
    if !pair.target.contains(e_target) {
        return Err(Error::UnknownEntity(e_target.0));
    }
    let mut rules = Vec::new();
    let mut push = |anchor: EntityPair, s_path: &[Step], t_path: &[Step]| {
        if s_path.len() != t_path.len() {
            return;
        }
        let source_path = reversed(s_path);
        let target_path = reversed(t_path);
        let confidence = weights.rule_confidence(&source_path, &target_path);
        if confidence > 0.0 {
            rules.push(RuleExplanation {
                anchor,
                source_path,
                target_path,
                confidence,
            });
        }
    };

    if options.exhaustive {
        let reach_s = all_paths(&pair.source, e, options.rule_length);
        let reach_t = all_paths(&pair.target, e_target, options.rule_length);
        for (&a, s_paths) in &reach_s {
            let Some(a_target) = anchors.get(a) else { continue };
            let Some(t_paths) = reach_t.get(&a_target) else { continue };
            for s_path in s_paths {
                for t_path in t_paths {
                    push((a, a_target), s_path, t_path);
                }
            }
        }
    } else {
        let reach_s = bfs_reachable(&pair.source, e, options.rule_length);
        let reach_t = bfs_reachable(&pair.target, e_target, options.rule_length);
        for (&a, s_path) in &reach_s {
            let Some(a_target) = anchors.get(a) else { continue };
            if let Some(t_path) = reach_t.get(&a_target) {
                push((a, a_target), s_path, t_path);
            }
        }
    }

    rules.sort_by(|x, y| {
        y.confidence
            .total_cmp(&x.confidence)
            .then(x.anchor.cmp(&y.anchor))
            .then_with(|| step_key(&x.source_path).cmp(&step_key(&y.source_path)))
            .then_with(|| step_key(&x.target_path).cmp(&step_key(&y.target_path)))
    });
    Ok(rules)
}

fn step_key(path: &[Step]) -> Vec<(u32, u32, u32, u32)> {
    path.iter()
        .map(|&(x, d, y)| (x.0, d.base.0, d.is_forward() as u32, y.0))
        .collect()
}

fn render_path(kg: &KnowledgeGraph, path: &[Step]) -> String {
    let mut out = String::new();
    if let Some(&(first, _, _)) = path.first() {
        out.push_str(kg.entity_label(first));
    }
    for &(_, d, y) in path {
        let _ = write!(out, " -[{}]-> {}", kg.directed_label(d), kg.entity_label(y));
    }
    out
}

/// Plain-text report of the rules for one query.
pub fn render_report(pair: &KnowledgeGraphPair, query: EntityPair, rules: &[RuleExplanation]) -> String {
    let (s, t) = (&pair.source, &pair.target);
    let mut out = format!("query: {} <=> {}\n", s.entity_label(query.0), t.entity_label(query.1));
    if rules.is_empty() {
        out.push_str("no supporting rule found\n");
        return out;
    }
    for (i, rule) in rules.iter().enumerate() {
        let _ = writeln!(
            out,
            "rule {}: length {} confidence {:.4}",
            i + 1,
            rule.len(),
            rule.confidence
        );
        let _ = writeln!(
            out,
            "  anchor: {} <=> {}",
            s.entity_label(rule.anchor.0),
            t.entity_label(rule.anchor.1)
        );
        let _ = writeln!(out, "  source: {}", render_path(s, &rule.source_path));
        let _ = writeln!(out, "  target: {}", render_path(t, &rule.target_path));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::compute_functionalities;

    fn e(i: u32) -> EntityId {
        EntityId(i)
    }

    /// Source `dk -capital-> cph`, target `dk' -capital'-> cph'`.
    fn capital_pair() -> KnowledgeGraphPair {
        KnowledgeGraphPair::new(
            KnowledgeGraph::load_graph([("Denmark", "capital", "Copenhagen"), ("Denmark", "lang", "Danish")]),
            KnowledgeGraph::load_graph([("Danemark", "capitale", "Copenhague"), ("Danemark", "langue", "Danois")]),
        )
    }

    #[test]
    fn length_one_rule_weight() {
        let pair = capital_pair();
        let eta_s = compute_functionalities(&pair.source);
        let eta_t = compute_functionalities(&pair.target);
        let mut psub = SubrelationTable::new();
        let cap = DirectedRelation::forward(pair.source.relation_id("capital").unwrap());
        let cap_t = DirectedRelation::forward(pair.target.relation_id("capitale").unwrap());
        psub.set_source_in_target(cap, cap_t, 0.8);
        psub.set_target_in_source(cap_t, cap, 0.78);
        psub.set_source_in_target(cap.inverse(), cap_t.inverse(), 0.8);
        psub.set_target_in_source(cap_t.inverse(), cap.inverse(), 0.78);
        let weights = RuleWeights {
            eta_source: &eta_s,
            eta_target: &eta_t,
            psub: &psub,
        };
        // anchor Copenhagen, query Denmark
        let anchors = AnchorSet::from_pairs([(e(1), e(1))]);
        let rules = explain(&pair, weights, &anchors, (e(0), e(0)), ExplainOptions::default()).unwrap();
        assert_eq!(rules.len(), 1);
        let rule = &rules[0];
        assert_eq!(rule.anchor, (e(1), e(1)));
        assert_eq!(rule.source_path, vec![(e(1), cap.inverse(), e(0))]);
        assert!((rule.confidence - 0.79).abs() < 1e-12);
        let text = render_report(&pair, (e(0), e(0)), &rules);
        assert!(text.contains("Copenhagen -[capital^-1]-> Denmark"), "{text}");
        assert!(text.contains("confidence 0.7900"));
    }

    #[test]
    fn no_anchor_gives_empty_report() {
        let pair = capital_pair();
        let eta = compute_functionalities(&pair.source);
        let psub = SubrelationTable::new();
        let weights = RuleWeights {
            eta_source: &eta,
            eta_target: &eta,
            psub: &psub,
        };
        let rules = explain(&pair, weights, &AnchorSet::default(), (e(0), e(0)), ExplainOptions::default()).unwrap();
        assert!(rules.is_empty());
        assert!(render_report(&pair, (e(0), e(0)), &rules).contains("no supporting rule"));
    }

    #[test]
    fn unknown_query_entity() {
        let pair = capital_pair();
        let eta = compute_functionalities(&pair.source);
        let psub = SubrelationTable::new();
        let weights = RuleWeights {
            eta_source: &eta,
            eta_target: &eta,
            psub: &psub,
        };
        let err = explain(&pair, weights, &AnchorSet::default(), (e(99), e(0)), ExplainOptions::default());
        assert!(matches!(err, Err(Error::UnknownEntity(99))));
    }

    #[test]
    fn bfs_excludes_start_and_respects_depth() {
        let kg = KnowledgeGraph::from_id_triples(4, 1, [(0, 0, 1), (1, 0, 2), (2, 0, 3)]);
        let reach = bfs_reachable(&kg, e(0), 2);
        assert_eq!(reach.len(), 2);
        assert!(!reach.contains_key(&e(0)));
        assert_eq!(reach[&e(2)].len(), 2);
        assert_eq!(all_paths(&kg, e(1), 1).len(), 2);
    }

    #[test]
    fn anchor_modes() {
        let preds = [
            Prediction {
                source: e(0),
                target: e(0),
                score: 1.0,
                origin: LabelOrigin::Observed,
            },
            Prediction {
                source: e(1),
                target: e(2),
                score: 0.9,
                origin: LabelOrigin::Neural,
            },
        ];
        assert_eq!(AnchorSet::from_predictions(&preds, AnchorMode::Hard).len(), 1);
        assert_eq!(AnchorSet::from_predictions(&preds, AnchorMode::Soft).len(), 2);
        assert!("fuzzy".parse::<AnchorMode>().is_err());
    }
}
