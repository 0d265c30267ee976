use std::collections::HashSet;

use crate::kg::EntityId;
use crate::neural::{AlignmentModel, LabelOrigin, PseudoLabelSet};

/// Scores `candidates` for `source`; best first, ties by ascending target id.
pub fn rank_candidates<M: AlignmentModel + ?Sized>(
    model: &M,
    source: EntityId,
    candidates: &[EntityId],
) -> Vec<(EntityId, f64)> {
    let mut ranked: Vec<(EntityId, f64)> = candidates
        .iter()
        .map(|&t| (t, model.score(source, t)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
}

/// Greedy one-to-one selection.
///
/// Pairs are visited by descending score (ties: source id, then target id);
/// a pair is accepted when neither endpoint has been used. Selection stops
/// after `budget` acceptances when a budget is given.
pub fn greedy_one_to_one(
    scored_pairs: &[(EntityId, EntityId, f64)],
    budget: Option<usize>,
    origin: LabelOrigin,
) -> PseudoLabelSet {
    let mut order: Vec<&(EntityId, EntityId, f64)> = scored_pairs.iter().collect();
    order.sort_by(|a, b| {
        b.2.total_cmp(&a.2)
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });
    let limit = budget.unwrap_or(usize::MAX);
    let mut used_sources = HashSet::new();
    let mut used_targets = HashSet::new();
    let mut out = PseudoLabelSet::new();
    for &&(s, t, score) in &order {
        if out.len() >= limit {
            break;
        }
        if used_sources.contains(&s) || used_targets.contains(&t) {
            continue;
        }
        used_sources.insert(s);
        used_targets.insert(t);
        out.push(s, t, score, origin);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(i: u32) -> EntityId {
        EntityId(i)
    }

    fn accepted(set: &PseudoLabelSet) -> Vec<(u32, u32)> {
        set.pairs().map(|(s, t)| (s.0, t.0)).collect()
    }

    #[test]
    fn greedy_skips_used_source() {
        let (a, b, x, y) = (e(0), e(1), e(10), e(11));
        let out = greedy_one_to_one(
            &[(a, x, 0.9), (a, y, 0.8), (b, y, 0.7)],
            None,
            LabelOrigin::Neural,
        );
        assert_eq!(accepted(&out), vec![(0, 10), (1, 11)]);
    }

    #[test]
    fn greedy_skips_used_target() {
        let out = greedy_one_to_one(&[(e(0), e(5), 0.9), (e(1), e(5), 0.8)], None, LabelOrigin::Neural);
        assert_eq!(accepted(&out), vec![(0, 5)]);
    }

    #[test]
    fn greedy_empty_and_budget() {
        assert!(greedy_one_to_one(&[], None, LabelOrigin::Neural).is_empty());
        let out = greedy_one_to_one(
            &[(e(0), e(0), 0.9), (e(1), e(1), 0.8)],
            Some(1),
            LabelOrigin::Neural,
        );
        assert_eq!(accepted(&out), vec![(0, 0)]);
    }

    #[test]
    fn greedy_ties_by_source_then_target() {
        let out = greedy_one_to_one(
            &[(e(2), e(0), 0.5), (e(1), e(1), 0.5), (e(1), e(0), 0.5)],
            None,
            LabelOrigin::Neural,
        );
        // visit order (1,0), (1,1), (2,0): only the first survives
        assert_eq!(accepted(&out), vec![(1, 0)]);
    }
}
