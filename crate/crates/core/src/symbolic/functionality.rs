use crate::kg::{DirectedRelation, KnowledgeGraph, RelationId};

/// Per-directed-relation functionality ratios.
///
/// For a directed relation `d`, `eta(d)` is the number of distinct subjects
/// of `d` divided by the number of `(subject, object)` pairs of `d`. So
/// `eta(forward r)` counts distinct heads and `eta(inverse r)` distinct
/// tails. A value of 1 means every subject has exactly one object under
/// `d`, i.e. the subject pins down the object.
///
/// When evidence flows from a neighbor `n` to an entity `e` over the edge
/// `e -[d]-> n`, the relevant factor is how uniquely `n` determines `e`,
/// which is `eta(d.inverse())`; see [`FunctionalityTable::toward`].
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalityTable {
    values: Vec<Option<[f64; 2]>>,
}

impl FunctionalityTable {
    pub fn compute(kg: &KnowledgeGraph) -> Self {
        let mut heads: Vec<Vec<u32>> = vec![Vec::new(); kg.num_relations()];
        let mut tails: Vec<Vec<u32>> = vec![Vec::new(); kg.num_relations()];
        for t in kg.triples() {
            heads[t.relation.index()].push(t.head.0);
            tails[t.relation.index()].push(t.tail.0);
        }
        let values = heads
            .into_iter()
            .zip(tails)
            .map(|(mut h, mut t)| {
                // triples are deduplicated, so the triple count is the pair count
                let pairs = h.len();
                if pairs == 0 {
                    return None;
                }
                h.sort_unstable();
                h.dedup();
                t.sort_unstable();
                t.dedup();
                Some([h.len() as f64 / pairs as f64, t.len() as f64 / pairs as f64])
            })
            .collect();
        FunctionalityTable { values }
    }

    /// `eta(d)`, or `None` for a relation without triples.
    pub fn get(&self, d: DirectedRelation) -> Option<f64> {
        self.values
            .get(d.base.index())
            .copied()
            .flatten()
            .map(|v| v[usize::from(!d.is_forward())])
    }

    /// Factor for evidence arriving at the subject of `d` from its object.
    #[inline]
    pub fn toward(&self, d: DirectedRelation) -> f64 {
        self.get(d.inverse()).unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (DirectedRelation, f64)> + '_ {
        self.values.iter().enumerate().flat_map(|(i, v)| {
            let r = RelationId(i as u32);
            v.iter().flat_map(move |&[fwd, inv]| {
                [
                    (DirectedRelation::forward(r), fwd),
                    (DirectedRelation::inverse_of(r), inv),
                ]
            })
        })
    }
}

/// Shorthand for [`FunctionalityTable::compute`].
pub fn compute_functionalities(kg: &KnowledgeGraph) -> FunctionalityTable {
    FunctionalityTable::compute(kg)
}
