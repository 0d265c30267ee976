use std::collections::BTreeSet;
use std::io::Write;

use crate::error::Result;
use crate::kg::{EntityId, EntityPair, KnowledgeGraphPair};

/// Sparse alignment probabilities, one sorted row per source entity.
///
/// Pinned (observed) pairs always read as 1 and cannot be overwritten.
/// Absent pairs read as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthScoreTable {
    rows: Vec<Vec<(EntityId, f64)>>,
    num_targets: usize,
    pinned: BTreeSet<EntityPair>,
    pinned_source: Vec<bool>,
    pinned_target: Vec<bool>,
}

impl TruthScoreTable {
    pub fn new(num_sources: usize, num_targets: usize) -> Self {
        TruthScoreTable {
            rows: vec![Vec::new(); num_sources],
            num_targets,
            pinned: BTreeSet::new(),
            pinned_source: vec![false; num_sources],
            pinned_target: vec![false; num_targets],
        }
    }

    pub fn for_pair(pair: &KnowledgeGraphPair) -> Self {
        Self::new(pair.source.num_entities(), pair.target.num_entities())
    }

    /// Table holding only the given observed pairs, each pinned at 1.
    pub fn with_observed(num_sources: usize, num_targets: usize, observed: &[EntityPair]) -> Self {
        let mut table = Self::new(num_sources, num_targets);
        for &(s, t) in observed {
            table.pin(s, t);
        }
        table
    }

    /// An empty table sharing this table's dimensions and pinned pairs.
    pub fn fresh_like(&self) -> Self {
        let mut table = Self::new(self.rows.len(), self.num_targets);
        for &(s, t) in &self.pinned {
            table.pin(s, t);
        }
        table
    }

    pub fn num_sources(&self) -> usize {
        self.rows.len()
    }

    pub fn num_targets(&self) -> usize {
        self.num_targets
    }

    pub fn pin(&mut self, s: EntityId, t: EntityId) {
        self.pinned.insert((s, t));
        self.pinned_source[s.index()] = true;
        self.pinned_target[t.index()] = true;
        Self::upsert(&mut self.rows[s.index()], t, 1.0);
    }

    fn upsert(row: &mut Vec<(EntityId, f64)>, t: EntityId, value: f64) {
        match row.binary_search_by_key(&t, |&(x, _)| x) {
            Ok(i) => row[i].1 = value,
            Err(i) => row.insert(i, (t, value)),
        }
    }

    /// Sets a score, clamped into [0, 1]. Zero removes the entry; writes to
    /// pinned pairs are ignored.
    pub fn set(&mut self, s: EntityId, t: EntityId, value: f64) {
        if self.pinned.contains(&(s, t)) {
            return;
        }
        let value = value.clamp(0.0, 1.0);
        let row = &mut self.rows[s.index()];
        if value > 0.0 {
            Self::upsert(row, t, value);
        } else if let Ok(i) = row.binary_search_by_key(&t, |&(x, _)| x) {
            row.remove(i);
        }
    }

    pub fn get(&self, s: EntityId, t: EntityId) -> f64 {
        self.rows
            .get(s.index())
            .and_then(|row| {
                row.binary_search_by_key(&t, |&(x, _)| x)
                    .ok()
                    .map(|i| row[i].1)
            })
            .unwrap_or(0.0)
    }

    /// Stored `(target, score)` entries of `s`, sorted by target id.
    #[inline]
    pub fn row(&self, s: EntityId) -> &[(EntityId, f64)] {
        &self.rows[s.index()]
    }

    /// Replaces a whole row. `row` must be sorted by target and hold scores
    /// in (0, 1]; pinned entries of `s` are restored afterwards.
    pub(crate) fn replace_row(&mut self, s: EntityId, row: Vec<(EntityId, f64)>) {
        debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
        debug_assert!(row.iter().all(|&(_, v)| v > 0.0 && v <= 1.0));
        self.rows[s.index()] = row;
        if self.pinned_source[s.index()] {
            let pins: Vec<EntityPair> = self
                .pinned
                .range((s, EntityId(0))..=(s, EntityId(u32::MAX)))
                .copied()
                .collect();
            for (_, t) in pins {
                Self::upsert(&mut self.rows[s.index()], t, 1.0);
            }
        }
    }

    pub fn is_pinned(&self, s: EntityId, t: EntityId) -> bool {
        self.pinned.contains(&(s, t))
    }

    #[inline]
    pub fn is_pinned_source(&self, s: EntityId) -> bool {
        self.pinned_source[s.index()]
    }

    #[inline]
    pub fn is_pinned_target(&self, t: EntityId) -> bool {
        self.pinned_target[t.index()]
    }

    pub fn pinned(&self) -> impl Iterator<Item = EntityPair> + '_ {
        self.pinned.iter().copied()
    }

    /// All stored entries in (source, target) order.
    pub fn iter(&self) -> impl Iterator<Item = (EntityId, EntityId, f64)> + '_ {
        self.rows.iter().enumerate().flat_map(|(s, row)| {
            row.iter()
                .map(move |&(t, v)| (EntityId(s as u32), t, v))
        })
    }

    pub fn len(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.iter().all(Vec::is_empty)
    }

    /// Swaps the roles of sources and targets.
    pub fn transposed(&self) -> TruthScoreTable {
        let mut rows = vec![Vec::new(); self.num_targets];
        for (s, t, v) in self.iter() {
            rows[t.index()].push((s, v));
        }
        TruthScoreTable {
            rows,
            num_targets: self.rows.len(),
            pinned: self.pinned.iter().map(|&(s, t)| (t, s)).collect(),
            pinned_source: self.pinned_target.clone(),
            pinned_target: self.pinned_source.clone(),
        }
    }

    /// Writes `source<TAB>target<TAB>score` lines using entity labels.
    pub fn write_tsv<W: Write>(&self, pair: &KnowledgeGraphPair, mut w: W) -> Result<()> {
        for (s, t, v) in self.iter() {
            writeln!(
                w,
                "{}\t{}\t{}",
                pair.source.entity_label(s),
                pair.target.entity_label(t),
                v
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinned_pairs_resist_writes() {
        let mut table = TruthScoreTable::with_observed(3, 3, &[(EntityId(0), EntityId(1))]);
        table.set(EntityId(0), EntityId(1), 0.2);
        assert_eq!(table.get(EntityId(0), EntityId(1)), 1.0);
        table.replace_row(EntityId(0), vec![(EntityId(2), 0.5)]);
        assert_eq!(table.row(EntityId(0)), &[(EntityId(1), 1.0), (EntityId(2), 0.5)]);
    }

    #[test]
    fn zero_removes_and_values_clamp() {
        let mut table = TruthScoreTable::new(2, 2);
        table.set(EntityId(1), EntityId(0), 1.5);
        assert_eq!(table.get(EntityId(1), EntityId(0)), 1.0);
        table.set(EntityId(1), EntityId(0), 0.0);
        assert!(table.is_empty());
    }

    #[test]
    fn transpose_round_trips() {
        let mut table = TruthScoreTable::with_observed(3, 2, &[(EntityId(2), EntityId(0))]);
        table.set(EntityId(0), EntityId(1), 0.25);
        let back = table.transposed().transposed();
        assert_eq!(back, table);
        assert!(table.transposed().is_pinned(EntityId(0), EntityId(2)));
    }
}
