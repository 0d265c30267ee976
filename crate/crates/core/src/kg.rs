//! Indexed knowledge graphs, alignment seeds and directed relations.
//!
//! Labels are interned into dense integer ids in first-seen order when a
//! graph is loaded. Every downstream table (functionalities, subrelation
//! probabilities, truth scores, embeddings) is keyed by these ids.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationId(pub u32);

impl EntityId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

/// A (source-graph entity, target-graph entity) pair.
pub type EntityPair = (EntityId, EntityId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Inverse,
}

/// A relation traversed either along its triples (`Forward`) or against
/// them (`Inverse`). The triple `(h, r, t)` is the edge `h -[r]-> t` and
/// also `t -[r^-1]-> h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DirectedRelation {
    pub base: RelationId,
    pub direction: Direction,
}

impl DirectedRelation {
    pub fn forward(base: RelationId) -> Self {
        DirectedRelation {
            base,
            direction: Direction::Forward,
        }
    }

    pub fn inverse_of(base: RelationId) -> Self {
        DirectedRelation {
            base,
            direction: Direction::Inverse,
        }
    }

    pub fn inverse(self) -> Self {
        let direction = match self.direction {
            Direction::Forward => Direction::Inverse,
            Direction::Inverse => Direction::Forward,
        };
        DirectedRelation {
            base: self.base,
            direction,
        }
    }

    pub fn is_forward(self) -> bool {
        self.direction == Direction::Forward
    }

    /// Dense index in `0..2 * num_relations`.
    #[inline]
    pub fn slot(self) -> usize {
        self.base.index() * 2 + usize::from(!self.is_forward())
    }
}

/// Suffix marking an inverse relation in labels and text reports.
pub const INVERSE_MARKER: &str = "^-1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

/// Label interner assigning dense ids in first-seen order.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    labels: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, label: &str) -> u32 {
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        let id = self.labels.len() as u32;
        self.labels.push(label.to_owned());
        self.index.insert(label.to_owned(), id);
        id
    }

    pub fn get(&self, label: &str) -> Option<u32> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: u32) -> &str {
        &self.labels[id as usize]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Compressed adjacency: `edges[offsets[e]..offsets[e + 1]]` belong to `e`.
#[derive(Debug, Clone, Default)]
struct Adjacency<T> {
    offsets: Vec<usize>,
    edges: Vec<T>,
}

impl<T: Copy + Ord> Adjacency<T> {
    fn build(num_nodes: usize, mut items: Vec<(u32, T)>) -> Self {
        items.sort_unstable();
        let mut offsets = vec![0usize; num_nodes + 1];
        for &(node, _) in &items {
            offsets[node as usize + 1] += 1;
        }
        for i in 0..num_nodes {
            offsets[i + 1] += offsets[i];
        }
        let edges = items.into_iter().map(|(_, edge)| edge).collect();
        Adjacency { offsets, edges }
    }

    #[inline]
    fn get(&self, node: usize) -> &[T] {
        &self.edges[self.offsets[node]..self.offsets[node + 1]]
    }
}

/// An immutable, indexed relational graph.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: Vocabulary,
    relations: Vocabulary,
    triples: Vec<Triple>,
    out_index: Adjacency<(RelationId, EntityId)>,
    in_index: Adjacency<(RelationId, EntityId)>,
    neighbors: Adjacency<(DirectedRelation, EntityId)>,
    duplicates_dropped: usize,
}

impl KnowledgeGraph {
    /// Builds a graph from labelled triples. Ids follow first-seen order
    /// (head, then relation, then tail within a record); duplicate triples
    /// are dropped.
    pub fn load_graph<I, S>(records: I) -> Self
    where
        I: IntoIterator<Item = (S, S, S)>,
        S: AsRef<str>,
    {
        let mut entities = Vocabulary::new();
        let mut relations = Vocabulary::new();
        let mut triples = Vec::new();
        for (h, r, t) in records {
            let head = EntityId(entities.intern(h.as_ref()));
            let relation = RelationId(relations.intern(r.as_ref()));
            let tail = EntityId(entities.intern(t.as_ref()));
            triples.push(Triple {
                head,
                relation,
                tail,
            });
        }
        Self::from_parts(entities, relations, triples)
    }

    /// Parses tab-separated `head<TAB>relation<TAB>tail` lines. Blank lines
    /// are skipped; any other line without exactly three non-empty fields is
    /// an ingest error naming its 1-based line number.
    pub fn from_reader<R: BufRead>(reader: R, source_name: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Ingest {
                    source_name: source_name.to_owned(),
                    line: idx + 1,
                    reason: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            if fields.iter().any(|f| f.is_empty()) {
                return Err(Error::Ingest {
                    source_name: source_name.to_owned(),
                    line: idx + 1,
                    reason: "empty label".to_owned(),
                });
            }
            records.push((fields[0].to_owned(), fields[1].to_owned(), fields[2].to_owned()));
        }
        Ok(Self::load_graph(records))
    }

    /// Builds a graph over pre-assigned ids; labels are `e{i}` and `r{i}`.
    pub fn from_id_triples(
        num_entities: usize,
        num_relations: usize,
        triples: impl IntoIterator<Item = (u32, u32, u32)>,
    ) -> Self {
        let mut entities = Vocabulary::new();
        for i in 0..num_entities {
            entities.intern(&format!("e{i}"));
        }
        let mut relations = Vocabulary::new();
        for i in 0..num_relations {
            relations.intern(&format!("r{i}"));
        }
        let triples = triples
            .into_iter()
            .map(|(h, r, t)| {
                assert!((h as usize) < num_entities && (t as usize) < num_entities);
                assert!((r as usize) < num_relations);
                Triple {
                    head: EntityId(h),
                    relation: RelationId(r),
                    tail: EntityId(t),
                }
            })
            .collect();
        Self::from_parts(entities, relations, triples)
    }

    fn from_parts(entities: Vocabulary, relations: Vocabulary, raw: Vec<Triple>) -> Self {
        let total = raw.len();
        let mut seen = HashSet::with_capacity(total);
        let mut triples = Vec::with_capacity(total);
        for t in raw {
            if seen.insert(t) {
                triples.push(t);
            }
        }
        let duplicates_dropped = total - triples.len();
        if duplicates_dropped > 0 {
            log::info!("dropped {duplicates_dropped} duplicate triples");
        }
        let n = entities.len();
        let out_items = triples
            .iter()
            .map(|t| (t.head.0, (t.relation, t.tail)))
            .collect();
        let in_items = triples
            .iter()
            .map(|t| (t.tail.0, (t.relation, t.head)))
            .collect();
        let mut nb_items = Vec::with_capacity(triples.len() * 2);
        for t in &triples {
            nb_items.push((t.head.0, (DirectedRelation::forward(t.relation), t.tail)));
            nb_items.push((t.tail.0, (DirectedRelation::inverse_of(t.relation), t.head)));
        }
        KnowledgeGraph {
            out_index: Adjacency::build(n, out_items),
            in_index: Adjacency::build(n, in_items),
            neighbors: Adjacency::build(n, nb_items),
            entities,
            relations,
            duplicates_dropped,
            triples,
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entities(&self) -> &Vocabulary {
        &self.entities
    }

    pub fn relations(&self) -> &Vocabulary {
        &self.relations
    }

    pub fn duplicates_dropped(&self) -> usize {
        self.duplicates_dropped
    }

    pub fn entity_id(&self, label: &str) -> Option<EntityId> {
        self.entities.get(label).map(EntityId)
    }

    pub fn relation_id(&self, label: &str) -> Option<RelationId> {
        self.relations.get(label).map(RelationId)
    }

    pub fn entity_label(&self, e: EntityId) -> &str {
        self.entities.label(e.0)
    }

    pub fn relation_label(&self, r: RelationId) -> &str {
        self.relations.label(r.0)
    }

    /// `label` for forward relations, `label^-1` for inverse ones.
    pub fn directed_label(&self, d: DirectedRelation) -> String {
        match d.direction {
            Direction::Forward => self.relation_label(d.base).to_owned(),
            Direction::Inverse => format!("{}{}", self.relation_label(d.base), INVERSE_MARKER),
        }
    }

    /// Parses the output of [`directed_label`](Self::directed_label).
    pub fn parse_directed_label(&self, text: &str) -> Option<DirectedRelation> {
        if let Some(r) = self.relation_id(text) {
            return Some(DirectedRelation::forward(r));
        }
        let base = text.strip_suffix(INVERSE_MARKER)?;
        self.relation_id(base).map(DirectedRelation::inverse_of)
    }

    pub fn contains(&self, e: EntityId) -> bool {
        e.index() < self.num_entities()
    }

    fn check(&self, e: EntityId) -> Result<()> {
        if self.contains(e) {
            Ok(())
        } else {
            Err(Error::UnknownEntity(e.0))
        }
    }

    /// Outgoing `(relation, tail)` edges of `e`, sorted.
    pub fn out_edges(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        self.out_index.get(e.index())
    }

    /// Incoming `(relation, head)` edges of `e`, sorted.
    pub fn in_edges(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        self.in_index.get(e.index())
    }

    /// Out-edges as forward relations plus in-edges as inverse relations,
    /// ordered by relation id, direction, then neighbor id.
    pub fn neighbors(&self, e: EntityId) -> Result<&[(DirectedRelation, EntityId)]> {
        self.check(e)?;
        Ok(self.neighbors.get(e.index()))
    }

    /// Unchecked variant of [`neighbors`](Self::neighbors) for hot loops
    /// over ids that are known to be valid.
    #[inline]
    pub fn neighbors_of(&self, e: EntityId) -> &[(DirectedRelation, EntityId)] {
        self.neighbors.get(e.index())
    }

    pub fn degree(&self, e: EntityId) -> usize {
        self.neighbors_of(e).len()
    }

    /// True iff the directed edge `from -[d]-> to` exists.
    pub fn has_edge(&self, from: EntityId, d: DirectedRelation, to: EntityId) -> bool {
        self.contains(from) && self.neighbors_of(from).binary_search(&(d, to)).is_ok()
    }

    /// Labelled triple records, in stored order.
    pub fn to_records(&self) -> Vec<(String, String, String)> {
        self.triples
            .iter()
            .map(|t| {
                (
                    self.entity_label(t.head).to_owned(),
                    self.relation_label(t.relation).to_owned(),
                    self.entity_label(t.tail).to_owned(),
                )
            })
            .collect()
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        for (h, r, t) in self.to_records() {
            writeln!(w, "{h}\t{r}\t{t}")?;
        }
        Ok(())
    }
}

/// The two graphs being aligned. Pairs are always ordered (source, target).
#[derive(Debug, Clone)]
pub struct KnowledgeGraphPair {
    pub source: KnowledgeGraph,
    pub target: KnowledgeGraph,
}

impl KnowledgeGraphPair {
    pub fn new(source: KnowledgeGraph, target: KnowledgeGraph) -> Self {
        KnowledgeGraphPair { source, target }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedRole {
    Train,
    Validation,
    Test,
}

/// A set of gold entity pairs with a role. Training seeds must be
/// one-to-one.
#[derive(Debug, Clone)]
pub struct AlignmentSeed {
    pairs: Vec<EntityPair>,
    role: SeedRole,
    by_source: HashMap<EntityId, EntityId>,
    by_target: HashMap<EntityId, EntityId>,
}

impl AlignmentSeed {
    pub fn new(pairs: Vec<EntityPair>, role: SeedRole) -> Result<Self> {
        let mut by_source = HashMap::with_capacity(pairs.len());
        let mut by_target = HashMap::with_capacity(pairs.len());
        for &(s, t) in &pairs {
            let clash_s = by_source.insert(s, t).is_some();
            let clash_t = by_target.insert(t, s).is_some();
            if role == SeedRole::Train && (clash_s || clash_t) {
                return Err(Error::Seed(format!(
                    "training pair ({}, {}) reuses an already aligned entity",
                    s.0, t.0
                )));
            }
        }
        Ok(AlignmentSeed {
            pairs,
            role,
            by_source,
            by_target,
        })
    }

    pub fn pairs(&self) -> &[EntityPair] {
        &self.pairs
    }

    pub fn role(&self) -> SeedRole {
        self.role
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Pair whose source is `s`. For non-train roles with repeated sources,
    /// the last occurrence wins.
    pub fn by_source(&self, s: EntityId) -> Option<EntityPair> {
        self.by_source.get(&s).map(|&t| (s, t))
    }

    pub fn by_target(&self, t: EntityId) -> Option<EntityPair> {
        self.by_target.get(&t).map(|&s| (s, t))
    }

    /// Fails if any pair occurs in more than one of the given seed sets.
    pub fn check_disjoint(sets: &[&AlignmentSeed]) -> Result<()> {
        let mut seen: HashMap<EntityPair, SeedRole> = HashMap::new();
        for set in sets {
            for &p in set.pairs() {
                if let Some(prev) = seen.insert(p, set.role) {
                    if prev != set.role {
                        return Err(Error::Seed(format!(
                            "pair ({}, {}) appears in both {:?} and {:?} sets",
                            p.0 .0, p.1 .0, prev, set.role
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_triples_collapse() {
        let kg = KnowledgeGraph::load_graph([("a", "r", "b"), ("a", "r", "b")]);
        assert_eq!(kg.num_entities(), 2);
        assert_eq!(kg.num_relations(), 1);
        assert_eq!(kg.triples().len(), 1);
        assert_eq!(kg.duplicates_dropped(), 1);
    }

    #[test]
    fn indices_are_inverse() {
        let kg = KnowledgeGraph::load_graph([("a", "r", "b"), ("b", "s", "c")]);
        let b = kg.entity_id("b").unwrap();
        let s = kg.relation_id("s").unwrap();
        let r = kg.relation_id("r").unwrap();
        assert_eq!(kg.out_edges(b), &[(s, kg.entity_id("c").unwrap())]);
        assert_eq!(kg.in_edges(b), &[(r, kg.entity_id("a").unwrap())]);
    }

    #[test]
    fn neighbors_cover_both_directions() {
        let kg = KnowledgeGraph::load_graph([("a", "r", "b")]);
        let (a, b) = (kg.entity_id("a").unwrap(), kg.entity_id("b").unwrap());
        let r = kg.relation_id("r").unwrap();
        assert_eq!(
            kg.neighbors(a).unwrap(),
            &[(DirectedRelation::forward(r), b)]
        );
        assert_eq!(
            kg.neighbors(b).unwrap(),
            &[(DirectedRelation::inverse_of(r), a)]
        );
    }

    #[test]
    fn neighbors_ordered_by_neighbor_id() {
        let kg = KnowledgeGraph::load_graph([("a", "r", "b"), ("c", "r", "b")]);
        let id = |l| kg.entity_id(l).unwrap();
        let r = DirectedRelation::inverse_of(kg.relation_id("r").unwrap());
        assert_eq!(
            kg.neighbors(id("b")).unwrap(),
            &[(r, id("a")), (r, id("c"))]
        );
    }

    #[test]
    fn unknown_entity_is_lookup_error() {
        let kg = KnowledgeGraph::load_graph([("a", "r", "b")]);
        assert!(matches!(
            kg.neighbors(EntityId(7)),
            Err(Error::UnknownEntity(7))
        ));
    }

    #[test]
    fn self_loops_are_kept() {
        let kg = KnowledgeGraph::load_graph([("a", "r", "a")]);
        let a = kg.entity_id("a").unwrap();
        assert_eq!(kg.triples().len(), 1);
        assert_eq!(kg.neighbors(a).unwrap().len(), 2);
    }

    #[test]
    fn malformed_line_names_line_number() {
        let text = "a\tr\tb\n\nb\ts\n";
        let err = KnowledgeGraph::from_reader(text.as_bytes(), "rel_triples_1").unwrap_err();
        match err {
            Error::Ingest { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inverse_is_involution() {
        let d = DirectedRelation::forward(RelationId(3));
        assert_eq!(d.inverse().inverse(), d);
        assert_ne!(d.inverse(), d);
    }

    #[test]
    fn directed_labels_round_trip() {
        let kg = KnowledgeGraph::load_graph([("a", "r", "b")]);
        let d = DirectedRelation::inverse_of(kg.relation_id("r").unwrap());
        assert_eq!(kg.directed_label(d), "r^-1");
        assert_eq!(kg.parse_directed_label("r^-1"), Some(d));
        assert_eq!(kg.parse_directed_label("r"), Some(d.inverse()));
    }

    #[test]
    fn train_seed_must_be_one_to_one() {
        let pairs = vec![(EntityId(0), EntityId(0)), (EntityId(0), EntityId(1))];
        assert!(AlignmentSeed::new(pairs.clone(), SeedRole::Train).is_err());
        assert!(AlignmentSeed::new(pairs, SeedRole::Test).is_ok());
    }

    #[test]
    fn seed_lookups_agree() {
        let seed = AlignmentSeed::new(
            vec![(EntityId(0), EntityId(5)), (EntityId(2), EntityId(1))],
            SeedRole::Train,
        )
        .unwrap();
        for &(s, t) in seed.pairs() {
            assert_eq!(seed.by_source(s), seed.by_target(t));
        }
    }

    #[test]
    fn overlapping_roles_rejected() {
        let a = AlignmentSeed::new(vec![(EntityId(0), EntityId(0))], SeedRole::Train).unwrap();
        let b = AlignmentSeed::new(vec![(EntityId(0), EntityId(0))], SeedRole::Test).unwrap();
        assert!(AlignmentSeed::check_disjoint(&[&a, &b]).is_err());
    }
}
