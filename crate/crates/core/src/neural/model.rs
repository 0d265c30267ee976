use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kg::{DirectedRelation, EntityId, EntityPair, KnowledgeGraph, KnowledgeGraphPair};
use crate::neural::{AlignmentModel, Hyperparams, LabelOrigin, PseudoLabelSet, TrainingReport};

/// Shared-space entity embeddings with translational relation vectors.
///
/// Every entity and relation vector has unit norm after each update.
/// Relation vectors are stored for forward relations only; the inverse of
/// `r` is `-r`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralModel {
    pub(crate) hyperparams: Hyperparams,
    pub(crate) source_entities: Vec<f64>,
    pub(crate) target_entities: Vec<f64>,
    pub(crate) source_relations: Vec<f64>,
    pub(crate) target_relations: Vec<f64>,
    pub(crate) train_calls: u64,
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 && norm.is_finite() {
        v.iter_mut().for_each(|x| *x /= norm);
    } else {
        v.iter_mut().for_each(|x| *x = 0.0);
        v[0] = 1.0;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn random_table(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Vec<f64> {
    let scale = 1.0 / (dim as f64).sqrt();
    let mut v: Vec<f64> = (0..rows * dim)
        .map(|_| rng.random_range(-1.0..1.0) * scale)
        .collect();
    for row in v.chunks_mut(dim) {
        normalize(row);
    }
    v
}

struct TripleSide<'a> {
    kg: &'a KnowledgeGraph,
    entities: &'a mut Vec<f64>,
    relations: &'a mut Vec<f64>,
}

impl NeuralModel {
    pub fn new(pair: &KnowledgeGraphPair, hyperparams: &Hyperparams) -> Result<Self> {
        let dim = hyperparams.dim;
        if dim < 2 {
            return Err(Error::Config(format!("embedding dimension must be at least 2, got {dim}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(hyperparams.seed);
        Ok(NeuralModel {
            source_entities: random_table(&mut rng, pair.source.num_entities(), dim),
            target_entities: random_table(&mut rng, pair.target.num_entities(), dim),
            source_relations: random_table(&mut rng, pair.source.num_relations(), dim),
            target_relations: random_table(&mut rng, pair.target.num_relations(), dim),
            hyperparams: hyperparams.clone(),
            train_calls: 0,
        })
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyperparams
    }

    pub fn dim(&self) -> usize {
        self.hyperparams.dim
    }

    pub fn source_entity(&self, e: EntityId) -> &[f64] {
        let d = self.dim();
        &self.source_entities[e.index() * d..(e.index() + 1) * d]
    }

    pub fn target_entity(&self, e: EntityId) -> &[f64] {
        let d = self.dim();
        &self.target_entities[e.index() * d..(e.index() + 1) * d]
    }

    pub fn num_source_entities(&self) -> usize {
        self.source_entities.len() / self.dim()
    }

    pub fn num_source_relations(&self) -> usize {
        self.source_relations.len() / self.dim()
    }

    pub fn num_target_relations(&self) -> usize {
        self.target_relations.len() / self.dim()
    }

    /// Translation vector of a directed source relation.
    pub fn source_relation(&self, d: DirectedRelation) -> Vec<f64> {
        Self::directed(&self.source_relations, self.dim(), d)
    }

    pub fn target_relation(&self, d: DirectedRelation) -> Vec<f64> {
        Self::directed(&self.target_relations, self.dim(), d)
    }

    fn directed(table: &[f64], dim: usize, d: DirectedRelation) -> Vec<f64> {
        let row = &table[d.base.index() * dim..(d.base.index() + 1) * dim];
        if d.is_forward() {
            row.to_vec()
        } else {
            row.iter().map(|x| -x).collect()
        }
    }

    /// All entity and relation vectors, for invariant checks.
    pub fn all_vectors(&self) -> impl Iterator<Item = &[f64]> + '_ {
        let d = self.dim();
        self.source_entities
            .chunks(d)
            .chain(self.target_entities.chunks(d))
            .chain(self.source_relations.chunks(d))
            .chain(self.target_relations.chunks(d))
    }

    fn alignment_epoch(
        &mut self,
        rng: &mut ChaCha8Rng,
        items: &[(EntityId, EntityId, f64)],
        pool: &HashMap<EntityId, Vec<EntityId>>,
    ) -> (f64, usize) {
        let dim = self.dim();
        let lr = self.hyperparams.learning_rate;
        let margin = self.hyperparams.margin;
        let k = self.hyperparams.negatives;
        let num_targets = self.target_entities.len() / dim;
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(rng);

        let mut loss = 0.0;
        let mut terms = 0;
        let mut sv = vec![0.0; dim];
        let mut tv = vec![0.0; dim];
        let mut nv = vec![0.0; dim];
        for idx in order {
            let (s, t, weight) = items[idx];
            for _ in 0..k {
                let hard = pool.get(&s).filter(|p| !p.is_empty());
                let neg = match hard {
                    Some(p) if rng.random_bool(0.5) => p[rng.random_range(0..p.len())],
                    _ => {
                        if num_targets < 2 {
                            continue;
                        }
                        let mut n = EntityId(rng.random_range(0..num_targets as u32));
                        while n == t {
                            n = EntityId(rng.random_range(0..num_targets as u32));
                        }
                        n
                    }
                };
                if neg == t {
                    continue;
                }
                terms += 1;
                sv.copy_from_slice(&self.source_entities[s.index() * dim..(s.index() + 1) * dim]);
                tv.copy_from_slice(&self.target_entities[t.index() * dim..(t.index() + 1) * dim]);
                nv.copy_from_slice(&self.target_entities[neg.index() * dim..(neg.index() + 1) * dim]);
                let violation = margin - dot(&sv, &tv) + dot(&sv, &nv);
                if violation <= 0.0 {
                    continue;
                }
                loss += weight * violation;
                let step = lr * weight;
                {
                    let row = &mut self.source_entities[s.index() * dim..(s.index() + 1) * dim];
                    for i in 0..dim {
                        row[i] -= step * (nv[i] - tv[i]);
                    }
                    normalize(row);
                }
                {
                    let row = &mut self.target_entities[t.index() * dim..(t.index() + 1) * dim];
                    for i in 0..dim {
                        row[i] += step * sv[i];
                    }
                    normalize(row);
                }
                {
                    let row = &mut self.target_entities[neg.index() * dim..(neg.index() + 1) * dim];
                    for i in 0..dim {
                        row[i] -= step * sv[i];
                    }
                    normalize(row);
                }
            }
        }
        (loss, terms)
    }

    fn triple_epoch(side: TripleSide<'_>, hp: &Hyperparams, rng: &mut ChaCha8Rng) -> (f64, usize) {
        let dim = hp.dim;
        let lr = hp.learning_rate * hp.triple_weight;
        let margin = hp.margin;
        let k = hp.negatives;
        let triples = side.kg.triples();
        let n = side.kg.num_entities();
        if k == 0 || hp.triple_weight == 0.0 || n < 2 {
            return (0.0, 0);
        }
        let mut order: Vec<usize> = (0..triples.len()).collect();
        order.shuffle(rng);

        let mut loss = 0.0;
        let mut terms = 0;
        let mut u = vec![0.0; dim];
        let mut u_neg = vec![0.0; dim];
        for idx in order {
            let tr = triples[idx];
            let (h, r, t) = (tr.head.index(), tr.relation.index(), tr.tail.index());
            for _ in 0..k {
                let mut c = rng.random_range(0..n);
                while c == t {
                    c = rng.random_range(0..n);
                }
                terms += 1;
                for i in 0..dim {
                    let base = side.entities[h * dim + i] + side.relations[r * dim + i];
                    u[i] = base - side.entities[t * dim + i];
                    u_neg[i] = base - side.entities[c * dim + i];
                }
                let violation = margin + dot(&u, &u) - dot(&u_neg, &u_neg);
                if violation <= 0.0 {
                    continue;
                }
                loss += hp.triple_weight * violation;
                for i in 0..dim {
                    let g = 2.0 * (u[i] - u_neg[i]);
                    side.entities[h * dim + i] -= lr * g;
                    side.relations[r * dim + i] -= lr * g;
                }
                for i in 0..dim {
                    side.entities[t * dim + i] += lr * 2.0 * u[i];
                }
                for i in 0..dim {
                    side.entities[c * dim + i] -= lr * 2.0 * u_neg[i];
                }
                for e in [h, t, c] {
                    normalize(&mut side.entities[e * dim..(e + 1) * dim]);
                }
                normalize(&mut side.relations[r * dim..(r + 1) * dim]);
            }
        }
        (loss, terms)
    }

    fn weight_of(&self, origin: LabelOrigin) -> f64 {
        match origin {
            LabelOrigin::Observed => self.hyperparams.observed_weight,
            LabelOrigin::Symbolic | LabelOrigin::Neural => self.hyperparams.inferred_weight,
        }
    }
}

impl AlignmentModel for NeuralModel {
    fn init(pair: &KnowledgeGraphPair, hyperparams: &Hyperparams) -> Result<Self> {
        NeuralModel::new(pair, hyperparams)
    }

    /// Duplicate positives are not collapsed: each occurrence adds its own
    /// loss term, so a pair listed twice pulls twice as hard.
    fn train(
        &mut self,
        pair: &KnowledgeGraphPair,
        positives: &PseudoLabelSet,
        hard_negatives: &[EntityPair],
    ) -> Result<TrainingReport> {
        if positives.is_empty() {
            return Err(Error::Training("no positive pairs to train on".into()));
        }
        let seed = self
            .hyperparams
            .seed
            .wrapping_add(self.train_calls.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        self.train_calls += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let items: Vec<(EntityId, EntityId, f64)> = positives
            .labels()
            .iter()
            .map(|l| (l.source, l.target, self.weight_of(l.origin)))
            .collect();
        let mut pool: HashMap<EntityId, Vec<EntityId>> = HashMap::new();
        for &(s, t) in hard_negatives {
            pool.entry(s).or_default().push(t);
        }

        let hp = self.hyperparams.clone();
        let mut report = TrainingReport::default();
        for _ in 0..hp.epochs {
            let (mut loss, mut terms) = self.alignment_epoch(&mut rng, &items, &pool);
            let source_side = TripleSide {
                kg: &pair.source,
                entities: &mut self.source_entities,
                relations: &mut self.source_relations,
            };
            let (l, n) = Self::triple_epoch(source_side, &hp, &mut rng);
            loss += l;
            terms += n;
            let target_side = TripleSide {
                kg: &pair.target,
                entities: &mut self.target_entities,
                relations: &mut self.target_relations,
            };
            let (l, n) = Self::triple_epoch(target_side, &hp, &mut rng);
            loss += l;
            terms += n;
            report
                .epoch_losses
                .push(if terms > 0 { loss / terms as f64 } else { 0.0 });
        }
        Ok(report)
    }

    fn score(&self, source: EntityId, target: EntityId) -> f64 {
        dot(self.source_entity(source), self.target_entity(target)).clamp(-1.0, 1.0)
    }

    fn num_targets(&self) -> usize {
        self.target_entities.len() / self.dim()
    }

    fn parameter_digest(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for table in [
            &self.source_entities,
            &self.target_entities,
            &self.source_relations,
            &self.target_relations,
        ] {
            table.len().hash(&mut h);
            for x in table.iter() {
                x.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }
}
