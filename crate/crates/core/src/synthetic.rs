//! Random graph pairs with a known alignment, for tests and benchmarks.
//!
//! The target graph is a relabelled copy of the source: entities are
//! permuted, labels renamed and triple order shuffled, so the gold
//! alignment is recoverable only through structure. `drop_rate` removes a
//! random share of target triples to break exact isomorphism.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kg::{EntityId, EntityPair, KnowledgeGraph, KnowledgeGraphPair};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub entities: usize,
    pub relations: usize,
    /// Mean number of incident edges per entity.
    pub average_degree: f64,
    /// Probability of dropping each triple from the target graph.
    pub drop_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            entities: 500,
            relations: 20,
            average_degree: 6.0,
            drop_rate: 0.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub pair: KnowledgeGraphPair,
    /// Every source entity with its counterpart, ordered by source id.
    pub gold: Vec<EntityPair>,
}

impl SyntheticPair {
    /// Splits the gold alignment into `round(n * ratio)` observed pairs and
    /// the remaining hidden pairs.
    pub fn split(&self, ratio: f64, seed: u64) -> (Vec<EntityPair>, Vec<EntityPair>) {
        let mut shuffled = self.gold.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((shuffled.len() as f64) * ratio).round() as usize;
        let hidden = shuffled.split_off(n_train.min(shuffled.len()));
        (shuffled, hidden)
    }
}

/// Generates a connected source graph and its relabelled counterpart.
///
/// Entity `i > 0` first links to a uniformly chosen earlier entity, which
/// makes the graph connected; the remaining triples are uniform.
pub fn generate(config: &SyntheticConfig) -> SyntheticPair {
    let n = config.entities.max(2);
    let n_rel = config.relations.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let target_triples = ((n as f64) * config.average_degree / 2.0).round() as usize;
    let mut triples: Vec<(u32, u32, u32)> = Vec::with_capacity(target_triples.max(n));
    for i in 1..n {
        let j = rng.random_range(0..i);
        let r = rng.random_range(0..n_rel);
        if rng.random_bool(0.5) {
            triples.push((i as u32, r as u32, j as u32));
        } else {
            triples.push((j as u32, r as u32, i as u32));
        }
    }
    while triples.len() < target_triples {
        let h = rng.random_range(0..n);
        let t = rng.random_range(0..n);
        if h == t {
            continue;
        }
        triples.push((h as u32, rng.random_range(0..n_rel) as u32, t as u32));
    }
    triples.sort_unstable();
    triples.dedup();

    let source = KnowledgeGraph::from_id_triples(n, n_rel, triples.iter().copied());

    let mut permutation: Vec<usize> = (0..n).collect();
    permutation.shuffle(&mut rng);
    let mut relabelled: Vec<(String, String, String)> = triples
        .iter()
        .filter(|_| config.drop_rate <= 0.0 || !rng.random_bool(config.drop_rate.min(1.0)))
        .map(|&(h, r, t)| {
            (
                format!("x{}", permutation[h as usize]),
                format!("p{r}"),
                format!("x{}", permutation[t as usize]),
            )
        })
        .collect();
    relabelled.shuffle(&mut rng);
    let target = KnowledgeGraph::load_graph(relabelled);

    let gold = (0..n)
        .filter_map(|i| {
            let t = target.entity_id(&format!("x{}", permutation[i]))?;
            Some((EntityId(i as u32), t))
        })
        .collect();

    SyntheticPair {
        pair: KnowledgeGraphPair::new(source, target),
        gold,
    }
}
