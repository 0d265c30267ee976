use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kg::{AlignmentSeed, EntityPair, KnowledgeGraph, KnowledgeGraphPair, SeedRole};

pub const SOURCE_TRIPLES: &str = "rel_triples_1";
pub const TARGET_TRIPLES: &str = "rel_triples_2";
pub const ALL_LINKS: &str = "ent_links";
pub const TRAIN_LINKS: &str = "train_links";
pub const VALID_LINKS: &str = "valid_links";
pub const TEST_LINKS: &str = "test_links";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: PathBuf,
    /// Lower-case hex SHA-256 of the file contents.
    pub sha256: String,
}

/// How `ent_links` is divided when no pre-split link files exist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitOptions {
    pub train_ratio: f64,
    pub valid_ratio: f64,
    pub seed: u64,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            train_ratio: 0.2,
            valid_ratio: 0.1,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub graphs: KnowledgeGraphPair,
    pub train: AlignmentSeed,
    pub validation: AlignmentSeed,
    pub test: AlignmentSeed,
    pub provenance: Vec<InputFile>,
}

/// Labelled link with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkRecord {
    pub source: String,
    pub target: String,
    pub line: usize,
}

fn read_hashed(path: &Path, provenance: &mut Vec<InputFile>) -> Result<String> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_owned()));
    }
    let bytes = fs::read(path)?;
    provenance.push(InputFile {
        path: path.to_owned(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    });
    String::from_utf8(bytes).map_err(|e| Error::Ingest {
        source_name: path.display().to_string(),
        line: 0,
        reason: format!("not UTF-8: {e}"),
    })
}

/// Parses `source<TAB>target` lines; blank lines are skipped.
pub fn parse_links(text: &str, source_name: &str) -> Result<Vec<LinkRecord>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Ingest {
                source_name: source_name.to_owned(),
                line: idx + 1,
                reason: format!("expected 2 non-empty tab-separated fields, found {}", fields.len()),
            });
        }
        out.push(LinkRecord {
            source: fields[0].to_owned(),
            target: fields[1].to_owned(),
            line: idx + 1,
        });
    }
    Ok(out)
}

/// Resolves labelled links against both graphs.
pub fn resolve_links(pair: &KnowledgeGraphPair, links: &[LinkRecord], path: &Path) -> Result<Vec<EntityPair>> {
    links
        .iter()
        .map(|l| {
            let dangling = |label: &str, side| Error::DanglingReference {
                path: path.to_owned(),
                line: l.line,
                label: label.to_owned(),
                side,
            };
            let s = pair.source.entity_id(&l.source).ok_or_else(|| dangling(&l.source, "source"))?;
            let t = pair.target.entity_id(&l.target).ok_or_else(|| dangling(&l.target, "target"))?;
            Ok((s, t))
        })
        .collect()
}

/// Writes `source<TAB>target` lines.
pub fn write_links<W: Write>(mut w: W, pairs: impl IntoIterator<Item = (impl AsRef<str>, impl AsRef<str>)>) -> Result<()> {
    for (s, t) in pairs {
        writeln!(w, "{}\t{}", s.as_ref(), t.as_ref())?;
    }
    Ok(())
}

/// Deterministic shuffled split into train, validation and test; test
/// takes the remainder. Sizes are `round(n * ratio)`.
pub fn split_seed<T: Clone>(links: &[T], train_ratio: f64, valid_ratio: f64, seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    if !(train_ratio > 0.0) || valid_ratio < 0.0 || train_ratio + valid_ratio > 1.0 + 1e-12 {
        return Err(Error::Seed(format!(
            "split ratios must be positive with sum at most 1, got {train_ratio} and {valid_ratio}"
        )));
    }
    let n = links.len();
    let n_train = ((n as f64) * train_ratio).round() as usize;
    if n_train == 0 {
        return Err(Error::Seed(format!("train ratio {train_ratio} leaves no training pairs out of {n}")));
    }
    let n_valid = (((n as f64) * valid_ratio).round() as usize).min(n - n_train.min(n));
    let mut shuffled = links.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut rest = shuffled.split_off(n_train.min(n));
    let test = rest.split_off(n_valid);
    Ok((shuffled, rest, test))
}

/// Loads a dataset directory.
///
/// Requires `rel_triples_1` and `rel_triples_2`. Links come from
/// `train_links` (with optional `valid_links` and `test_links`) when
/// present, otherwise from `ent_links` split according to `split`.
pub fn load_dataset(dir: &Path, split: &SplitOptions) -> Result<DatasetBundle> {
    let mut provenance = Vec::new();
    let graph = |name: &str, provenance: &mut Vec<InputFile>| -> Result<KnowledgeGraph> {
        let path = dir.join(name);
        let text = read_hashed(&path, provenance)?;
        KnowledgeGraph::from_reader(text.as_bytes(), &path.display().to_string())
    };
    let source = graph(SOURCE_TRIPLES, &mut provenance)?;
    let target = graph(TARGET_TRIPLES, &mut provenance)?;
    let graphs = KnowledgeGraphPair::new(source, target);

    let links = |name: &str, provenance: &mut Vec<InputFile>| -> Result<Vec<EntityPair>> {
        let path = dir.join(name);
        let text = read_hashed(&path, provenance)?;
        let records = parse_links(&text, &path.display().to_string())?;
        resolve_links(&graphs, &records, &path)
    };

    let (train, validation, test) = if dir.join(TRAIN_LINKS).is_file() {
        let train = links(TRAIN_LINKS, &mut provenance)?;
        let mut validation = Vec::new();
        let mut test = Vec::new();
        for (name, out) in [(VALID_LINKS, &mut validation), (TEST_LINKS, &mut test)] {
            if dir.join(name).is_file() {
                *out = links(name, &mut provenance)?;
            }
        }
        (train, validation, test)
    } else if dir.join(ALL_LINKS).is_file() {
        let all = links(ALL_LINKS, &mut provenance)?;
        split_seed(&all, split.train_ratio, split.valid_ratio, split.seed)?
    } else {
        return Err(Error::MissingFile(dir.join(ALL_LINKS)));
    };

    let train = AlignmentSeed::new(train, SeedRole::Train)?;
    let validation = AlignmentSeed::new(validation, SeedRole::Validation)?;
    let test = AlignmentSeed::new(test, SeedRole::Test)?;
    AlignmentSeed::check_disjoint(&[&train, &validation, &test])?;
    log::info!(
        "loaded {} + {} entities, {} + {} triples, {}/{}/{} links",
        graphs.source.num_entities(),
        graphs.target.num_entities(),
        graphs.source.triples().len(),
        graphs.target.triples().len(),
        train.len(),
        validation.len(),
        test.len()
    );
    Ok(DatasetBundle {
        graphs,
        train,
        validation,
        test,
        provenance,
    })
}

/// Loads only the two triple files of a dataset directory.
pub fn load_graphs(dir: &Path) -> Result<KnowledgeGraphPair> {
    let mut ignored = Vec::new();
    let mut graph = |name: &str| -> Result<KnowledgeGraph> {
        let path = dir.join(name);
        let text = read_hashed(&path, &mut ignored)?;
        KnowledgeGraph::from_reader(text.as_bytes(), &path.display().to_string())
    };
    Ok(KnowledgeGraphPair::new(graph(SOURCE_TRIPLES)?, graph(TARGET_TRIPLES)?))
}

/// Writes a bundle back out in the pre-split layout.
pub fn write_dataset(bundle: &DatasetBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let pair = &bundle.graphs;
    pair.source.write_tsv(fs::File::create(dir.join(SOURCE_TRIPLES))?)?;
    pair.target.write_tsv(fs::File::create(dir.join(TARGET_TRIPLES))?)?;
    for (name, seed) in [
        (TRAIN_LINKS, &bundle.train),
        (VALID_LINKS, &bundle.validation),
        (TEST_LINKS, &bundle.test),
    ] {
        let labels = seed
            .pairs()
            .iter()
            .map(|&(s, t)| (pair.source.entity_label(s), pair.target.entity_label(t)));
        write_links(std::io::BufWriter::new(fs::File::create(dir.join(name))?), labels)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) {
        fs::write(dir.join(name), text).unwrap();
    }

    fn tiny(dir: &Path) {
        write(dir, SOURCE_TRIPLES, "a\tr\tb\nb\tr\tc\n");
        write(dir, TARGET_TRIPLES, "x\ts\ty\ny\ts\tz\n");
    }

    #[test]
    fn split_sizes_follow_ratios() {
        let links: Vec<u32> = (0..15_000).collect();
        let (train, valid, test) = split_seed(&links, 0.2, 0.1, 3).unwrap();
        assert_eq!((train.len(), valid.len(), test.len()), (3000, 1500, 10_500));
        let (train, _, _) = split_seed(&links, 0.01, 0.1, 3).unwrap();
        assert_eq!(train.len(), 150);
        assert_eq!(split_seed(&links, 0.2, 0.1, 3).unwrap().0, split_seed(&links, 0.2, 0.1, 3).unwrap().0);
    }

    #[test]
    fn split_rejects_empty_train() {
        assert!(matches!(split_seed(&[1, 2, 3], 0.1, 0.0, 0), Err(Error::Seed(_))));
        assert!(split_seed(&[1, 2, 3], 0.8, 0.5, 0).is_err());
    }

    #[test]
    fn missing_target_triples() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), SOURCE_TRIPLES, "a\tr\tb\n");
        let err = load_dataset(dir.path(), &SplitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::MissingFile(p) if p.ends_with(TARGET_TRIPLES)));
    }

    #[test]
    fn dangling_link_names_line() {
        let dir = tempfile::tempdir().unwrap();
        tiny(dir.path());
        write(dir.path(), TRAIN_LINKS, "a\tx\nq\ty\n");
        match load_dataset(dir.path(), &SplitOptions::default()).unwrap_err() {
            Error::DanglingReference { line, label, side, .. } => {
                assert_eq!((line, label.as_str(), side), (2, "q", "source"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn presplit_and_hashes() {
        let dir = tempfile::tempdir().unwrap();
        tiny(dir.path());
        write(dir.path(), TRAIN_LINKS, "a\tx\n");
        write(dir.path(), TEST_LINKS, "b\ty\nc\tz\n");
        let bundle = load_dataset(dir.path(), &SplitOptions::default()).unwrap();
        assert_eq!((bundle.train.len(), bundle.validation.len(), bundle.test.len()), (1, 0, 2));
        assert_eq!(bundle.provenance.len(), 4);
        assert_eq!(bundle.provenance[0].sha256.len(), 64);
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        tiny(dir.path());
        write(dir.path(), ALL_LINKS, "a\tx\nb\ty\nc\tz\n");
        let split = SplitOptions {
            train_ratio: 0.34,
            valid_ratio: 0.0,
            seed: 1,
        };
        let bundle = load_dataset(dir.path(), &split).unwrap();
        let out = tempfile::tempdir().unwrap();
        write_dataset(&bundle, out.path()).unwrap();
        let back = load_dataset(out.path(), &split).unwrap();
        assert_eq!(back.graphs.source.to_records(), bundle.graphs.source.to_records());
        assert_eq!(back.graphs.target.to_records(), bundle.graphs.target.to_records());
        assert_eq!(back.train.pairs(), bundle.train.pairs());
        assert_eq!(back.test.pairs(), bundle.test.pairs());
    }
}
