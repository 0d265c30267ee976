//! Run output directory.
//!
//! ```text
//! run-<UTC timestamp>[-n]/
//!   manifest.json       config, history, input hashes, subrelation table
//!   predictions.tsv     source<TAB>target<TAB>score<TAB>origin
//!   metrics.tsv         metric<TAB>value
//!   explanation-NNN.txt one per explained pair (optional)
//!   tables/             functionality, subrelation and truth dumps (optional)
//!   model.bin           neural checkpoint (optional)
//! ```
//!
//! `predictions.tsv` lists observed pairs first, then for every other
//! source its ranked candidates in rank order. A row's origin is
//! `symbolic` or `neural` when it belongs to the one-to-one alignment and
//! `ranked` otherwise. Only `manifest.json` depends on wall-clock time.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::em::{EmConfig, EmState, FusedPredictions, IterationRecord, Prediction};
use crate::error::{Error, Result};
use crate::eval::{evaluate_binary, evaluate_ranking, MetricsReport};
use crate::io::dataset::InputFile;
use crate::kg::{EntityId, KnowledgeGraphPair};
use crate::neural::{AlignmentModel, LabelOrigin};
use crate::symbolic::{FunctionalityTable, SubrelationTable};

pub const OUTPUT_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PREDICTIONS_FILE: &str = "predictions.tsv";
pub const METRICS_FILE: &str = "metrics.tsv";
pub const TABLES_DIR: &str = "tables";
pub const MODEL_FILE: &str = "model.bin";
/// Ranked candidates written per source.
pub const PREDICTION_DEPTH: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

/// One subrelation pair with both inclusion directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubrelationRecord {
    pub source: String,
    pub target: String,
    pub source_in_target: f64,
    pub target_in_source: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub tool_version: String,
    pub created: String,
    pub config: EmConfig,
    pub split: SplitSizes,
    pub inputs: Vec<InputFile>,
    pub history: Vec<IterationRecord>,
    pub subrelations: Vec<SubrelationRecord>,
}

impl Manifest {
    pub fn new<M>(
        pair: &KnowledgeGraphPair,
        config: &EmConfig,
        state: &EmState<M>,
        inputs: Vec<InputFile>,
        split: SplitSizes,
    ) -> Self {
        Manifest {
            format_version: OUTPUT_FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            created: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            config: config.clone(),
            split,
            inputs,
            history: state.history.clone(),
            subrelations: subrelation_records(pair, &state.psub),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_owned()));
        }
        let manifest: Manifest = serde_json::from_slice(&fs::read(path)?)
            .map_err(|e| Error::State(format!("{}: {e}", path.display())))?;
        if manifest.format_version != OUTPUT_FORMAT_VERSION {
            return Err(Error::State(format!(
                "unsupported output format version {}",
                manifest.format_version
            )));
        }
        Ok(manifest)
    }
}

/// Both inclusion directions per relation pair, sorted by labels.
pub fn subrelation_records(pair: &KnowledgeGraphPair, psub: &SubrelationTable) -> Vec<SubrelationRecord> {
    let keys: BTreeSet<_> = psub
        .source_in_target_entries()
        .into_iter()
        .map(|(d, d_t, _)| (d, d_t))
        .chain(psub.target_in_source_entries().into_iter().map(|(d_t, d, _)| (d, d_t)))
        .collect();
    let mut records: Vec<SubrelationRecord> = keys
        .into_iter()
        .map(|(d, d_t)| SubrelationRecord {
            source: pair.source.directed_label(d),
            target: pair.target.directed_label(d_t),
            source_in_target: psub.source_in_target(d, d_t),
            target_in_source: psub.target_in_source(d_t, d),
        })
        .collect();
    records.sort_by(|a, b| (&a.source, &a.target).cmp(&(&b.source, &b.target)));
    records
}

pub fn subrelations_from_records(pair: &KnowledgeGraphPair, records: &[SubrelationRecord]) -> Result<SubrelationTable> {
    let mut table = SubrelationTable::new();
    for r in records {
        let d = pair
            .source
            .parse_directed_label(&r.source)
            .ok_or_else(|| Error::State(format!("unknown source relation `{}`", r.source)))?;
        let d_t = pair
            .target
            .parse_directed_label(&r.target)
            .ok_or_else(|| Error::State(format!("unknown target relation `{}`", r.target)))?;
        if r.source_in_target > 0.0 {
            table.set_source_in_target(d, d_t, r.source_in_target);
        }
        if r.target_in_source > 0.0 {
            table.set_target_in_source(d_t, d, r.target_in_source);
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowOrigin {
    Observed,
    Symbolic,
    Neural,
    Ranked,
}

impl RowOrigin {
    pub fn as_str(self) -> &'static str {
        match self {
            RowOrigin::Observed => "observed",
            RowOrigin::Symbolic => "symbolic",
            RowOrigin::Neural => "neural",
            RowOrigin::Ranked => "ranked",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "observed" => Some(RowOrigin::Observed),
            "symbolic" => Some(RowOrigin::Symbolic),
            "neural" => Some(RowOrigin::Neural),
            "ranked" => Some(RowOrigin::Ranked),
            _ => None,
        }
    }

    /// Rows that belong to the one-to-one alignment.
    pub fn is_binary(self) -> bool {
        self != RowOrigin::Ranked
    }
}

impl From<LabelOrigin> for RowOrigin {
    fn from(o: LabelOrigin) -> Self {
        match o {
            LabelOrigin::Observed => RowOrigin::Observed,
            LabelOrigin::Symbolic => RowOrigin::Symbolic,
            LabelOrigin::Neural => RowOrigin::Neural,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub source: String,
    pub target: String,
    pub score: f64,
    pub origin: RowOrigin,
}

/// Flattens fused predictions into output rows.
pub fn prediction_rows(pair: &KnowledgeGraphPair, fused: &FusedPredictions) -> Vec<PredictionRow> {
    let row = |s: EntityId, t: EntityId, score: f64, origin: RowOrigin| PredictionRow {
        source: pair.source.entity_label(s).to_owned(),
        target: pair.target.entity_label(t).to_owned(),
        score,
        origin,
    };
    let mut observed: Vec<&Prediction> = fused
        .alignments
        .iter()
        .filter(|p| p.origin == LabelOrigin::Observed)
        .collect();
    observed.sort_by_key(|p| (p.source, p.target));
    let mut rows: Vec<PredictionRow> = observed
        .iter()
        .map(|p| row(p.source, p.target, p.score, RowOrigin::Observed))
        .collect();

    let binary: HashMap<EntityId, &Prediction> = fused
        .alignments
        .iter()
        .filter(|p| p.origin != LabelOrigin::Observed)
        .map(|p| (p.source, p))
        .collect();
    let sources: BTreeSet<EntityId> = fused.ranked.keys().copied().chain(binary.keys().copied()).collect();
    for s in sources {
        let chosen = binary.get(&s);
        let mut listed = false;
        for &(t, score) in fused.ranked.get(&s).map_or(&[][..], Vec::as_slice).iter().take(PREDICTION_DEPTH) {
            match chosen {
                Some(p) if p.target == t => {
                    listed = true;
                    rows.push(row(s, t, p.score, p.origin.into()));
                }
                _ => rows.push(row(s, t, score, RowOrigin::Ranked)),
            }
        }
        if let (Some(p), false) = (chosen, listed) {
            rows.push(row(s, p.target, p.score, p.origin.into()));
        }
    }
    rows
}

pub fn write_predictions<W: Write>(mut w: W, rows: &[PredictionRow]) -> Result<()> {
    for r in rows {
        writeln!(w, "{}\t{}\t{}\t{}", r.source, r.target, r.score, r.origin.as_str())?;
    }
    Ok(())
}

pub fn parse_predictions(text: &str, source_name: &str) -> Result<Vec<PredictionRow>> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let bad = |reason: String| Error::Ingest {
            source_name: source_name.to_owned(),
            line: idx + 1,
            reason,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(bad(format!("expected 4 tab-separated fields, found {}", fields.len())));
        }
        let score: f64 = fields[2].parse().map_err(|_| bad(format!("invalid score `{}`", fields[2])))?;
        let origin = RowOrigin::parse(fields[3]).ok_or_else(|| bad(format!("unknown origin `{}`", fields[3])))?;
        rows.push(PredictionRow {
            source: fields[0].to_owned(),
            target: fields[1].to_owned(),
            score,
            origin,
        });
    }
    Ok(rows)
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_owned()));
    }
    parse_predictions(&fs::read_to_string(path)?, &path.display().to_string())
}

/// Ranking metrics over non-observed rows in file order, merged with
/// binary metrics of the predicted alignment restricted to gold sources.
pub fn evaluate_rows(rows: &[PredictionRow], gold: &[(String, String)], ks: &[usize]) -> MetricsReport {
    let mut ranked: HashMap<String, Vec<String>> = HashMap::new();
    for r in rows.iter().filter(|r| r.origin != RowOrigin::Observed) {
        ranked.entry(r.source.clone()).or_default().push(r.target.clone());
    }
    let gold_sources: BTreeSet<&str> = gold.iter().map(|(s, _)| s.as_str()).collect();
    let binary: Vec<(String, String)> = rows
        .iter()
        .filter(|r| matches!(r.origin, RowOrigin::Symbolic | RowOrigin::Neural))
        .filter(|r| gold_sources.contains(r.source.as_str()))
        .map(|r| (r.source.clone(), r.target.clone()))
        .collect();
    evaluate_ranking(&ranked, gold, ks).merged_with_binary(&evaluate_binary(&binary, gold))
}

/// Creates `run-<timestamp>` under `root`, adding `-2`, `-3`, ... on
/// collision.
pub fn create_run_dir(root: &Path) -> Result<PathBuf> {
    fs::create_dir_all(root)?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    for n in 1.. {
        let name = if n == 1 {
            format!("run-{stamp}")
        } else {
            format!("run-{stamp}-{n}")
        };
        let dir = root.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    unreachable!("unbounded suffix search")
}

pub fn explanation_file_name(index: usize) -> String {
    format!("explanation-{:03}.txt", index + 1)
}

/// Writes manifest, predictions, metrics and explanation reports into a
/// fresh run directory under `out_root` and returns its path.
pub fn emit_report(
    out_root: &Path,
    manifest: &Manifest,
    rows: &[PredictionRow],
    metrics: &MetricsReport,
    explanations: &[String],
) -> Result<PathBuf> {
    let dir = create_run_dir(out_root)?;
    let mut w = BufWriter::new(fs::File::create(dir.join(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(&mut w, manifest).map_err(std::io::Error::from)?;
    writeln!(w)?;
    w.flush()?;

    let mut w = BufWriter::new(fs::File::create(dir.join(PREDICTIONS_FILE))?);
    write_predictions(&mut w, rows)?;
    w.flush()?;

    let mut w = BufWriter::new(fs::File::create(dir.join(METRICS_FILE))?);
    metrics.write_tsv(&mut w)?;
    w.flush()?;

    for (i, text) in explanations.iter().enumerate() {
        fs::write(dir.join(explanation_file_name(i)), text)?;
    }
    Ok(dir)
}

fn write_functionality(path: &Path, kg: &crate::kg::KnowledgeGraph, eta: &FunctionalityTable) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for (d, v) in eta.iter() {
        writeln!(w, "{}\t{v}", kg.directed_label(d))?;
    }
    w.flush()?;
    Ok(())
}

/// Dumps functionality, subrelation and truth-score tables under
/// `dir/tables`.
pub fn write_tables<M: AlignmentModel>(dir: &Path, pair: &KnowledgeGraphPair, state: &EmState<M>) -> Result<()> {
    let tables = dir.join(TABLES_DIR);
    fs::create_dir_all(&tables)?;
    write_functionality(&tables.join("functionality_source.tsv"), &pair.source, &state.eta_source)?;
    write_functionality(&tables.join("functionality_target.tsv"), &pair.target, &state.eta_target)?;
    let mut w = BufWriter::new(fs::File::create(tables.join("subrelation_source_in_target.tsv"))?);
    state.psub.write_source_in_target_tsv(pair, &mut w)?;
    w.flush()?;
    let mut w = BufWriter::new(fs::File::create(tables.join("subrelation_target_in_source.tsv"))?);
    state.psub.write_target_in_source_tsv(pair, &mut w)?;
    w.flush()?;
    let mut w = BufWriter::new(fs::File::create(tables.join("truth_scores.tsv"))?);
    state.truth_scores.write_tsv(pair, &mut w)?;
    w.flush()?;
    Ok(())
}

/// What `explain` needs from a finished run.
#[derive(Debug, Clone)]
pub struct RunState {
    pub manifest: Manifest,
    pub psub: SubrelationTable,
    /// One-to-one alignment rows, resolved to ids.
    pub alignments: Vec<Prediction>,
}

pub fn load_run_state(dir: &Path, pair: &KnowledgeGraphPair) -> Result<RunState> {
    let manifest = Manifest::load(&dir.join(MANIFEST_FILE))?;
    let psub = subrelations_from_records(pair, &manifest.subrelations)?;
    let rows = read_predictions(&dir.join(PREDICTIONS_FILE))?;
    let mut alignments = Vec::new();
    for r in rows.iter().filter(|r| r.origin.is_binary()) {
        let source = pair
            .source
            .entity_id(&r.source)
            .ok_or_else(|| Error::State(format!("prediction source `{}` not in graph", r.source)))?;
        let target = pair
            .target
            .entity_id(&r.target)
            .ok_or_else(|| Error::State(format!("prediction target `{}` not in graph", r.target)))?;
        let origin = match r.origin {
            RowOrigin::Observed => LabelOrigin::Observed,
            RowOrigin::Symbolic => LabelOrigin::Symbolic,
            _ => LabelOrigin::Neural,
        };
        alignments.push(Prediction {
            source,
            target,
            score: r.score,
            origin,
        });
    }
    Ok(RunState {
        manifest,
        psub,
        alignments,
    })
}

/// Groups rows by source, preserving file order.
pub fn rows_by_source(rows: &[PredictionRow]) -> BTreeMap<&str, Vec<&PredictionRow>> {
    let mut out: BTreeMap<&str, Vec<&PredictionRow>> = BTreeMap::new();
    for r in rows {
        out.entry(r.source.as_str()).or_default().push(r);
    }
    out
}
