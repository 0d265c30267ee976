use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kgalign::em::{run_default, EmConfig};
use kgalign::error::{Error, Result};
use kgalign::explain::{explain, render_report, AnchorMode, AnchorSet, ExplainOptions, RuleWeights};
use kgalign::io::dataset::{load_graphs, parse_links, write_links, LinkRecord, TEST_LINKS, TRAIN_LINKS, VALID_LINKS};
use kgalign::io::report::{
    evaluate_rows, explanation_file_name, read_predictions, write_tables, SplitSizes, MODEL_FILE,
};
use kgalign::io::{
    emit_report, load_config, load_dataset, load_run_state, prediction_rows, split_seed, DatasetBundle, Manifest,
    SplitOptions,
};
use kgalign::kg::{EntityPair, KnowledgeGraphPair};
use kgalign::neural::save_checkpoint;
use kgalign::symbolic::compute_functionalities;

#[derive(Parser)]
#[command(name = "kgalign", version, about = "Align entities across two knowledge graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run EM alignment on a dataset directory.
    Align(AlignArgs),
    /// Explain aligned pairs using the state of a finished run.
    Explain(ExplainArgs),
    /// Score a predictions file against gold links.
    Eval(EvalArgs),
    /// Split a links file into train, validation and test files.
    Split(SplitArgs),
}

#[derive(Args)]
struct AlignArgs {
    dataset: PathBuf,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    rule_length: Option<usize>,
    /// Share of `ent_links` used for training when the links are not pre-split.
    #[arg(long, default_value_t = 0.2)]
    train_ratio: f64,
    #[arg(long, default_value_t = 0.1)]
    valid_ratio: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    symbolic_only: bool,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// TOML configuration; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Links file of pairs to explain after the run.
    #[arg(long)]
    explain: Option<PathBuf>,
    #[arg(long, default_value = "hard")]
    explain_mode: AnchorMode,
    /// Write functionality, subrelation and truth-score tables.
    #[arg(long)]
    dump_tables: bool,
    /// Write the trained neural model.
    #[arg(long)]
    save_model: bool,
    /// Worker threads for the symbolic engine; 0 uses all cores.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ExplainArgs {
    dataset: PathBuf,
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long, default_value = "hard")]
    mode: AnchorMode,
    #[arg(long, default_value_t = 2)]
    rule_length: usize,
    /// Run directory produced by `align`.
    #[arg(long)]
    state: PathBuf,
    /// Directory for the reports; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Enumerate every simple path instead of shortest paths only.
    #[arg(long)]
    exhaustive: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 10])]
    ks: Vec<usize>,
}

#[derive(Args)]
struct SplitArgs {
    links: PathBuf,
    /// Train and validation ratios; the test set takes the rest.
    #[arg(long, value_delimiter = ',', default_values_t = [0.2f64, 0.1])]
    ratios: Vec<f64>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn read_link_records(path: &Path) -> Result<Vec<LinkRecord>> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_owned()));
    }
    parse_links(&fs::read_to_string(path)?, &path.display().to_string())
}

fn resolve_queries(pair: &KnowledgeGraphPair, path: &Path) -> Result<Vec<EntityPair>> {
    kgalign::io::dataset::resolve_links(pair, &read_link_records(path)?, path)
}

fn align(args: AlignArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => load_config(path)?,
        None => EmConfig::default(),
    };
    if let Some(v) = args.delta {
        config.delta = v;
    }
    if let Some(v) = args.iterations {
        config.iterations = v;
    }
    if let Some(v) = args.rule_length {
        config.rule_length = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.workers {
        config.propagation.workers = v;
    }
    config.symbolic_only |= args.symbolic_only;
    config.validate()?;

    let split = SplitOptions {
        train_ratio: args.train_ratio,
        valid_ratio: args.valid_ratio,
        seed: config.seed,
    };
    let DatasetBundle {
        graphs: pair,
        train,
        validation,
        test,
        provenance,
    } = load_dataset(&args.dataset, &split)?;
    let run = run_default(&pair, train.pairs(), &config, None)?;

    let rows = prediction_rows(&pair, &run.predictions);
    let gold: Vec<(String, String)> = test
        .pairs()
        .iter()
        .map(|&(s, t)| (pair.source.entity_label(s).to_owned(), pair.target.entity_label(t).to_owned()))
        .collect();
    let metrics = evaluate_rows(&rows, &gold, &[1, 10]);

    let mut explanations = Vec::new();
    if let Some(path) = &args.explain {
        let anchors = AnchorSet::from_predictions(&run.predictions.alignments, args.explain_mode);
        let weights = RuleWeights {
            eta_source: &run.state.eta_source,
            eta_target: &run.state.eta_target,
            psub: &run.state.psub,
        };
        let options = ExplainOptions {
            rule_length: config.rule_length,
            exhaustive: false,
        };
        for query in resolve_queries(&pair, path)? {
            let rules = explain(&pair, weights, &anchors, query, options)?;
            explanations.push(render_report(&pair, query, &rules));
        }
    }

    let sizes = SplitSizes {
        train: train.len(),
        validation: validation.len(),
        test: test.len(),
    };
    let manifest = Manifest::new(&pair, &config, &run.state, provenance, sizes);
    let dir = emit_report(&args.out, &manifest, &rows, &metrics, &explanations)?;
    if args.dump_tables {
        write_tables(&dir, &pair, &run.state)?;
    }
    if args.save_model {
        if let Some(model) = &run.state.model {
            save_checkpoint(model, &dir.join(MODEL_FILE))?;
        }
    }
    for (name, value) in metrics.entries() {
        println!("{name}\t{value}");
    }
    println!("output\t{}", dir.display());
    Ok(())
}

fn explain_cmd(args: ExplainArgs) -> Result<()> {
    if args.rule_length == 0 {
        return Err(Error::Config("rule length must be at least 1".into()));
    }
    let pair = &load_graphs(&args.dataset)?;
    let state = load_run_state(&args.state, pair)?;
    let eta_source = compute_functionalities(&pair.source);
    let eta_target = compute_functionalities(&pair.target);
    let weights = RuleWeights {
        eta_source: &eta_source,
        eta_target: &eta_target,
        psub: &state.psub,
    };
    let anchors = AnchorSet::from_predictions(&state.alignments, args.mode);
    let options = ExplainOptions {
        rule_length: args.rule_length,
        exhaustive: args.exhaustive,
    };
    if let Some(out) = &args.out {
        fs::create_dir_all(out)?;
    }
    for (i, query) in resolve_queries(pair, &args.pairs)?.into_iter().enumerate() {
        let rules = explain(pair, weights, &anchors, query, options)?;
        let text = render_report(pair, query, &rules);
        match &args.out {
            Some(out) => fs::write(out.join(explanation_file_name(i)), text)?,
            None => print!("{text}"),
        }
    }
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> Result<()> {
    let rows = read_predictions(&args.predictions)?;
    let gold: Vec<(String, String)> = read_link_records(&args.gold)?
        .into_iter()
        .map(|l| (l.source, l.target))
        .collect();
    let metrics = evaluate_rows(&rows, &gold, &args.ks);
    metrics.write_tsv(std::io::stdout().lock())
}

fn split_cmd(args: SplitArgs) -> Result<()> {
    let [train_ratio, valid_ratio] = args.ratios[..] else {
        return Err(Error::Config("--ratios takes exactly two values: train,validation".into()));
    };
    let records = read_link_records(&args.links)?;
    let (train, valid, test) = split_seed(&records, train_ratio, valid_ratio, args.seed)?;
    fs::create_dir_all(&args.out)?;
    for (name, set) in [(TRAIN_LINKS, &train), (VALID_LINKS, &valid), (TEST_LINKS, &test)] {
        let file = std::io::BufWriter::new(fs::File::create(args.out.join(name))?);
        write_links(file, set.iter().map(|l| (&l.source, &l.target)))?;
    }
    println!("train\t{}\nvalidation\t{}\ntest\t{}", train.len(), valid.len(), test.len());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Align(a) => align(a),
        Command::Explain(a) => explain_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Split(a) => split_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
