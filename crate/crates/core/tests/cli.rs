use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kgalign::io::dataset::{write_links, ALL_LINKS, SOURCE_TRIPLES, TARGET_TRIPLES};
use kgalign::io::report::{METRICS_FILE, PREDICTIONS_FILE};
use kgalign::synthetic::{generate, SyntheticConfig};

fn kgalign(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgalign"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn dataset(dir: &Path, entities: usize) {
    let syn = generate(&SyntheticConfig {
        entities,
        relations: 6,
        seed: 5,
        ..Default::default()
    });
    let pair = &syn.pair;
    pair.source.write_tsv(fs::File::create(dir.join(SOURCE_TRIPLES)).unwrap()).unwrap();
    pair.target.write_tsv(fs::File::create(dir.join(TARGET_TRIPLES)).unwrap()).unwrap();
    let labels = syn
        .gold
        .iter()
        .map(|&(s, t)| (pair.source.entity_label(s), pair.target.entity_label(t)));
    write_links(fs::File::create(dir.join(ALL_LINKS)).unwrap(), labels).unwrap();
}

fn run_dirs(root: &Path) -> Vec<PathBuf> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root).unwrap().map(|e| e.unwrap().path()).collect();
    dirs.sort();
    dirs
}

fn align_args<'a>(data: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "align", data, "--out", out, "--iterations", "2", "--seed", "3", "--train-ratio", "0.3",
    ]
}

#[test]
fn align_is_reproducible_and_evaluable() {
    let data = tempfile::tempdir().unwrap();
    dataset(data.path(), 80);
    let out = tempfile::tempdir().unwrap();
    let (d, o) = (data.path().to_str().unwrap(), out.path().to_str().unwrap());

    let text = stdout(&kgalign(&align_args(d, o)));
    assert!(text.contains("hit@1\t"), "{text}");
    stdout(&kgalign(&align_args(d, o)));
    let dirs = run_dirs(out.path());
    assert_eq!(dirs.len(), 2);
    for file in [PREDICTIONS_FILE, METRICS_FILE] {
        assert_eq!(
            fs::read(dirs[0].join(file)).unwrap(),
            fs::read(dirs[1].join(file)).unwrap(),
            "{file} differs between identical runs"
        );
    }

    // eval on the written predictions reproduces the run's metrics
    let split_dir = tempfile::tempdir().unwrap();
    let s = split_dir.path().to_str().unwrap();
    let split = stdout(&kgalign(&[
        "split",
        data.path().join(ALL_LINKS).to_str().unwrap(),
        "--ratios",
        "0.3,0.1",
        "--seed",
        "3",
        "--out",
        s,
    ]));
    assert_eq!(split, "train\t24\nvalidation\t8\ntest\t48\n");
    let eval = stdout(&kgalign(&[
        "eval",
        "--predictions",
        dirs[0].join(PREDICTIONS_FILE).to_str().unwrap(),
        "--gold",
        split_dir.path().join("test_links").to_str().unwrap(),
    ]));
    assert_eq!(eval, fs::read_to_string(dirs[0].join(METRICS_FILE)).unwrap());
}

#[test]
fn explain_from_state_and_inline() {
    let data = tempfile::tempdir().unwrap();
    dataset(data.path(), 60);
    let out = tempfile::tempdir().unwrap();
    let queries = data.path().join("queries");
    let links = fs::read_to_string(data.path().join(ALL_LINKS)).unwrap();
    fs::write(&queries, links.lines().take(2).collect::<Vec<_>>().join("\n")).unwrap();

    let mut args = align_args(data.path().to_str().unwrap(), out.path().to_str().unwrap());
    args.extend(["--explain", queries.to_str().unwrap(), "--dump-tables", "--save-model"]);
    stdout(&kgalign(&args));
    let run = run_dirs(out.path()).remove(0);
    for name in ["explanation-001.txt", "explanation-002.txt", "model.bin", "tables/truth_scores.tsv"] {
        assert!(run.join(name).is_file(), "missing {name}");
    }

    let text = stdout(&kgalign(&[
        "explain",
        data.path().to_str().unwrap(),
        "--pairs",
        queries.to_str().unwrap(),
        "--mode",
        "soft",
        "--rule-length",
        "2",
        "--state",
        run.to_str().unwrap(),
    ]));
    assert_eq!(text.matches("query: ").count(), 2, "{text}");
}

#[test]
fn errors_exit_nonzero() {
    let data = tempfile::tempdir().unwrap();
    fs::write(data.path().join(SOURCE_TRIPLES), "a\tr\tb\n").unwrap();
    let out = kgalign(&["align", data.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains(TARGET_TRIPLES));

    fs::write(data.path().join(TARGET_TRIPLES), "x\ts\ty\n").unwrap();
    fs::write(data.path().join("train_links"), "a\tx\nzz\ty\n").unwrap();
    let out = kgalign(&["align", data.path().to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(":2:") && err.contains("zz"), "{err}");

    let out = kgalign(&["align", data.path().to_str().unwrap(), "--delta", "1.5"]);
    assert!(!out.status.success());
}
