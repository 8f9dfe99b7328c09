use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
[benchmark]
unlabeled_sentences = 300
train_sentences = 200
test_sentences = 40
[model]
hidden_dim = 16
n_layers = 1
n_heads = 2
ffn_dim = 32
[pretrain]
steps = 40
[train]
epochs = 2
[experiment]
k = [1, 2, 3, 4]
splits = 2
repeats = 2
methods = ["data_lm", "data+virtual", "tagger"]
"#;

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    dir
}

fn entlm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_entlm"))
        .current_dir(dir)
        .env("ENTLM_OUTPUT_ROOT", dir.join("out"))
        .arg("--config")
        .arg(dir.join("tiny.toml"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = entlm(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join("out").join(name)).unwrap()
}

fn prepare(dir: &Path) {
    for cmd in ["generate", "annotate", "pretrain"] {
        ok(dir, &[cmd]);
    }
}

#[test]
fn step_by_step_pipeline() {
    let dir = setup();
    let d = dir.path();
    prepare(d);
    ok(d, &["--method", "data_lm", "--th", "0.6", "--topk", "6", "select"]);
    let map: serde_json::Value = serde_json::from_str(&read(d, "labelwords.json")).unwrap();
    assert_eq!(map["mode"], "discrete");
    for class in ["PER", "LOC", "ORG"] {
        let words = map["classes"][class]["words"].as_array().unwrap();
        assert!(!words.is_empty() && words.len() <= 6, "{class}: {words:?}");
    }
    let counts = ok(d, &["--K", "3", "--seed", "1", "sample"]);
    assert!(counts.contains("PER=3 LOC=3 ORG=3"), "{counts}");
    ok(d, &["finetune"]);
    ok(d, &["decode"]);
    let metrics = ok(d, &["eval"]);
    assert!(metrics.starts_with("P="), "{metrics}");
    let report: serde_json::Value = serde_json::from_str(&read(d, "metrics.json")).unwrap();
    assert!(report["f1"].is_number() && report["per_class"]["PER"]["tp"].is_number());
    let cost = ok(d, &["bench"]);
    assert!(cost.contains("one-pass\t40\t"), "{cost}");
    let cost: serde_json::Value = serde_json::from_str(&read(d, "cost.json")).unwrap();
    assert_eq!(cost["greedy"]["forwards"], 40);

    ok(d, &["--method", "tagger", "finetune"]);
    ok(d, &["decode"]);
    ok(d, &["eval"]);
}

#[test]
fn decode_of_all_o_toy_is_all_o() {
    let dir = setup();
    let d = dir.path();
    prepare(d);
    ok(d, &["--method", "data", "select"]);
    let test = read(d, "test.conll");
    let all_o: String = test
        .lines()
        .map(|l| match l.split_once('\t') {
            Some((tok, _)) => format!("{tok}\tO\n"),
            None => "\n".into(),
        })
        .collect();
    std::fs::write(d.join("out/support.conll"), &all_o).unwrap();
    std::fs::write(d.join("toy.conll"), &all_o).unwrap();
    ok(d, &["--epochs", "30", "--lr", "0.01", "finetune"]);
    ok(d, &["decode", "--input", "toy.conll"]);
    let pred = read(d, "predictions.conll");
    assert!(!pred.is_empty());
    for line in pred.lines().filter(|l| !l.is_empty()) {
        assert!(line.ends_with("\tO"), "{line}");
    }
    assert_eq!(pred, all_o);
}

#[test]
fn run_all_table_is_reproducible() {
    let dir = setup();
    let d = dir.path();
    let first = ok(d, &["run-all"]);
    let tsv = read(d, "results.tsv");
    let jsonl = read(d, "results.jsonl");
    assert_eq!(first, tsv);
    let mut lines = tsv.lines();
    assert_eq!(lines.next().unwrap(), "method\tK=1\tK=2\tK=3\tK=4");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let cells: Vec<&str> = row.split('\t').collect();
        assert_eq!(cells.len(), 5, "{row}");
        for cell in &cells[1..] {
            let (mean, std) = cell.strip_suffix(')').unwrap().split_once('(').unwrap();
            mean.parse::<f64>().unwrap();
            std.parse::<f64>().unwrap();
        }
    }
    assert_eq!(jsonl.lines().count(), 12);
    assert_eq!(read(d, "runs.jsonl").lines().count(), 3 * 4 * 2 * 2);

    ok(d, &["run-all"]);
    assert_eq!(read(d, "results.tsv"), tsv);
    assert_eq!(read(d, "results.jsonl"), jsonl);
}

#[test]
fn commands_are_idempotent() {
    let dir = setup();
    let d = dir.path();
    ok(d, &["generate"]);
    ok(d, &["annotate"]);
    let files = ["train.conll", "test.conll", "lexicon.tsv", "unlabeled.txt", "annotated.conll", "vocab.txt"];
    let before: Vec<String> = files.iter().map(|f| read(d, f)).collect();
    ok(d, &["generate"]);
    ok(d, &["annotate"]);
    let after: Vec<String> = files.iter().map(|f| read(d, f)).collect();
    assert_eq!(before, after);
}

#[test]
fn errors_exit_non_zero_with_message() {
    let dir = setup();
    let d = dir.path();
    let fail = |args: &[&str], needle: &str| {
        let out = entlm(d, args);
        assert!(!out.status.success(), "{args:?} succeeded");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(needle), "{args:?}: {err}");
    };
    fail(&["finetune"], "vocab.txt");
    ok(d, &["generate"]);
    fail(&["--K", "1000", "sample"], "infeasible");
    fail(&["--method", "bogus", "select"], "bogus");
    fail(&["--th", "2", "generate"], "threshold");
    std::fs::write(d.join("tiny.toml"), "[experiment]\nsplitz = 1\n").unwrap();
    fail(&["generate"], "splitz");
}

#[test]
fn output_root_flag_and_env() {
    let dir = setup();
    let d = dir.path();
    ok(d, &["--out", "elsewhere", "generate"]);
    assert!(d.join("elsewhere/train.conll").is_file());
    assert!(!d.join("out/train.conll").exists());
    ok(d, &["generate"]);
    assert!(d.join("out/train.conll").is_file());
}
