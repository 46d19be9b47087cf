use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde_json::{json, Value};
use xlnbt::cli::{read_config, resolve, run_with, Settings, EXIT_FAILURE, EXIT_OK, EXIT_USAGE};
use xlnbt::eval::MetricsReport;

fn run(args: &[&str]) -> (i32, String) {
    run_input(args, "")
}

fn run_input(args: &[&str], input: &str) -> (i32, String) {
    let mut out = Vec::new();
    let argv = std::iter::once("xlnbt").chain(args.iter().copied());
    let code = run_with(argv, &mut Cursor::new(input.as_bytes()), &mut out, false);
    (code, String::from_utf8(out).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A generated task and a teacher trained on it, shared by the tests.
struct Task {
    dir: tempfile::TempDir,
    config: PathBuf,
}

impl Task {
    fn data(&self, f: &str) -> String {
        self.dir.path().join("data").join(f).to_str().unwrap().to_string()
    }

    fn teacher(&self) -> String {
        self.dir.path().join("teacher/model.ckpt").to_str().unwrap().to_string()
    }
}

fn task() -> &'static Task {
    static TASK: OnceLock<Task> = OnceLock::new();
    TASK.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("tiny.json");
        let tiny = json!({
            "synth.train_dialogs": 30,
            "synth.valid_dialogs": 8,
            "synth.test_dialogs": 8,
            "synth.parallel_pairs": 40,
            "synth.dim": 8,
            "train.epochs": 5,
            "transfer.iterations": 30,
            "transfer.eval_every": 10,
        });
        std::fs::write(&config, tiny.to_string()).unwrap();
        let t = Task { dir, config };
        let data = t.dir.path().join("data");
        assert_eq!(run(&["gen", "--config", s(&t.config), "--seed", "3", "--out", s(&data)]).0, EXIT_OK);
        let teacher = t.dir.path().join("teacher");
        let (code, _) = run(&[
            "train", "--config", s(&t.config), "--dialogs", &t.data("train.src.json"), "--ontology",
            &t.data("ontology.src.json"), "--embeddings-src", &t.data("embeddings.src.txt"), "--mapping",
            &t.data("mapping.tsv"), "--out", s(&teacher),
        ]);
        assert_eq!(code, EXIT_OK);
        t
    })
}

#[test]
fn gen_writes_the_task_files() {
    let t = task();
    for f in [
        "train.src.json", "valid.src.json", "test.src.json", "test.tgt.json", "ontology.src.json",
        "ontology.tgt.json", "mapping.tsv", "dictionary.tsv", "parallel.src.txt", "parallel.tgt.txt",
        "embeddings.src.txt", "embeddings.tgt.mono.txt", "embeddings.tgt.bilingual.txt", "settings.json",
    ] {
        assert!(Path::new(&t.data(f)).is_file(), "{f}");
    }
    for f in ["model.ckpt", "curve.csv", "settings.json"] {
        assert!(t.dir.path().join("teacher").join(f).is_file(), "{f}");
    }
}

#[test]
fn transfer_then_eval_reports_the_student() {
    let t = task();
    let out = tempfile::tempdir().unwrap();
    let (code, _) = run(&[
        "transfer", "--config", s(&t.config), "--mode", "c", "--checkpoint", &t.teacher(), "--dialogs",
        &t.data("train.src.json"), "--ontology", &t.data("ontology.src.json"), "--embeddings-src",
        &t.data("embeddings.src.txt"), "--embeddings-tgt", &t.data("embeddings.tgt.bilingual.txt"), "--mapping",
        &t.data("mapping.tsv"), "--parallel-src", &t.data("parallel.src.txt"), "--parallel-tgt",
        &t.data("parallel.tgt.txt"), "--out", s(out.path()),
    ]);
    assert_eq!(code, EXIT_OK);
    let curve = std::fs::read_to_string(out.path().join("curve.csv")).unwrap();
    assert!(curve.lines().count() > 1);

    let report_dir = tempfile::tempdir().unwrap();
    let (code, stdout) = run(&[
        "eval", "--system", "xlnbt-c", "--checkpoint", s(&out.path().join("student.ckpt")), "--dialogs",
        &t.data("test.tgt.json"), "--ontology", &t.data("ontology.tgt.json"), "--embeddings-tgt",
        &t.data("embeddings.tgt.bilingual.txt"), "--out", s(report_dir.path()),
    ]);
    assert_eq!(code, EXIT_OK);
    let report: MetricsReport = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report.system, "xlnbt-c");
    assert_eq!(report.language, "tgt");
    assert_eq!(report.seed_count, 1);
    assert!((0.0..=1.0).contains(&report.goal_mean));
    let written: MetricsReport =
        serde_json::from_str(&std::fs::read_to_string(report_dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(written, report);
}

#[test]
fn ontology_match_eval_needs_no_checkpoint() {
    let t = task();
    let out = tempfile::tempdir().unwrap();
    let (code, stdout) = run(&[
        "eval", "--system", "ontology-match", "--dialogs", &t.data("test.tgt.json"), "--ontology",
        &t.data("ontology.tgt.json"), "--out", s(out.path()),
    ]);
    assert_eq!(code, EXIT_OK);
    let report: MetricsReport = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report.goal_per_seed, vec![report.goal_mean]);
}

#[test]
fn track_answers_turn_by_turn() {
    let t = task();
    let ontology: Value = serde_json::from_str(&std::fs::read_to_string(t.data("ontology.tgt.json")).unwrap()).unwrap();
    let (slot, values) = ontology["informable"].as_object().unwrap().iter().next().unwrap();
    let value = values[0].as_str().unwrap();
    let input = format!("none\n{value} please\nconfirm(nosuchslot=x)\nignored\n:reset\n-\nhello\n:quit\nnever read\n");
    let (code, stdout) = run_input(
        &["track", "--system", "ontology-match", "--ontology", &t.data("ontology.tgt.json")],
        &input,
    );
    assert_eq!(code, EXIT_OK);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 4, "{stdout}");
    let first: Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(first["goals"][slot], value);
    assert!(lines[1].starts_with("malformed act annotation"));
    assert_eq!(lines[2], "reset");
    let after: Value = serde_json::from_str(lines[3]).unwrap();
    assert!(after["goals"].as_object().unwrap().is_empty());

    // a trained model tracks the source side the same way
    let (code, stdout) = run_input(
        &[
            "track", "--checkpoint", &t.teacher(), "--ontology", &t.data("ontology.src.json"), "--embeddings-src",
            &t.data("embeddings.src.txt"),
        ],
        "\nhello\n",
    );
    assert_eq!(code, EXIT_OK);
    let state: Value = serde_json::from_str(stdout.trim()).unwrap();
    assert!(state["goals"].is_object() && state["requests"].is_array());
}

#[test]
fn usage_errors_exit_two() {
    let t = task();
    assert_eq!(run(&[]).0, EXIT_USAGE);
    assert_eq!(run(&["train", "--no-such-flag"]).0, EXIT_USAGE);
    assert_eq!(run(&["transfer", "--mode", "x"]).0, EXIT_USAGE);
    // mode c without a parallel corpus
    let out = tempfile::tempdir().unwrap();
    let (code, _) = run(&[
        "transfer", "--mode", "c", "--checkpoint", &t.teacher(), "--dialogs", &t.data("train.src.json"), "--ontology",
        &t.data("ontology.src.json"), "--embeddings-src", &t.data("embeddings.src.txt"), "--embeddings-tgt",
        &t.data("embeddings.tgt.bilingual.txt"), "--mapping", &t.data("mapping.tsv"), "--out", s(out.path()),
    ]);
    assert_eq!(code, EXIT_USAGE);
    let bad = out.path().join("bad.json");
    std::fs::write(&bad, r#"{"train.no_such_knob": 1}"#).unwrap();
    assert_eq!(run(&["gen", "--config", s(&bad), "--out", s(out.path())]).0, EXIT_USAGE);
    std::fs::write(&bad, r#"{"train.epochs": "many"}"#).unwrap();
    assert_eq!(run(&["gen", "--config", s(&bad), "--out", s(out.path())]).0, EXIT_USAGE);
}

#[test]
fn runtime_errors_exit_one() {
    let out = tempfile::tempdir().unwrap();
    let (code, _) = run(&[
        "eval", "--system", "ontology-match", "--dialogs", "/nonexistent.json", "--ontology", "/nonexistent.json",
        "--out", s(out.path()),
    ]);
    assert_eq!(code, EXIT_FAILURE);
}

#[test]
fn written_settings_reload_to_the_same_run() {
    let t = task();
    let written = PathBuf::from(t.data("settings.json"));
    let overrides = read_config(&written).unwrap();
    let reloaded = resolve(&Settings::default(), &overrides).unwrap().settings;
    let dotted = reloaded.to_dotted();
    let original: serde_json::Map<String, Value> =
        serde_json::from_str(&std::fs::read_to_string(&written).unwrap()).unwrap();
    assert_eq!(dotted, original);
    assert_eq!(reloaded.seed, Some(3));
    assert_eq!(reloaded.synth.seed, 3);
    assert_eq!(reloaded.synth.train_dialogs, 30);
}

#[test]
fn top_level_seed_yields_to_explicit_component_seeds() {
    let overrides = vec![("seed".to_string(), json!(9)), ("transfer.seed".to_string(), json!(1))];
    let r = resolve(&Settings::default(), &overrides).unwrap();
    assert_eq!(r.settings.train.seed, 9);
    assert_eq!(r.settings.synth.seed, 9);
    assert_eq!(r.settings.transfer.seed, 1);
    assert!(resolve(&Settings::default(), &[("model".to_string(), json!(3))]).is_err());
}
