//! Integration tests for the command-line surface.

use std::path::{Path, PathBuf};
use std::process::Output;

fn fixture_repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/repo")
}

fn requirement_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/requirement_bullets.json")
}

fn repogen(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_repogen"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn index_fixture(out: &Path) {
    let output = repogen(&[
        "--offline",
        "index",
        "--repo",
        fixture_repo().to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        output.status.success(),
        "index failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn index_writes_both_bases_and_prints_counts() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("kb");
    let output = repogen(&[
        "--offline",
        "index",
        "--repo",
        fixture_repo().to_str().unwrap(),
        "--out",
        kb.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    assert!(kb.join("functions.jsonl").exists());
    assert!(kb.join("libraries.txt").exists());
    assert!(kb.join("meta").exists());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("files parsed: 10"));
    assert!(stdout.contains("functions indexed: 24"));
    assert!(stdout.contains("libraries found: 3"));
}

#[test]
fn index_missing_repo_fails_naming_path() {
    let dir = tempfile::tempdir().unwrap();
    let output = repogen(&[
        "--offline",
        "index",
        "--repo",
        "/definitely/not/a/repo",
        "--out",
        dir.path().join("kb").to_str().unwrap(),
    ]);
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("/definitely/not/a/repo"));
}

#[test]
fn index_rerun_with_warm_cache_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("summaries.jsonl");
    let config = dir.path().join("config");
    std::fs::write(
        &config,
        format!("offline=true\nsummary_cache={}\n", cache.display()),
    )
    .unwrap();

    let run = |out: &Path| {
        let output = repogen(&[
            "--config",
            config.to_str().unwrap(),
            "index",
            "--repo",
            fixture_repo().to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(output.status.success());
    };
    let kb1 = dir.path().join("kb1");
    let kb2 = dir.path().join("kb2");
    run(&kb1);
    assert!(cache.exists());
    run(&kb2);
    for file in ["functions.jsonl", "libraries.txt", "meta"] {
        let a = std::fs::read(kb1.join(file)).unwrap();
        let b = std::fs::read(kb2.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs after warm-cache rerun");
    }
}

#[test]
fn retrieve_k_zero_prints_nothing_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("kb");
    index_fixture(&kb);
    let output = repogen(&[
        "--offline",
        "--k",
        "0",
        "retrieve",
        "--kb",
        kb.to_str().unwrap(),
        "--requirement",
        requirement_path().to_str().unwrap(),
    ]);
    assert!(output.status.success());
    assert!(output.stdout.is_empty());
}

#[test]
fn retrieve_prints_ranked_hits_with_channels() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("kb");
    index_fixture(&kb);
    let output = repogen(&[
        "--offline",
        "retrieve",
        "--kb",
        kb.to_str().unwrap(),
        "--requirement",
        requirement_path().to_str().unwrap(),
        "--what-if",
    ]);
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert!(!lines.is_empty());
    let mut previous = f64::INFINITY;
    for line in &lines {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields.len(), 3, "bad line {line:?}");
        // no hit may come from the requirement's target file
        assert!(!fields[0].starts_with("unstructured.documents.html."));
        let score: f64 = fields[1].parse().unwrap();
        assert!(score <= previous);
        previous = score;
        assert!(["description", "code", "both"].contains(&fields[2]));
        // scores print with four decimals
        assert_eq!(fields[1].split('.').nth(1).map(str::len), Some(4));
    }
}

#[test]
fn retrieve_bad_kb_path_fails() {
    let output = repogen(&[
        "--offline",
        "retrieve",
        "--kb",
        "/nope/nothing",
        "--requirement",
        requirement_path().to_str().unwrap(),
    ]);
    assert!(!output.status.success());
}

#[test]
fn generate_offline_writes_code_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("kb");
    index_fixture(&kb);
    let out = dir.path().join("gen.py");
    let output = repogen(&[
        "--offline",
        "generate",
        "--kb",
        kb.to_str().unwrap(),
        "--repo",
        fixture_repo().to_str().unwrap(),
        "--requirement",
        requirement_path().to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        output.status.success(),
        "generate failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let code = std::fs::read_to_string(&out).unwrap();
    assert!(code.contains("def _has_bulleted_text"));
    let trace: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("gen.trace.json")).unwrap())
            .unwrap();
    assert_eq!(trace["local"]["included"], true);
    assert_eq!(trace["global"]["included"], true);
    assert_eq!(trace["libraries"]["included"], true);
}

#[test]
fn generate_no_global_records_exclusion_in_trace() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("kb");
    index_fixture(&kb);
    let out = dir.path().join("gen.py");
    let output = repogen(&[
        "--offline",
        "generate",
        "--kb",
        kb.to_str().unwrap(),
        "--repo",
        fixture_repo().to_str().unwrap(),
        "--requirement",
        requirement_path().to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--no-global",
    ]);
    assert!(output.status.success());
    let trace: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("gen.trace.json")).unwrap())
            .unwrap();
    assert_eq!(trace["global"]["included"], false);
    assert_eq!(trace["global"]["chars"], 4); // the literal None
}

#[test]
fn generate_online_with_unreachable_provider_fails() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("kb");
    index_fixture(&kb);
    let config = dir.path().join("config");
    std::fs::write(
        &config,
        "offline=false\nchat_base_url=http://127.0.0.1:9\nembed_base_url=http://127.0.0.1:9\nmax_retries=0\nbackoff_ms=0\ntimeout_secs=2\n",
    )
    .unwrap();
    let output = repogen(&[
        "--config",
        config.to_str().unwrap(),
        "generate",
        "--kb",
        kb.to_str().unwrap(),
        "--repo",
        fixture_repo().to_str().unwrap(),
        "--requirement",
        requirement_path().to_str().unwrap(),
        "--out",
        dir.path().join("gen.py").to_str().unwrap(),
    ]);
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("provider"), "stderr: {stderr}");
}

fn write_eval_inputs(dir: &Path) -> (PathBuf, PathBuf) {
    let pred = dir.join("pred");
    let refs = dir.join("refs");
    std::fs::create_dir_all(&pred).unwrap();
    std::fs::create_dir_all(&refs).unwrap();
    std::fs::write(
        pred.join("a.py"),
        "def f(tag):\n    return _construct_text(tag)\n",
    )
    .unwrap();
    std::fs::write(
        refs.join("a.py"),
        "def f(tag):\n    return _construct_text(tag).strip()\n",
    )
    .unwrap();
    std::fs::write(pred.join("b.py"), "def g():\n    return 1\n").unwrap();
    std::fs::write(refs.join("b.py"), "def g():\n    return 2\n").unwrap();
    (pred, refs)
}

#[test]
fn evaluate_writes_report_sections() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("kb");
    index_fixture(&kb);
    let (pred, refs) = write_eval_inputs(dir.path());
    let labels = dir.path().join("labels.txt");
    std::fs::write(&labels, "1 0 0\n0 0 0\n").unwrap();
    let report = dir.path().join("report");

    let output = repogen(&[
        "--offline",
        "evaluate",
        "--kb",
        kb.to_str().unwrap(),
        "--pred",
        pred.to_str().unwrap(),
        "--refs",
        refs.to_str().unwrap(),
        "--labels",
        labels.to_str().unwrap(),
        "--repo",
        fixture_repo().to_str().unwrap(),
        "--target-file",
        "unstructured/documents/html.py",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(
        output.status.success(),
        "evaluate failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let summary = std::fs::read_to_string(report.join("summary.txt")).unwrap();
    assert!(summary.contains("n_samples=2"));
    assert!(summary.contains("avg_loc="));
    assert!(summary.contains("codebleu="));
    assert!(summary.contains("local_tp=1"));
    let text = std::fs::read_to_string(report.join("report.txt")).unwrap();
    assert!(text.contains("local:"));
    assert!(text.contains("global:"));
    assert!(text.contains("library:"));
}

#[test]
fn evaluate_label_length_mismatch_fails() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("kb");
    index_fixture(&kb);
    let (pred, refs) = write_eval_inputs(dir.path());
    let labels = dir.path().join("labels.txt");
    std::fs::write(&labels, "1 0 0\n").unwrap();
    let output = repogen(&[
        "--offline",
        "evaluate",
        "--kb",
        kb.to_str().unwrap(),
        "--pred",
        pred.to_str().unwrap(),
        "--refs",
        refs.to_str().unwrap(),
        "--labels",
        labels.to_str().unwrap(),
        "--report",
        dir.path().join("report").to_str().unwrap(),
    ]);
    assert!(!output.status.success());
}

#[test]
fn evaluate_paper_convention_prints_zero_for_undefined() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("kb");
    index_fixture(&kb);
    // a predictor that never fires on labels that never fire: precision
    // undefined, printed as 0 under the paper convention
    let pred = dir.path().join("pred");
    let refs = dir.path().join("refs");
    std::fs::create_dir_all(&pred).unwrap();
    std::fs::create_dir_all(&refs).unwrap();
    std::fs::write(pred.join("a.py"), "def g():\n    return 1\n").unwrap();
    std::fs::write(refs.join("a.py"), "def g():\n    return 1\n").unwrap();
    let labels = dir.path().join("labels.txt");
    std::fs::write(&labels, "0 0 0\n").unwrap();
    let report = dir.path().join("report");

    let output = repogen(&[
        "--offline",
        "evaluate",
        "--kb",
        kb.to_str().unwrap(),
        "--pred",
        pred.to_str().unwrap(),
        "--refs",
        refs.to_str().unwrap(),
        "--labels",
        labels.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
        "--paper-convention",
    ]);
    assert!(output.status.success());
    let summary = std::fs::read_to_string(report.join("summary.txt")).unwrap();
    assert!(summary.contains("local_precision=0\n"));
    assert!(summary.contains("local_f1=0\n"));

    // without the flag the same ratios render as n/a
    let report2 = dir.path().join("report2");
    let output = repogen(&[
        "--offline",
        "evaluate",
        "--kb",
        kb.to_str().unwrap(),
        "--pred",
        pred.to_str().unwrap(),
        "--refs",
        refs.to_str().unwrap(),
        "--labels",
        labels.to_str().unwrap(),
        "--report",
        report2.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let summary = std::fs::read_to_string(report2.join("summary.txt")).unwrap();
    assert!(summary.contains("local_precision=n/a\n"));
}

#[test]
fn summarize_single_function_prints_summary() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("one.py");
    std::fs::write(
        &file,
        "def send_alert(channel, text):\n    \"\"\"Post an alert message to the channel.\"\"\"\n    channel.post(text)\n",
    )
    .unwrap();
    let output = repogen(&["--offline", "summarize", "--file", file.to_str().unwrap()]);
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("one.send_alert"));
    assert!(stdout.contains("Post an alert message to the channel."));
}

#[test]
fn summarize_requires_name_when_ambiguous() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("two.py");
    std::fs::write(
        &file,
        "def a():\n    return 1\n\n\ndef b():\n    return 2\n",
    )
    .unwrap();
    let output = repogen(&["--offline", "summarize", "--file", file.to_str().unwrap()]);
    assert!(!output.status.success());
    let output = repogen(&[
        "--offline",
        "summarize",
        "--file",
        file.to_str().unwrap(),
        "--name",
        "b",
    ]);
    assert!(output.status.success());
}
