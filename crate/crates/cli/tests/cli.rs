use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use memoprobe_core::datamodel::{write_benchmark, BenchmarkSample};
use memoprobe_core::grading::GraderKind;
use memoprobe_core::perturbation::PerturbationKind;
use memoprobe_core::sensitivity::{read_records, write_records, SensitivityRecord, RECORD_SCHEMA};
use memoprobe_core::synthetic::{generalizer_decay, memorization_suite};
use memoprobe_core::testing::{StubRequest, StubResponse, StubServer};
use serde_json::{json, Value};

fn memoprobe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memoprobe"))
        .args(args)
        .env_remove("MEMOPROBE_API_TOKEN")
        .output()
        .unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn write_suite(dir: &Path, name: &str, samples: &[BenchmarkSample]) -> PathBuf {
    let path = dir.join(name);
    let mut buf = Vec::new();
    write_benchmark(samples, &mut buf).unwrap();
    fs::write(&path, buf).unwrap();
    path
}

fn prose_sample() -> BenchmarkSample {
    serde_json::from_value(json!({
        "id": "nl-1",
        "benchmark": "prose",
        "task": "code_generation",
        "input_kind": "natural_language",
        "language": "python",
        "input": "Write a function that returns the larger of two numbers",
        "reference": "def larger(a, b):\n    return a if a > b else b\n"
    }))
    .unwrap()
}

fn record(model: &str, benchmark: &str, i: usize, s: f64) -> SensitivityRecord {
    SensitivityRecord {
        schema: RECORD_SCHEMA,
        sample_id: format!("{benchmark}-{i}"),
        benchmark: benchmark.into(),
        model: model.into(),
        task: memoprobe_core::datamodel::TaskKind::ProgramRepair,
        kind: PerturbationKind::IdentifierRename,
        grader: GraderKind::CodeTokenSimilarity,
        repeat_sensitivities: vec![s],
        mean_sensitivity: s,
        perf_series: vec![vec![1.0, 1.0 - s]],
    }
}

fn write_record_file(dir: &Path, records: &[SensitivityRecord]) -> PathBuf {
    let path = dir.join("records.jsonl");
    let mut buf = Vec::new();
    write_records(records, &mut buf).unwrap();
    fs::write(&path, buf).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(memoprobe(&["--help"]).status.code(), Some(0));
    assert_eq!(memoprobe(&["run", "--help"]).status.code(), Some(0));
    let bad = memoprobe(&["run", "--no-such-flag"]);
    assert_eq!(bad.status.code(), Some(1));
    assert_eq!(memoprobe(&[]).status.code(), Some(1));
    let bad_value = memoprobe(&["run", "--levels", "many"]);
    assert_eq!(bad_value.status.code(), Some(1));
}

#[test]
fn perturb_writes_identical_six_level_ladders() {
    let dir = tempfile::tempdir().unwrap();
    let bench = write_suite(dir.path(), "fx.jsonl", &memorization_suite("fx", 4, 2));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = memoprobe(&["perturb", "--benchmark", s(&bench), "--kind", "identifier_rename", "--seed", "7", "--out", s(out)]);
        assert!(o.status.success(), "{}", text(&o.stderr));
    }
    let first = fs::read(a.join("ladders.jsonl")).unwrap();
    assert_eq!(first, fs::read(b.join("ladders.jsonl")).unwrap());
    let lines: Vec<Value> = text(&first).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 4);
    for l in &lines {
        assert_eq!(l["levels"].as_array().unwrap().len(), 6);
        assert_eq!(l["kind"], "identifier_rename");
    }
}

#[test]
fn paraphrase_without_provider_is_an_actionable_error() {
    let dir = tempfile::tempdir().unwrap();
    let bench = write_suite(dir.path(), "nl.jsonl", &[prose_sample()]);
    let out = dir.path().join("out");
    let o = memoprobe(&["perturb", "--benchmark", s(&bench), "--kind", "paraphrase", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let err = text(&o.stderr);
    assert!(err.contains("--provider-url") && err.contains("--fallback-word-noise"), "{err}");

    // default kind for prose has the same requirement
    let o = memoprobe(&["perturb", "--benchmark", s(&bench), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));

    let o = memoprobe(&["perturb", "--benchmark", s(&bench), "--kind", "paraphrase", "--fallback-word-noise", "--out", s(&out)]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let ladder: Value = serde_json::from_str(fs::read_to_string(out.join("ladders.jsonl")).unwrap().trim()).unwrap();
    assert_eq!(ladder["kind"], "word_noise");
}

#[test]
fn paraphrase_provider_is_used_when_given() {
    let server = StubServer::start(|req: &StubRequest| match req.path.as_str() {
        "/health" => StubResponse::json(200, json!({"ready": true})),
        _ => {
            let n = req.json()["n"].as_u64().unwrap() as usize;
            let out: Vec<String> = (0..n).map(|i| format!("Please write code returning the larger number, variant {i}")).collect();
            StubResponse::json(200, json!({"paraphrases": out, "model_name": "stub"}))
        }
    });
    let dir = tempfile::tempdir().unwrap();
    let bench = write_suite(dir.path(), "nl.jsonl", &[prose_sample()]);
    let out = dir.path().join("out");
    let o = memoprobe(&["perturb", "--benchmark", s(&bench), "--provider-url", server.url(), "--out", s(&out)]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let ladder: Value = serde_json::from_str(fs::read_to_string(out.join("ladders.jsonl")).unwrap().trim()).unwrap();
    assert_eq!(ladder["kind"], "paraphrase");
    assert_eq!(ladder["levels"].as_array().unwrap().len(), 6);
    let para = server.requests().into_iter().find(|r| r.path == "/paraphrase").unwrap();
    assert_eq!(para.json()["n"], 20);
}

#[test]
fn run_writes_one_record_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    let bench = write_suite(dir.path(), "fx.jsonl", &memorization_suite("fx", 5, 3));
    let out = dir.path().join("out");
    let cache = dir.path().join("cache");
    let o = memoprobe(&["run", "--benchmark", s(&bench), "--endpoint", "mock:memorizer", "--seed", "7", "--out", s(&out), "--cache-dir", s(&cache)]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let records = read_records(out.join("records.jsonl")).unwrap();
    assert_eq!(records.len(), 5);
    assert!(records.iter().all(|r| r.model == "memorizer" && r.perf_series.len() == 3));
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["settings"]["cache_dir"], s(&cache));
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let bench = write_suite(dir.path(), "fx.jsonl", &memorization_suite("fx", 2, 3));
    let out = dir.path().join("out");
    let config = dir.path().join("memoprobe.toml");
    fs::write(
        &config,
        format!(
            "levels = 4\nrepeats = 2\ntemperature = 0.7\nendpoints = [\"mock:memorizer\"]\nbenchmarks = [{:?}]\ncache_dir = {:?}\n",
            s(&bench),
            s(&dir.path().join("cache"))
        ),
    )
    .unwrap();
    let o = memoprobe(&["run", "--config", s(&config), "--levels", "3", "--out", s(&out)]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(manifest["levels"], 3);
    assert_eq!(manifest["repeats"], 2);
    assert_eq!(manifest["temperature"], 0.7);
    assert_eq!(manifest["samples"], 3);
    assert_eq!(manifest["nucleus"], 0.5);

    fs::write(&config, "levles = 4\n").unwrap();
    let o = memoprobe(&["run", "--config", s(&config), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("levles"), "{}", text(&o.stderr));
}

#[test]
fn invalid_protocol_values_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bench = write_suite(dir.path(), "fx.jsonl", &memorization_suite("fx", 1, 3));
    for args in [
        vec!["--levels", "0"],
        vec!["--top-p", "0"],
        vec!["--alpha", "2"],
        vec!["--grader", "execution"],
    ] {
        let mut full = vec!["run", "--benchmark", s(&bench), "--endpoint", "mock:memorizer"];
        full.extend(args.iter().copied());
        let o = memoprobe(&full);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", text(&o.stderr));
    }
    let o = memoprobe(&["run", "--benchmark", s(&dir.path().join("missing.jsonl")), "--endpoint", "mock:memorizer"]);
    assert_eq!(o.status.code(), Some(1));
    let o = memoprobe(&["run", "--benchmark", s(&bench), "--endpoint", "mock:oracle"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn partial_failure_exits_two_and_keeps_good_records() {
    let server = StubServer::start(|_: &StubRequest| StubResponse::json(400, json!({"error": "bad request"})));
    let dir = tempfile::tempdir().unwrap();
    let bench = write_suite(dir.path(), "fx.jsonl", &memorization_suite("fx", 2, 3));
    let out = dir.path().join("out");
    let live = format!("broken={}", server.url());
    let o = memoprobe(&[
        "run", "--benchmark", s(&bench), "--endpoint", "mock:memorizer", "--endpoint", &live,
        "--out", s(&out), "--cache-dir", s(&dir.path().join("cache")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o.stderr));
    let err = text(&o.stderr);
    assert!(err.contains("2 of 4 evaluations failed"), "{err}");
    assert!(err.contains("`broken`"), "{err}");
    assert_eq!(read_records(out.join("records.jsonl")).unwrap().len(), 2);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(manifest["failures"], 2);
}

#[test]
fn api_token_is_sent_to_live_endpoints() {
    let server = StubServer::start(|req: &StubRequest| {
        if req.header("authorization") != Some("Bearer sekret") {
            return StubResponse::json(401, json!({"error": "unauthorized"}));
        }
        StubResponse::chat("def f(): pass")
    });
    let dir = tempfile::tempdir().unwrap();
    let bench = write_suite(dir.path(), "fx.jsonl", &memorization_suite("fx", 1, 3));
    let live = format!("live={}#coder", server.url());
    let o = Command::new(env!("CARGO_BIN_EXE_memoprobe"))
        .args(["run", "--benchmark", s(&bench), "--endpoint", &live, "--levels", "1", "--repeats", "1", "--samples", "1"])
        .args(["--out", s(&dir.path().join("out")), "--cache-dir", s(&dir.path().join("cache"))])
        .env("MEMOPROBE_API_TOKEN", "sekret")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert_eq!(server.hits(), 2);
    let body = server.requests()[0].json();
    assert_eq!(body["model"], "coder");
    assert_eq!(body["temperature"], 0.3);
    assert_eq!(body["top_p"], 0.5);
}

#[test]
fn interrupted_run_resumes_from_cache() {
    let dir = tempfile::tempdir().unwrap();
    let bench = write_suite(dir.path(), "fx.jsonl", &memorization_suite("fx", 40, 11));
    let generalizer = format!("generalizer=mock:generalizer?decay={}", generalizer_decay(0.05));
    let args = |out: &Path, cache: &Path| -> Vec<String> {
        [
            "run", "--benchmark", s(&bench), "--endpoint", "mock:memorizer", "--endpoint", &generalizer,
            "--seed", "5", "--max-concurrency", "1", "--out", s(out), "--cache-dir", s(cache),
        ]
        .iter()
        .map(|a| a.to_string())
        .collect()
    };

    let cache = dir.path().join("cache");
    let mut child = Command::new(env!("CARGO_BIN_EXE_memoprobe"))
        .args(args(&dir.path().join("killed"), &cache))
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let started = Instant::now();
    loop {
        let entries = fs::read_dir(&cache).map(|d| d.count()).unwrap_or(0);
        if entries > 0 || started.elapsed() > Duration::from_secs(30) {
            break;
        }
        std::thread::sleep(Duration::from_millis(2));
    }
    let _ = child.kill();
    child.wait().unwrap();

    let resumed = dir.path().join("resumed");
    let o = Command::new(env!("CARGO_BIN_EXE_memoprobe")).args(args(&resumed, &cache)).output().unwrap();
    assert!(o.status.success(), "{}", text(&o.stderr));

    let clean = dir.path().join("clean");
    let o = Command::new(env!("CARGO_BIN_EXE_memoprobe"))
        .args(args(&clean, &dir.path().join("fresh-cache")))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert_eq!(
        fs::read(resumed.join("records.jsonl")).unwrap(),
        fs::read(clean.join("records.jsonl")).unwrap()
    );
}

#[test]
fn analyze_flags_the_planted_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let mut records = Vec::new();
    for i in 0..30 {
        records.push(record("m", "planted", i, 0.6 + 0.2 * (i as f64 / 29.0)));
        for b in ["clean-a", "clean-b", "clean-c"] {
            records.push(record("m", b, i, 0.1 + 0.2 * (((i * 7 + b.len()) % 30) as f64 / 29.0)));
        }
    }
    let path = write_record_file(dir.path(), &records);
    let out = dir.path().join("out");
    let o = memoprobe(&["analyze", "--records", s(&path), "--out", s(&out)]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(text(&o.stdout).contains("subject `planted`"), "{}", text(&o.stdout));
    let first: Value = serde_json::from_str(fs::read_to_string(out.join("findings.jsonl")).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(first["subject"], "planted");
    assert_eq!(first["flagged"], true);
    assert_eq!(first["direction"], "higher");
}

#[test]
fn analyze_needs_two_benchmarks() {
    let dir = tempfile::tempdir().unwrap();
    let records: Vec<_> = (0..6).map(|i| record("m", "only", i, 0.1)).collect();
    let path = write_record_file(dir.path(), &records);
    let o = memoprobe(&["analyze", "--records", s(&path), "--out", s(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("at least 2 benchmarks required"), "{}", text(&o.stderr));
}

#[test]
fn report_without_findings_still_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let records: Vec<_> = (0..6).map(|i| record("m", "only", i, 0.1 * i as f64)).collect();
    let path = write_record_file(dir.path(), &records);
    let out = dir.path().join("out");
    let o = memoprobe(&["report", "--records", s(&path), "--out", s(&out)]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("findings.jsonl")).unwrap(), "");
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "model,benchmark,task,n,min,q1,median,q3,max,mean");
    assert_eq!(csv.lines().count(), 2);
    assert!(out.join("boxplots_program_repair.svg").exists());
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["detectors"]["findings"], json!([]));
}

#[test]
fn empty_or_missing_records_fail() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_record_file(dir.path(), &[]);
    for cmd in ["analyze", "report"] {
        let o = memoprobe(&[cmd, "--records", s(&path), "--out", s(&dir.path().join("out"))]);
        assert_eq!(o.status.code(), Some(1), "{cmd}");
        assert!(text(&o.stderr).contains("no records"), "{}", text(&o.stderr));
        let o = memoprobe(&[cmd, "--records", s(&dir.path().join("nope.jsonl"))]);
        assert_eq!(o.status.code(), Some(1), "{cmd}");
    }
}
