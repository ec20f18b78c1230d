use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("holofactor-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn config(dir: &Path, n_max: Option<usize>, noise: &str) -> PathBuf {
    let n_max = n_max.map_or(String::new(), |n| format!(r#", "n_max": {n}"#));
    let text = format!(
        r#"{{
            "problem": {{"d": 256, "m": 16, "f": 3}},
            "activation": {{"kind": "threshold", "t": 0.055}},
            "convergence": {{"policy": "threshold", "ratio": 0.5}},
            "noise": {noise},
            "run": {{"trials": 12, "master_seed": 3{n_max}}}
        }}"#
    );
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn holofactor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_holofactor")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_prints_summary_and_writes_csv() {
    let dir = workdir("run");
    let cfg = config(&dir, None, r#"{"kind": "pcm"}"#);
    let out = dir.join("run.csv");
    let o = holofactor(&["run", "--config", cfg.to_str().unwrap(), "--trials", "8", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("trials 8 accuracy"), "{text}");
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("# holofactor config_hash="));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 2);
}

#[test]
fn jsonl_output_replays_identically() {
    let dir = workdir("jsonl");
    let cfg = config(&dir, None, r#"{"kind": "pcm"}"#);
    let (a, b) = (dir.join("a.jsonl"), dir.join("b.jsonl"));
    for path in [&a, &b] {
        let o = holofactor(&["run", "--config", cfg.to_str().unwrap(), "--format", "jsonl", "--out", path.to_str().unwrap()]);
        assert!(o.status.success());
    }
    let strip = |p: &Path| -> Vec<String> { std::fs::read_to_string(p).unwrap().lines().skip(1).map(String::from).collect() };
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(strip(&a).len(), 12);
}

#[test]
fn exit_codes_distinguish_failures() {
    let dir = workdir("exit");
    let missing = dir.join("missing.json");
    assert_eq!(holofactor(&["run", "--config", missing.to_str().unwrap()]).status.code(), Some(2));

    let over_budget = config(&dir, Some(86), r#"{"kind": "pcm"}"#);
    assert_eq!(holofactor(&["run", "--config", over_budget.to_str().unwrap()]).status.code(), Some(3));

    let bad = dir.join("bad.json");
    std::fs::write(&bad, "{\"problem\": 1}").unwrap();
    assert_eq!(holofactor(&["run", "--config", bad.to_str().unwrap()]).status.code(), Some(1));

    assert_eq!(holofactor(&["run"]).status.code(), Some(1));
    assert_eq!(holofactor(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(holofactor(&["--help"]).status.code(), Some(0));

    let exact = config(&dir, None, r#"{"kind": "exact"}"#);
    assert_eq!(holofactor(&["sweep-noise", "--config", exact.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn ingest_warns_on_real_values_and_reports_accuracy() {
    let dir = workdir("ingest");
    let cfg = config(&dir, None, r#"{"kind": "pcm"}"#);
    let mut line: Vec<String> = (0..256).map(|i| if i % 2 == 0 { "0.5".into() } else { "-1".into() }).collect();
    line[0] = "0".into();
    let queries = dir.join("q.txt");
    std::fs::write(&queries, format!("#holofactor v1 d=256 f=3\n{}\n", line.join(" "))).unwrap();
    let o = holofactor(&["ingest", "--config", cfg.to_str().unwrap(), "--queries", queries.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning: line 2"));
    assert!(stdout(&o).contains("labeled 0"));

    std::fs::write(&queries, "#holofactor v1 d=256 f=3\n1 1\n").unwrap();
    let o = holofactor(&["ingest", "--config", cfg.to_str().unwrap(), "--queries", queries.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains(":2:"));
}

#[test]
fn oracle_and_capacity_sweep() {
    let dir = workdir("oracle");
    let cfg = config(&dir, None, r#"{"kind": "pcm"}"#);
    let o = holofactor(&["oracle", "--config", cfg.to_str().unwrap(), "--trials", "5"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("queries 5 brute_force_matches_truth 5"), "{}", stdout(&o));

    let o = holofactor(&["sweep-capacity", "--config", cfg.to_str().unwrap(), "--trials", "4", "--m", "12,16"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("m 12 ops 1728") && text.contains("m 16 ops 4096"), "{text}");
    assert!(text.contains("operational capacity"));
}

#[test]
fn tune_writes_a_json_record() {
    let dir = workdir("tune");
    let cfg = config(&dir, None, r#"{"kind": "exact"}"#);
    let out = dir.join("tune.json");
    let o = holofactor(&[
        "tune", "--config", cfg.to_str().unwrap(), "--budget", "10", "--eval-trials", "4", "--tune-noise", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let record: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(record["observations"].as_array().unwrap().len(), 10);
    assert!(record["best"]["sigma_out"].is_number());
}
