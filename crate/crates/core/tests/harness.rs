use std::path::PathBuf;

use holofactor::harness::{
    ablation_suite, capacity_sweep, format_queries, ingest_queries, noise_sweep, parse_queries, read_csv,
    read_jsonl, run_queries, run_sweep, run_trials, write_csv, write_jsonl, write_queries, AblationPlan,
    CsvRow, ExperimentConfig, LabeledQuery, SweepAxis, SweepVariable,
};
use holofactor::oracle::{make_query, random_truth};
use holofactor::{Error, NoiseBackend};

fn small(seed: u64) -> ExperimentConfig {
    let text = format!(
        r#"{{
            "problem": {{"d": 256, "m": 16, "f": 3}},
            "activation": {{"kind": "threshold", "t": 0.055}},
            "convergence": {{"policy": "threshold", "ratio": 0.5}},
            "noise": {{"kind": "pcm"}},
            "run": {{"trials": 24, "master_seed": {seed}}}
        }}"#
    );
    ExperimentConfig::from_json(&text).unwrap()
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("holofactor-tests-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn single_codevector_problems_converge_immediately() {
    let mut cfg = small(1);
    cfg.problem.m = holofactor::harness::Sizes::Shared(1);
    cfg.activation = serde_json::from_str(r#"{"kind": "threshold", "t": 0.1}"#).unwrap();
    cfg.run.trials = 10;
    let s = run_trials(&cfg).unwrap();
    assert_eq!(s.accuracy, 1.0);
    assert!(s.records.iter().all(|r| r.iterations == 1));
}

#[test]
fn replay_is_independent_of_worker_count() {
    let cfg = small(7);
    let run_with = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_trials(&cfg).unwrap())
    };
    let a = run_with(1);
    let b = run_with(4);
    assert_eq!(a.records, b.records);
    assert_eq!(a.records.len(), 24);
    assert!(a.accuracy > 0.5, "{}", a.accuracy);
}

#[test]
fn accuracy_counts_only_converged_correct_trials() {
    let mut cfg = small(3);
    cfg.run.n_max = Some(2);
    let s = run_trials(&cfg).unwrap();
    let wrong = s.records.iter().filter(|r| !r.converged || r.truth.as_ref() != Some(&r.predicted)).count();
    assert_eq!(s.correct, s.trials - wrong);
    assert_eq!(s.accuracy, s.correct as f64 / s.trials as f64);
    if let (Some(conv), true) = (s.mean_iterations_converged, s.convergence_rate < 1.0) {
        assert!(conv <= s.mean_iterations_all);
    }
}

#[test]
fn jsonl_round_trip_rebuilds_the_summary() {
    let cfg = small(11);
    let s = run_trials(&cfg).unwrap();
    let path = tmp("run.jsonl");
    write_jsonl(&path, &cfg, &s).unwrap();
    let (prov, cfg2, s2) = read_jsonl(&path).unwrap();
    assert_eq!(prov.config_hash, cfg.hash());
    assert_eq!(prov.master_seed, 11);
    assert_eq!(cfg2, cfg);
    assert_eq!(s2, s);
    // Replaying the stored config reproduces every record.
    assert_eq!(run_trials(&cfg2).unwrap().records, s.records);
}

#[test]
fn csv_round_trip_and_numeric_columns() {
    let cfg = small(5);
    let axis = SweepAxis { variable: SweepVariable::ConvergenceRatio, values: vec![0.4, 0.6] };
    let points = run_sweep(&cfg, &axis).unwrap();
    let rows: Vec<CsvRow> = points.iter().map(CsvRow::from_point).collect();
    let path = tmp("sweep.csv");
    write_csv(&path, &cfg, &rows).unwrap();
    let (prov, back) = read_csv(&path).unwrap();
    assert_eq!(prov.config_hash, cfg.hash());
    assert_eq!(back, rows);
    for (row, p) in back.iter().zip(&points) {
        assert_eq!(row.summary(), p.summary.without_records());
    }
    let text = std::fs::read_to_string(&path).unwrap();
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(data[0].starts_with("group,label,variable,value"));
    for line in &data[1..] {
        let numeric = line.split(',').skip(3).filter(|f| !f.is_empty());
        for field in numeric {
            field.parse::<f64>().unwrap_or_else(|_| panic!("{field:?} in {line}"));
        }
    }
}

#[test]
fn single_point_sweep_equals_run_trials() {
    let cfg = small(9);
    let report = capacity_sweep(&cfg, &[16]).unwrap();
    assert_eq!(report.points.len(), 1);
    assert_eq!(report.points[0].summary.records, run_trials(&cfg).unwrap().records);
    assert_eq!(report.points[0].brute_force_ops, 4096);
}

#[test]
fn sweeps_validate_before_running() {
    let mut cfg = small(1);
    cfg.run.n_max = Some(85);
    // 85 iterations are within budget at M=16 but not at M=12.
    assert!(matches!(capacity_sweep(&cfg, &[16, 12]), Err(Error::Budget(_))));
    cfg.noise = NoiseBackend::Exact;
    assert!(matches!(noise_sweep(&cfg, &[0.0, 1.0]), Err(Error::Config(_))));
}

#[test]
fn shared_queries_reuse_truths_across_points() {
    let mut cfg = small(4);
    let axis = SweepAxis { variable: SweepVariable::ConvergenceRatio, values: vec![0.5, 0.7] };
    let truths = |pts: &[holofactor::harness::SweepPoint], j: usize| -> Vec<Option<Vec<usize>>> {
        pts[j].summary.records.iter().map(|r| r.truth.clone()).collect()
    };
    let shared = run_sweep(&cfg, &axis).unwrap();
    assert_eq!(truths(&shared, 0), truths(&shared, 1));
    cfg.run.shared_queries = false;
    let fresh = run_sweep(&cfg, &axis).unwrap();
    assert_ne!(truths(&fresh, 0), truths(&fresh, 1));
}

#[test]
fn ingested_products_reproduce_generator_accuracy() {
    let cfg = small(21);
    let generated = run_trials(&cfg).unwrap();
    let set = cfg.codebook_set().unwrap();
    // Rebuild the same queries the generator used and push them through a file.
    let queries: Vec<LabeledQuery> = generated
        .records
        .iter()
        .map(|r| {
            let mut qrng = holofactor::seed::stream_rng(r.seed, holofactor::seed::Stream::Query);
            let truth = random_truth(&set, &mut qrng);
            assert_eq!(Some(&truth), r.truth.as_ref());
            let q = make_query(&set, &truth, 0.0, &mut qrng).unwrap();
            LabeledQuery { product: q.product, truth: Some(truth) }
        })
        .collect();
    let path = tmp("queries.txt");
    write_queries(&path, 256, 3, &queries).unwrap();
    let file = ingest_queries(&path, 0).unwrap();
    assert!(file.warnings.is_empty());
    let replay = run_queries(&cfg, &set, &file.queries).unwrap();
    assert_eq!(replay.records, generated.records);
    assert_eq!(replay.accuracy, generated.accuracy);
}

#[test]
fn unlabeled_queries_do_not_count_toward_accuracy() {
    let cfg = small(2);
    let set = cfg.codebook_set().unwrap();
    let p = set.bind_indices(&[1, 2, 3]).unwrap();
    let queries = vec![
        LabeledQuery { product: p.clone(), truth: Some(vec![1, 2, 3]) },
        LabeledQuery { product: p, truth: None },
    ];
    let text = format_queries(256, 3, &queries);
    let parsed = parse_queries(&text, std::path::Path::new("mem"), 0).unwrap();
    let s = run_queries(&cfg, &set, &parsed.queries).unwrap();
    assert_eq!((s.trials, s.labeled), (2, 1));
    assert!(s.records[1].truth.is_none() && !s.records[1].correct);
}

#[test]
fn corruption_curve_is_non_increasing() {
    let mut cfg = small(13);
    cfg.run.trials = 40;
    let axis = SweepAxis { variable: SweepVariable::Corruption, values: vec![0.0, 0.1, 0.2, 0.3] };
    let acc: Vec<f64> = run_sweep(&cfg, &axis).unwrap().iter().map(|p| p.summary.accuracy).collect();
    assert!(acc[0] >= 0.9, "{acc:?}");
    // One trial of slack per step for sampling noise.
    for w in acc.windows(2) {
        assert!(w[1] <= w[0] + 1.0 / 40.0, "{acc:?}");
    }
    assert!(acc[3] < acc[0], "{acc:?}");
}

#[test]
fn ablation_rows_cover_every_group() {
    let mut cfg = small(6);
    cfg.run.trials = 4;
    let plan = AblationPlan { k: 4.0, sigma_p_us: vec![0.5], sigma_r_us: vec![0.2], compare_array_sources: true };
    let rows = ablation_suite(&cfg, &plan).unwrap();
    let labels: Vec<(&str, &str)> = rows.iter().map(|r| (r.group.as_str(), r.label.as_str())).collect();
    assert_eq!(
        labels,
        vec![
            ("activation", "identity"),
            ("activation", "top_k"),
            ("activation", "threshold"),
            ("programming_noise", "sigma_p=0.5"),
            ("read_noise", "sigma_r=0.2"),
            ("array_source", "different_sources"),
            ("array_source", "same_source"),
        ]
    );
    let truths: Vec<_> = rows.iter().map(|r| r.point.summary.records[0].truth.clone()).collect();
    assert!(truths.windows(2).all(|w| w[0] == w[1]));
}
