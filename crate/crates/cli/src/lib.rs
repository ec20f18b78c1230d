//! Command-line front end for holofactor experiments.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use holofactor::harness::{
    ablation_suite, capacity_sweep, ingest_queries, noise_sweep, run_queries, run_sweep, run_trials, write_csv,
    write_json, write_jsonl, AblationPlan, CsvRow, ExperimentConfig, LabeledQuery, OutputFormat, SweepPoint, TrialSummary,
};
use holofactor::hyperopt::{optimize, Bounds, TuningProblem};
use holofactor::oracle::{brute_force, make_query, random_truth};
use holofactor::seed::{split_seed, stream_rng, Stream};
use holofactor::{Error, Factorizer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Trial count used by `--full`.
pub const FULL_TRIALS: usize = 5000;

#[derive(Debug, Parser)]
#[command(name = "holofactor", version, about = "Resonator-network factorization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Accuracy and iteration statistics over random queries.
    Run(Common),
    /// Accuracy across codebook sizes, with the operational-capacity verdict.
    SweepCapacity {
        #[command(flatten)]
        common: Common,
        /// Codebook sizes; defaults to the config's sweep values.
        #[arg(long, value_delimiter = ',')]
        m: Vec<usize>,
    },
    /// Accuracy across multiples of the PCM programming and read noise.
    SweepNoise {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1,1.5,2,3")]
        scales: Vec<f64>,
    },
    /// Matched-seed activation, noise-component and array-source comparisons.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Activation count for the top_k and threshold rows.
        #[arg(long, default_value_t = 8.34)]
        k: f64,
    },
    /// Bayesian optimization of the activation and convergence thresholds.
    Tune {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 40)]
        budget: usize,
        /// Also tune an additive noise level instead of using the config's backend.
        #[arg(long)]
        tune_noise: bool,
        /// Trials per evaluation.
        #[arg(long, default_value_t = 256)]
        eval_trials: usize,
    },
    /// Exhaustive search on queries, compared against the factorizer.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Query file; random queries from the config when absent.
        #[arg(long)]
        queries: Option<PathBuf>,
    },
    /// Factorize the product vectors of a query file.
    Ingest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        queries: PathBuf,
        /// Seed for breaking exact zeros in real-valued queries.
        #[arg(long, default_value_t = 0)]
        tie_break_seed: u64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Csv,
    Jsonl,
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Run 5,000 trials.
    #[arg(long, conflicts_with = "trials")]
    pub full: bool,
    /// Draw fresh queries at every sweep point.
    #[arg(long)]
    pub fresh_queries: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.run.master_seed = s;
        }
        if let Some(t) = self.trials {
            cfg.run.trials = t;
        }
        if self.full {
            cfg.run.trials = FULL_TRIALS;
        }
        if self.fresh_queries {
            cfg.run.shared_queries = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn output(&self, cfg: &ExperimentConfig) -> Option<(PathBuf, OutputFormat)> {
        let from_cfg = cfg.output.as_ref();
        let path = self.out.clone().or_else(|| from_cfg.map(|o| PathBuf::from(&o.path)))?;
        let format = match self.format {
            Some(Format::Csv) => OutputFormat::Csv,
            Some(Format::Jsonl) => OutputFormat::Jsonl,
            None => from_cfg.map(|o| o.format).unwrap_or_default(),
        };
        Some((path, format))
    }
}

/// Process exit status for an error: 1 usage or config, 2 I/O, 3 budget refusal.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } => 2,
        Error::Budget(_) => 3,
        _ => 1,
    }
}

fn summary_line(s: &TrialSummary) -> String {
    let conv = s
        .mean_iterations_converged
        .map_or("n/a".to_string(), |v| format!("{v:.1}"));
    format!(
        "trials {} accuracy {:.4} converged {:.4} mean_iterations(converged) {} mean_iterations(all) {:.1} wall {:.2}s",
        s.trials, s.accuracy, s.convergence_rate, conv, s.mean_iterations_all, s.wall_time_s
    )
}

fn point_line(p: &SweepPoint) -> String {
    let value = p.value.map_or(String::new(), |v| format!("{v} "));
    let sigma = p.sigma_total_us.map_or(String::new(), |s| format!("sigma_total {s:.3}uS "));
    format!("{value}{sigma}{}", summary_line(&p.summary))
}

fn write_rows(common: &Common, cfg: &ExperimentConfig, rows: &[CsvRow], points: &[&SweepPoint]) -> Result<(), Error> {
    let Some((path, format)) = common.output(cfg) else { return Ok(()) };
    match format {
        OutputFormat::Csv => write_csv(&path, cfg, rows),
        OutputFormat::Jsonl => {
            // One file per point keeps each trial log self-describing.
            for (j, p) in points.iter().enumerate() {
                let target = if points.len() == 1 { path.clone() } else { indexed(&path, j) };
                write_jsonl(target, cfg, &p.summary)?;
            }
            Ok(())
        }
    }
}

fn indexed(path: &Path, j: usize) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("jsonl");
    path.with_file_name(format!("{stem}.{j}.{ext}"))
}

#[derive(Serialize)]
struct OracleRow {
    trial: usize,
    truth: Option<Vec<usize>>,
    brute_force: Vec<usize>,
    similarity: f64,
    factorizer: Vec<usize>,
    converged: bool,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), Error> {
    let io = |e: std::io::Error| Error::Io { context: "writing output".into(), source: e };
    match cli.command {
        Command::Run(common) => {
            let cfg = common.load()?;
            writeln!(out, "config {}", cfg.hash()).map_err(io)?;
            let points = match &cfg.sweep {
                Some(axis) => run_sweep(&cfg, axis)?,
                None => vec![SweepPoint::new(&cfg, None, None, run_trials(&cfg)?)],
            };
            for p in &points {
                writeln!(out, "{}", point_line(p)).map_err(io)?;
            }
            let rows: Vec<CsvRow> = points.iter().map(CsvRow::from_point).collect();
            write_rows(&common, &cfg, &rows, &points.iter().collect::<Vec<_>>())?;
        }
        Command::SweepCapacity { common, m } => {
            let cfg = common.load()?;
            let ms: Vec<usize> = if m.is_empty() {
                cfg.sweep
                    .as_ref()
                    .map(|s| s.values.iter().map(|&v| v as usize).collect())
                    .ok_or_else(|| Error::Config("no --m values and no sweep section".into()))?
            } else {
                m
            };
            let report = capacity_sweep(&cfg, &ms)?;
            for p in &report.points {
                writeln!(out, "m {} ops {} {}", p.value.unwrap_or(0.0), p.brute_force_ops, summary_line(&p.summary))
                    .map_err(io)?;
            }
            match report.operational_capacity {
                Some(c) => writeln!(out, "operational capacity {c}"),
                None => writeln!(out, "operational capacity none (no point reached 99%)"),
            }
            .map_err(io)?;
            let rows: Vec<CsvRow> = report.points.iter().map(CsvRow::from_point).collect();
            write_rows(&common, &cfg, &rows, &report.points.iter().collect::<Vec<_>>())?;
        }
        Command::SweepNoise { common, scales } => {
            let cfg = common.load()?;
            let points = noise_sweep(&cfg, &scales)?;
            for p in &points {
                writeln!(out, "scale {}", point_line(p)).map_err(io)?;
            }
            let rows: Vec<CsvRow> = points.iter().map(CsvRow::from_point).collect();
            write_rows(&common, &cfg, &rows, &points.iter().collect::<Vec<_>>())?;
        }
        Command::Ablate { common, k } => {
            let cfg = common.load()?;
            let plan = AblationPlan { k, ..AblationPlan::default() };
            let rows = ablation_suite(&cfg, &plan)?;
            for r in &rows {
                writeln!(out, "{} {} {}", r.group, r.label, summary_line(&r.point.summary)).map_err(io)?;
            }
            let csv: Vec<CsvRow> = rows.iter().map(CsvRow::from_ablation).collect();
            write_rows(&common, &cfg, &csv, &rows.iter().map(|r| &r.point).collect::<Vec<_>>())?;
        }
        Command::Tune { common, budget, tune_noise, eval_trials } => {
            let cfg = common.load()?;
            let sizes = cfg.problem.sizes();
            let mut problem = TuningProblem::new(cfg.problem.d, sizes[0], cfg.problem.f, cfg.noise)?;
            problem.trials = eval_trials;
            problem.codebook_seed = cfg.codebook_seed();
            let bounds = Bounds::default_for(cfg.problem.d, tune_noise);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.master_seed);
            let result = optimize(&problem, &bounds, budget, &mut rng)?;
            for (i, o) in result.observations.iter().enumerate() {
                writeln!(out, "eval {i} t {:.5} ratio {:.3} sigma {:?} error {:.4}", o.point.t, o.point.convergence_ratio, o.point.sigma_out, o.error_rate)
                    .map_err(io)?;
            }
            let k = holofactor::activation::threshold_to_k(result.best.t, sizes[0], cfg.problem.d);
            writeln!(
                out,
                "best t {:.5} (K {:.2}) ratio {:.3} sigma {:?}",
                result.best.t, k, result.best.convergence_ratio, result.best.sigma_out
            )
            .map_err(io)?;
            if let Some((path, _)) = common.output(&cfg) {
                write_json(path, &result)?;
            }
        }
        Command::Oracle { common, queries } => {
            let cfg = common.load()?;
            let set = cfg.codebook_set()?;
            let queries = match queries {
                Some(path) => ingest_queries(path, cfg.run.master_seed)?.queries,
                None => (0..cfg.run.trials as u64)
                    .map(|i| {
                        let mut rng = stream_rng(split_seed(cfg.run.master_seed, i), Stream::Query);
                        let truth = random_truth(&set, &mut rng);
                        let q = make_query(&set, &truth, cfg.run.corruption, &mut rng)?;
                        Ok(LabeledQuery { product: q.product, truth: Some(truth) })
                    })
                    .collect::<Result<Vec<_>, Error>>()?,
            };
            let fz = Factorizer::new(&set, cfg.factorizer_config()?, &mut stream_rng(cfg.run.master_seed, Stream::Programming))?;
            let (mut agree, mut converged, mut exact) = (0usize, 0usize, 0usize);
            let mut rows = Vec::new();
            for (i, q) in queries.iter().enumerate() {
                let b = brute_force(&q.product, &set)?;
                let seed = split_seed(cfg.run.master_seed, i as u64);
                let r = fz.factorize(&q.product, &mut stream_rng(seed, Stream::Factorize))?;
                exact += (q.truth.as_ref() == Some(&b.indices)) as usize;
                converged += r.converged as usize;
                agree += (r.converged && r.predicted == b.indices) as usize;
                rows.push(OracleRow {
                    trial: i,
                    truth: q.truth.clone(),
                    brute_force: b.indices,
                    similarity: b.similarity,
                    factorizer: r.predicted,
                    converged: r.converged,
                });
            }
            writeln!(
                out,
                "queries {} brute_force_matches_truth {} factorizer_converged {} converged_and_agrees {}",
                queries.len(),
                exact,
                converged,
                agree
            )
            .map_err(io)?;
            if let Some((path, _)) = common.output(&cfg) {
                write_json(path, &rows)?;
            }
        }
        Command::Ingest { common, queries, tie_break_seed } => {
            let cfg = common.load()?;
            let file = ingest_queries(&queries, tie_break_seed)?;
            if file.d != cfg.problem.d || file.f != cfg.problem.f {
                return Err(Error::Config(format!(
                    "query file has d={} f={}, config has d={} f={}",
                    file.d, file.f, cfg.problem.d, cfg.problem.f
                )));
            }
            for w in &file.warnings {
                eprintln!("warning: {w}");
            }
            let set = cfg.codebook_set()?;
            let s = run_queries(&cfg, &set, &file.queries)?;
            writeln!(out, "labeled {} {}", s.labeled, summary_line(&s)).map_err(io)?;
            let point = SweepPoint::new(&cfg, None, None, s);
            write_rows(&common, &cfg, &[CsvRow::from_point(&point)], &[&point])?;
        }
    }
    Ok(())
}
