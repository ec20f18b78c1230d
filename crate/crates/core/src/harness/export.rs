//! CSV (one row per sweep point) and JSON-lines (one record per trial) files.
//! Both start with a provenance header carrying the config hash and master seed.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, SweepVariable};
use super::run::{TrialRecord, TrialSummary};
use super::sweep::{AblationRow, SweepPoint};
use crate::error::{Error, Result};

/// Column order of the CSV output.
pub const CSV_COLUMNS: &[&str] = &[
    "group",
    "label",
    "variable",
    "value",
    "sigma_total_us",
    "brute_force_ops",
    "trials",
    "labeled",
    "correct",
    "accuracy",
    "convergence_rate",
    "mean_iterations_all",
    "median_iterations_all",
    "mean_iterations_converged",
    "median_iterations_converged",
    "mean_op_count",
    "wall_time_s",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub master_seed: u64,
}

impl Provenance {
    pub fn of(cfg: &ExperimentConfig) -> Self {
        Self { config_hash: cfg.hash(), master_seed: cfg.run.master_seed }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub group: Option<String>,
    pub label: Option<String>,
    pub variable: Option<SweepVariable>,
    pub value: Option<f64>,
    pub sigma_total_us: Option<f64>,
    pub brute_force_ops: u128,
    pub trials: usize,
    pub labeled: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub convergence_rate: f64,
    pub mean_iterations_all: f64,
    pub median_iterations_all: f64,
    pub mean_iterations_converged: Option<f64>,
    pub median_iterations_converged: Option<f64>,
    pub mean_op_count: f64,
    pub wall_time_s: f64,
}

impl CsvRow {
    pub fn from_point(p: &SweepPoint) -> Self {
        let s = &p.summary;
        Self {
            group: None,
            label: None,
            variable: p.variable,
            value: p.value,
            sigma_total_us: p.sigma_total_us,
            brute_force_ops: p.brute_force_ops,
            trials: s.trials,
            labeled: s.labeled,
            correct: s.correct,
            accuracy: s.accuracy,
            convergence_rate: s.convergence_rate,
            mean_iterations_all: s.mean_iterations_all,
            median_iterations_all: s.median_iterations_all,
            mean_iterations_converged: s.mean_iterations_converged,
            median_iterations_converged: s.median_iterations_converged,
            mean_op_count: s.mean_op_count,
            wall_time_s: s.wall_time_s,
        }
    }

    pub fn from_ablation(r: &AblationRow) -> Self {
        Self {
            group: Some(r.group.clone()),
            label: Some(r.label.clone()),
            ..Self::from_point(&r.point)
        }
    }

    /// The summary statistics of this row, without per-trial records.
    pub fn summary(&self) -> TrialSummary {
        TrialSummary {
            trials: self.trials,
            labeled: self.labeled,
            correct: self.correct,
            accuracy: self.accuracy,
            convergence_rate: self.convergence_rate,
            mean_iterations_all: self.mean_iterations_all,
            median_iterations_all: self.median_iterations_all,
            mean_iterations_converged: self.mean_iterations_converged,
            median_iterations_converged: self.median_iterations_converged,
            mean_op_count: self.mean_op_count,
            wall_time_s: self.wall_time_s,
            records: Vec::new(),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))
}

fn io_ctx(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(format!("writing {}", path.display()), e)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(format!("csv {}", path.display()), io),
        other => Error::Parse {
            path: path.into(),
            line: 0,
            message: format!("{other:?}"),
        },
    }
}

pub fn write_csv(path: impl AsRef<Path>, cfg: &ExperimentConfig, rows: &[CsvRow]) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let prov = Provenance::of(cfg);
    writeln!(out, "# holofactor config_hash={} master_seed={}", prov.config_hash, prov.master_seed)
        .map_err(io_ctx(path))?;
    writeln!(out, "# columns: {}", CSV_COLUMNS.join(",")).map_err(io_ctx(path))?;
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_ctx(path))
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<(Provenance, Vec<CsvRow>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader
        .read_line(&mut first)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let prov = parse_provenance(first.trim()).ok_or_else(|| Error::Parse {
        path: path.into(),
        line: 1,
        message: "missing provenance header".into(),
    })?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<CsvRow>, _>>()
        .map_err(|e| csv_err(path, e))?;
    Ok((prov, rows))
}

fn parse_provenance(line: &str) -> Option<Provenance> {
    let rest = line.strip_prefix("# holofactor ")?;
    let (mut hash, mut seed) = (None, None);
    for kv in rest.split_whitespace() {
        match kv.split_once('=')? {
            ("config_hash", v) => hash = Some(v.to_string()),
            ("master_seed", v) => seed = v.parse().ok(),
            _ => {}
        }
    }
    Some(Provenance { config_hash: hash?, master_seed: seed? })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct JsonlHeader {
    config_hash: String,
    master_seed: u64,
    wall_time_s: f64,
    config: ExperimentConfig,
}

/// Header line with the full config, then one line per trial record.
pub fn write_jsonl(path: impl AsRef<Path>, cfg: &ExperimentConfig, summary: &TrialSummary) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let header = JsonlHeader {
        config_hash: cfg.hash(),
        master_seed: cfg.run.master_seed,
        wall_time_s: summary.wall_time_s,
        config: cfg.clone(),
    };
    let line = serde_json::to_string(&header).expect("header serializes");
    writeln!(out, "{line}").map_err(io_ctx(path))?;
    for r in &summary.records {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(out, "{line}").map_err(io_ctx(path))?;
    }
    out.flush().map_err(io_ctx(path))
}

/// Rebuilds the summary from a [`write_jsonl`] file.
pub fn read_jsonl(path: impl AsRef<Path>) -> Result<(Provenance, ExperimentConfig, TrialSummary)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let parse_err = |line: usize, e: serde_json::Error| Error::Parse {
        path: path.into(),
        line,
        message: e.to_string(),
    };
    let mut header: Option<JsonlHeader> = None;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        if header.is_none() {
            header = Some(serde_json::from_str(&line).map_err(|e| parse_err(i + 1, e))?);
        } else {
            records.push(serde_json::from_str::<TrialRecord>(&line).map_err(|e| parse_err(i + 1, e))?);
        }
    }
    let h = header.ok_or_else(|| Error::Parse {
        path: path.into(),
        line: 1,
        message: "empty file".into(),
    })?;
    let summary = TrialSummary::from_records(records, h.wall_time_s);
    Ok((
        Provenance { config_hash: h.config_hash, master_seed: h.master_seed },
        h.config,
        summary,
    ))
}

/// Pretty JSON of any serializable result, e.g. a tuning record.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|e| Error::io(format!("writing {}", path.display()), e.into()))?;
    writeln!(out).map_err(io_ctx(path))?;
    out.flush().map_err(io_ctx(path))
}
