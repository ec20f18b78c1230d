use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::ingest::LabeledQuery;
use crate::error::Result;
use crate::factorizer::{CodebookSet, FactorizationResult, Factorizer};
use crate::oracle::{make_query, random_truth};
use crate::seed::{split_seed, stream_rng, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub seed: u64,
    /// Absent for ingested queries without ground truth.
    pub truth: Option<Vec<usize>>,
    pub predicted: Vec<usize>,
    pub converged: bool,
    /// Converged with every index equal to the truth.
    pub correct: bool,
    pub iterations: usize,
    pub op_count: u64,
}

impl TrialRecord {
    fn new(trial: u64, seed: u64, truth: Option<Vec<usize>>, r: FactorizationResult) -> Self {
        let correct = r.converged && truth.as_deref() == Some(r.predicted.as_slice());
        Self {
            trial,
            seed,
            truth,
            predicted: r.predicted,
            converged: r.converged,
            correct,
            iterations: r.iterations,
            op_count: r.op_count,
        }
    }
}

/// Aggregate over a set of trials. Iteration statistics are reported both over
/// all trials and over converged trials only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trials: usize,
    /// Trials with known ground truth; the accuracy denominator.
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
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub records: Vec<TrialRecord>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

impl TrialSummary {
    pub fn from_records(records: Vec<TrialRecord>, wall_time_s: f64) -> Self {
        let trials = records.len();
        let labeled = records.iter().filter(|r| r.truth.is_some()).count();
        let correct = records.iter().filter(|r| r.correct).count();
        let converged = records.iter().filter(|r| r.converged).count();
        let all: Vec<f64> = records.iter().map(|r| r.iterations as f64).collect();
        let conv: Vec<f64> = records
            .iter()
            .filter(|r| r.converged)
            .map(|r| r.iterations as f64)
            .collect();
        let ops: Vec<f64> = records.iter().map(|r| r.op_count as f64).collect();
        let ratio = |k: usize, n: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        Self {
            trials,
            labeled,
            correct,
            accuracy: ratio(correct, labeled),
            convergence_rate: ratio(converged, trials),
            mean_iterations_all: mean(&all).unwrap_or(0.0),
            median_iterations_all: median(&all).unwrap_or(0.0),
            mean_iterations_converged: mean(&conv),
            median_iterations_converged: median(&conv),
            mean_op_count: mean(&ops).unwrap_or(0.0),
            wall_time_s,
            records,
        }
    }

    pub fn without_records(&self) -> Self {
        Self { records: Vec::new(), ..self.clone() }
    }
}

/// Runs `cfg.run.trials` fresh random queries against the experiment's codebooks.
///
/// Trial `i` draws everything from `seed_i = split_seed(master_seed, i)`: the
/// truth and corruption from its query stream, the factorizer noise from its
/// factorize stream. Records therefore do not depend on the worker count.
pub fn run_trials(cfg: &ExperimentConfig) -> Result<TrialSummary> {
    let set = cfg.codebook_set()?;
    run_trials_on(cfg, &set)
}

/// [`run_trials`] with caller-supplied codebooks.
pub fn run_trials_on(cfg: &ExperimentConfig, set: &CodebookSet) -> Result<TrialSummary> {
    let corruption = cfg.run.corruption;
    run_indexed(cfg, set, cfg.run.trials, |_, seed| {
        let mut rng = stream_rng(seed, Stream::Query);
        let truth = random_truth(set, &mut rng);
        let q = make_query(set, &truth, corruption, &mut rng)?;
        Ok(LabeledQuery { product: q.product, truth: Some(truth) })
    })
}

/// Factorizes a fixed list of queries, e.g. from [`super::ingest_queries`].
pub fn run_queries(cfg: &ExperimentConfig, set: &CodebookSet, queries: &[LabeledQuery]) -> Result<TrialSummary> {
    run_indexed(cfg, set, queries.len(), |i, _| Ok(queries[i].clone()))
}

fn run_indexed<Q>(cfg: &ExperimentConfig, set: &CodebookSet, trials: usize, query: Q) -> Result<TrialSummary>
where
    Q: Fn(usize, u64) -> Result<LabeledQuery>,
{
    let master = cfg.run.master_seed;
    let fcfg = cfg.factorizer_config()?;
    let start = Instant::now();
    // Construction also enforces the iteration budget before any trial runs.
    let shared = Factorizer::new(set, fcfg.clone(), &mut stream_rng(master, Stream::Programming))?;

    let jobs = (0..trials as u64)
        .map(|i| {
            let seed = split_seed(master, i);
            query(i as usize, seed).map(|q| (i, seed, q))
        })
        .collect::<Result<Vec<_>>>()?;

    let records = jobs
        .into_par_iter()
        .map(|(i, seed, q)| {
            let local;
            let fz = if cfg.run.reprogram_per_trial {
                local = Factorizer::new(set, fcfg.clone(), &mut stream_rng(seed, Stream::Programming))?;
                &local
            } else {
                &shared
            };
            let r = fz.factorize(&q.product, &mut stream_rng(seed, Stream::Factorize))?;
            Ok(TrialRecord::new(i, seed, q.truth, r))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialSummary::from_records(records, start.elapsed().as_secs_f64()))
}
