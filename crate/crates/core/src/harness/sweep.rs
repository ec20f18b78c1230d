use serde::{Deserialize, Serialize};

use super::config::{ActivationKind, ActivationSection, ExperimentConfig, SweepAxis, SweepVariable};
use super::run::{run_trials, TrialSummary};
use crate::error::{Error, Result};
use crate::noise::{NoiseBackend, PcmParams};
use crate::seed::split_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub variable: Option<SweepVariable>,
    pub value: Option<f64>,
    /// `sqrt(σ_p² + σ_r²)` for the pcm backend.
    pub sigma_total_us: Option<f64>,
    /// Dot products of an exhaustive search, `Π M_f`.
    pub brute_force_ops: u128,
    pub summary: TrialSummary,
}

impl SweepPoint {
    pub fn new(cfg: &ExperimentConfig, variable: Option<SweepVariable>, value: Option<f64>, summary: TrialSummary) -> Self {
        let sigma_total_us = match cfg.noise {
            NoiseBackend::Pcm { params, .. } => Some(params.total_sigma_us()),
            _ => None,
        };
        let brute_force_ops = cfg
            .problem
            .sizes()
            .iter()
            .fold(1u128, |acc, &m| acc.saturating_mul(m as u128));
        Self { variable, value, sigma_total_us, brute_force_ops, summary }
    }
}

/// Runs one experiment per axis value. With `shared_queries` every point sees
/// the same query seeds; otherwise point `j` runs under `split_seed(master, j)`.
pub fn run_sweep(cfg: &ExperimentConfig, axis: &SweepAxis) -> Result<Vec<SweepPoint>> {
    if axis.values.is_empty() {
        return Err(Error::Config("sweep axis has no values".into()));
    }
    // Validate every point before spending time on any of them.
    let configs = axis
        .values
        .iter()
        .enumerate()
        .map(|(j, &v)| {
            let mut c = cfg.with_value(axis.variable, v)?;
            if !cfg.run.shared_queries {
                c.run.master_seed = split_seed(cfg.run.master_seed, j as u64);
            }
            c.factorizer_config()?;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    configs
        .iter()
        .zip(&axis.values)
        .map(|(c, &v)| Ok(SweepPoint::new(c, Some(axis.variable), Some(v), run_trials(c)?)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub points: Vec<SweepPoint>,
    /// Largest `M^F` reaching 99% accuracy.
    pub operational_capacity: Option<u128>,
}

pub const CAPACITY_ACCURACY: f64 = 0.99;

pub fn capacity_sweep(cfg: &ExperimentConfig, ms: &[usize]) -> Result<CapacityReport> {
    let axis = SweepAxis {
        variable: SweepVariable::M,
        values: ms.iter().map(|&m| m as f64).collect(),
    };
    let points = run_sweep(cfg, &axis)?;
    let operational_capacity = points
        .iter()
        .filter(|p| p.summary.accuracy >= CAPACITY_ACCURACY)
        .map(|p| p.brute_force_ops)
        .max();
    Ok(CapacityReport { points, operational_capacity })
}

/// Sweep over a common multiplier of σ_p and σ_r.
pub fn noise_sweep(cfg: &ExperimentConfig, scales: &[f64]) -> Result<Vec<SweepPoint>> {
    if !matches!(cfg.noise, NoiseBackend::Pcm { .. }) {
        return Err(Error::Config("noise sweeps need the pcm backend".into()));
    }
    run_sweep(cfg, &SweepAxis { variable: SweepVariable::NoiseScale, values: scales.to_vec() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationPlan {
    /// Activation count used for both `top_k` (rounded) and the threshold.
    pub k: f64,
    pub sigma_p_us: Vec<f64>,
    pub sigma_r_us: Vec<f64>,
    pub compare_array_sources: bool,
}

impl Default for AblationPlan {
    fn default() -> Self {
        let p = PcmParams::default();
        Self {
            k: 8.34,
            sigma_p_us: vec![0.0, 0.5, p.sigma_p_us, 1.629, 2.5],
            sigma_r_us: vec![0.0, p.sigma_r_us, 0.921, 1.5],
            compare_array_sources: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub group: String,
    pub label: String,
    pub point: SweepPoint,
}

/// Matched-seed comparisons: activation kinds, single-component noise sweeps
/// (other PCM parameters unchanged) and shared versus separate arrays.
pub fn ablation_suite(cfg: &ExperimentConfig, plan: &AblationPlan) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    let mut push = |group: &str, label: String, c: ExperimentConfig, variable, value| -> Result<()> {
        let summary = run_trials(&c)?;
        rows.push(AblationRow {
            group: group.into(),
            label,
            point: SweepPoint::new(&c, variable, value, summary),
        });
        Ok(())
    };

    let activations = [
        ("identity", ActivationSection { kind: ActivationKind::Identity, k: None, t: None }),
        ("top_k", ActivationSection { kind: ActivationKind::TopK, k: Some(plan.k.round().max(1.0)), t: None }),
        ("threshold", ActivationSection::threshold_count(plan.k)),
    ];
    for (label, act) in activations {
        let mut c = cfg.clone();
        c.activation = act;
        c.validate()?;
        push("activation", label.into(), c, None, None)?;
    }

    if matches!(cfg.noise, NoiseBackend::Pcm { .. }) {
        for &s in &plan.sigma_p_us {
            let c = cfg.with_value(SweepVariable::SigmaP, s)?;
            push("programming_noise", format!("sigma_p={s}"), c, Some(SweepVariable::SigmaP), Some(s))?;
        }
        for &s in &plan.sigma_r_us {
            let c = cfg.with_value(SweepVariable::SigmaR, s)?;
            push("read_noise", format!("sigma_r={s}"), c, Some(SweepVariable::SigmaR), Some(s))?;
        }
        if plan.compare_array_sources {
            for shared in [false, true] {
                let mut c = cfg.clone();
                if let NoiseBackend::Pcm { shared_array, .. } = &mut c.noise {
                    *shared_array = shared;
                }
                let label = if shared { "same_source" } else { "different_sources" };
                push("array_source", label.into(), c, None, None)?;
            }
        }
    }
    Ok(rows)
}
