use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::activation::{k_to_threshold, ActivationSpec};
use crate::error::{Error, Result};
use crate::factorizer::{max_iterations, CodebookSet, ConvergencePolicy, FactorizerConfig, UpdatePolicy};
use crate::noise::{scaled_pcm_params, NoiseBackend, PcmParams};
use crate::oracle::random_codebook_set;
use crate::vsa::random_codebook;

/// Codebook size shared by all factors, or one size per factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sizes {
    Shared(usize),
    PerFactor(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub d: usize,
    pub m: Sizes,
    pub f: usize,
}

impl Problem {
    pub fn sizes(&self) -> Vec<usize> {
        match &self.m {
            Sizes::Shared(m) => vec![*m; self.f],
            Sizes::PerFactor(v) => v.clone(),
        }
    }

    pub fn largest_m(&self) -> usize {
        self.sizes().into_iter().max().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Identity,
    TopK,
    Threshold,
}

/// Activation as written in a config file. A threshold may be given directly
/// (`t`) or as an expected activation count (`k`); `top_k` takes an integer `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivationSection {
    pub kind: ActivationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
}

impl ActivationSection {
    pub fn threshold_count(k: f64) -> Self {
        Self { kind: ActivationKind::Threshold, k: Some(k), t: None }
    }

    /// Resolves to a concrete activation. Count-based thresholds use the
    /// largest codebook when sizes differ.
    pub fn resolve(&self, m: usize, d: usize) -> Result<ActivationSpec> {
        let spec = match (self.kind, self.k, self.t) {
            (ActivationKind::Identity, None, None) => ActivationSpec::Identity,
            (ActivationKind::TopK, Some(k), None) => {
                if k.fract() != 0.0 || k < 1.0 {
                    return Err(Error::Config(format!("top_k needs an integer k >= 1, got {k}")));
                }
                ActivationSpec::TopK { k: k as usize }
            }
            (ActivationKind::Threshold, None, Some(t)) => ActivationSpec::Threshold { t },
            (ActivationKind::Threshold, Some(k), None) => ActivationSpec::Threshold {
                t: k_to_threshold(k, m, d)?,
            },
            (kind, k, t) => {
                return Err(Error::Config(format!(
                    "activation {kind:?} does not accept k={k:?}, t={t:?}"
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSection {
    #[serde(default)]
    pub policy: ConvergencePolicy,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSection {
    pub trials: usize,
    /// Iteration cap; the brute-force bound `(M^(F-1) - 1) / F` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    pub master_seed: u64,
    /// Seed for the codebooks; the master seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codebook_seed: Option<u64>,
    #[serde(default)]
    pub update_policy: UpdatePolicy,
    /// One stored codebook shared by all factors through circular shifts.
    #[serde(default)]
    pub multiplex: bool,
    /// Fraction of sign-flipped elements in each generated query.
    #[serde(default)]
    pub corruption: f64,
    /// Program a fresh crossbar for every trial instead of once per experiment.
    #[serde(default)]
    pub reprogram_per_trial: bool,
    /// Reuse the same query sequence at every sweep point.
    #[serde(default = "default_true")]
    pub shared_queries: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    M,
    D,
    NoiseScale,
    SigmaP,
    SigmaR,
    SigmaOut,
    ReadTime,
    ActivationT,
    ActivationK,
    ConvergenceRatio,
    Corruption,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Jsonl,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputSection {
    pub path: String,
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub activation: ActivationSection,
    pub convergence: ConvergenceSection,
    pub noise: NoiseBackend,
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepAxis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

impl ExperimentConfig {
    /// The headline setting: D=M=256, F=3, K=8.34, default PCM noise.
    pub fn headline() -> Self {
        Self {
            problem: Problem { d: 256, m: Sizes::Shared(256), f: 3 },
            activation: ActivationSection::threshold_count(8.34),
            convergence: ConvergenceSection { policy: ConvergencePolicy::Threshold, ratio: 0.5 },
            noise: NoiseBackend::pcm_default(),
            run: RunSection {
                trials: 500,
                n_max: None,
                master_seed: 0,
                codebook_seed: None,
                update_policy: UpdatePolicy::Sequential,
                multiplex: false,
                corruption: 0.0,
                reprogram_per_trial: false,
                shared_queries: true,
            },
            sweep: None,
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON encoding, as lowercase hex.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        if p.d == 0 {
            return Err(Error::Config("problem.d must be positive".into()));
        }
        if p.f < 2 {
            return Err(Error::Config(format!("problem.f must be at least 2, got {}", p.f)));
        }
        let sizes = p.sizes();
        if sizes.len() != p.f {
            return Err(Error::Config(format!(
                "problem.m lists {} sizes for f={}",
                sizes.len(),
                p.f
            )));
        }
        if sizes.contains(&0) {
            return Err(Error::Config("codebook sizes must be positive".into()));
        }
        if self.run.multiplex && sizes.iter().any(|&m| m != sizes[0]) {
            return Err(Error::Config("multiplexing needs equal codebook sizes".into()));
        }
        if self.run.trials == 0 {
            return Err(Error::Config("run.trials must be at least 1".into()));
        }
        if !(0.0..=0.5).contains(&self.run.corruption) {
            return Err(Error::Config(format!(
                "run.corruption must lie in [0, 0.5], got {}",
                self.run.corruption
            )));
        }
        self.factorizer_config()?.validate()
    }

    pub fn n_max(&self) -> Result<usize> {
        match self.run.n_max {
            Some(n) => Ok(n),
            None => {
                let sizes = self.problem.sizes();
                let m = sizes.iter().copied().max().unwrap_or(1);
                if m == 1 {
                    return Ok(1);
                }
                let n = max_iterations(m, sizes.len())?;
                Ok(usize::try_from(n).unwrap_or(usize::MAX).max(1))
            }
        }
    }

    pub fn factorizer_config(&self) -> Result<FactorizerConfig> {
        Ok(FactorizerConfig {
            activation: self.activation.resolve(self.problem.largest_m(), self.problem.d)?,
            convergence_ratio: self.convergence.ratio,
            convergence_policy: self.convergence.policy,
            backend: self.noise,
            max_iterations: self.n_max()?,
            update_policy: self.run.update_policy,
            multiplex: self.run.multiplex,
        })
    }

    pub fn codebook_seed(&self) -> u64 {
        self.run.codebook_seed.unwrap_or(self.run.master_seed)
    }

    pub fn codebook_set(&self) -> Result<CodebookSet> {
        let sizes = self.problem.sizes();
        if self.run.multiplex {
            let base = random_codebook(sizes[0], self.problem.d, self.codebook_seed())?;
            CodebookSet::multiplexed(base, sizes.len())
        } else {
            random_codebook_set(&sizes, self.problem.d, self.codebook_seed())
        }
    }

    /// A copy with one sweep variable set to `value`.
    pub fn with_value(&self, variable: SweepVariable, value: f64) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.sweep = None;
        let count = |v: f64, what: &str| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("{what} must be a positive integer, got {v}")))
            }
        };
        match variable {
            SweepVariable::M => cfg.problem.m = Sizes::Shared(count(value, "m")?),
            SweepVariable::D => cfg.problem.d = count(value, "d")?,
            SweepVariable::NoiseScale => {
                let params = cfg.pcm_params_mut()?;
                *params = scaled_pcm_params(value, params)?;
            }
            SweepVariable::SigmaP => cfg.pcm_params_mut()?.sigma_p_us = value,
            SweepVariable::SigmaR => cfg.pcm_params_mut()?.sigma_r_us = value,
            SweepVariable::ReadTime => match &mut cfg.noise {
                NoiseBackend::Pcm { read_time_s, .. } => *read_time_s = value,
                _ => return Err(Error::Config("read_time sweeps need the pcm backend".into())),
            },
            SweepVariable::SigmaOut => cfg.noise = NoiseBackend::AdditiveGaussian { sigma: value },
            SweepVariable::ActivationT => {
                cfg.activation = ActivationSection { kind: ActivationKind::Threshold, k: None, t: Some(value) }
            }
            SweepVariable::ActivationK => {
                cfg.activation.k = Some(value);
                cfg.activation.t = None;
                if cfg.activation.kind == ActivationKind::Identity {
                    cfg.activation.kind = ActivationKind::Threshold;
                }
            }
            SweepVariable::ConvergenceRatio => cfg.convergence.ratio = value,
            SweepVariable::Corruption => cfg.run.corruption = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn pcm_params_mut(&mut self) -> Result<&mut PcmParams> {
        match &mut self.noise {
            NoiseBackend::Pcm { params, .. } => Ok(params),
            _ => Err(Error::Config("this sweep needs the pcm backend".into())),
        }
    }
}
