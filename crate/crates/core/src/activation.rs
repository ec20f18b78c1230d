//! Activation functions applied between similarity search and projection.
//!
//! The threshold activation is the hardware-friendly winners-take-all: a fixed
//! cut `T` in normalized cosine units. [`k_to_threshold`] picks the `T` that
//! activates `K` entries on average when similarities of random vectors are
//! modeled as `N(0, 1/D)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;
use crate::vsa::SimilarityVector;

pub use crate::normal::inverse_cdf as inverse_normal_cdf;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActivationSpec {
    Identity,
    TopK { k: usize },
    Threshold { t: f64 },
}

impl ActivationSpec {
    /// Threshold activation calibrated to activate `k` of `m` entries on average.
    pub fn threshold_for_count(k: f64, m: usize, d: usize) -> Result<Self> {
        Ok(ActivationSpec::Threshold {
            t: k_to_threshold(k, m, d)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ActivationSpec::Identity => Ok(()),
            ActivationSpec::TopK { k } if k >= 1 => Ok(()),
            ActivationSpec::TopK { .. } => Err(Error::invalid("top_k needs K >= 1")),
            ActivationSpec::Threshold { t } if t.is_finite() => Ok(()),
            ActivationSpec::Threshold { t } => {
                Err(Error::invalid(format!("threshold must be finite, got {t}")))
            }
        }
    }

    pub fn apply(&self, a: &[f64]) -> SimilarityVector {
        let mut out = a.to_vec();
        self.apply_in_place(&mut out);
        out.into()
    }

    pub(crate) fn apply_in_place(&self, a: &mut [f64]) {
        match *self {
            ActivationSpec::Identity => {}
            ActivationSpec::TopK { k } => top_k_in_place(a, k),
            ActivationSpec::Threshold { t } => {
                for v in a.iter_mut() {
                    if !(*v > t) {
                        *v = 0.0;
                    }
                }
            }
        }
    }
}

pub fn identity(a: &[f64]) -> SimilarityVector {
    ActivationSpec::Identity.apply(a)
}

/// Keeps the `k` largest strictly positive entries; ties at rank `k` go to the lowest index.
pub fn top_k(a: &[f64], k: usize) -> SimilarityVector {
    ActivationSpec::TopK { k }.apply(a)
}

/// Keeps entries strictly greater than `t`.
pub fn threshold(a: &[f64], t: f64) -> SimilarityVector {
    ActivationSpec::Threshold { t }.apply(a)
}

fn top_k_in_place(a: &mut [f64], k: usize) {
    let mut positive: Vec<usize> = (0..a.len()).filter(|&i| a[i] > 0.0).collect();
    if positive.len() <= k {
        for v in a.iter_mut() {
            if !(*v > 0.0) {
                *v = 0.0;
            }
        }
        return;
    }
    // Stable sort keeps ascending index order among equal values.
    positive.sort_by(|&i, &j| a[j].total_cmp(&a[i]));
    let mut keep = vec![false; a.len()];
    for &i in &positive[..k] {
        keep[i] = true;
    }
    for (v, kept) in a.iter_mut().zip(keep) {
        if !kept {
            *v = 0.0;
        }
    }
}

/// `T = Φ⁻¹(1 - K/M) / √D`.
pub fn k_to_threshold(k: f64, m: usize, d: usize) -> Result<f64> {
    if !(k > 0.0 && k < m as f64) {
        return Err(Error::invalid(format!(
            "activation count must satisfy 0 < K < M, got K={k}, M={m}"
        )));
    }
    if d == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    Ok(normal::inverse_cdf(1.0 - k / m as f64)? / (d as f64).sqrt())
}

/// Expected activation count for threshold `t` under the `N(0, 1/D)` model.
pub fn threshold_to_k(t: f64, m: usize, d: usize) -> f64 {
    m as f64 * (1.0 - normal::cdf(t * (d as f64).sqrt()))
}
