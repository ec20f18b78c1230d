//! Stochastic MVM backends.
//!
//! Three backends share one interface through [`Crossbar`]:
//!
//! - `Exact`: noise-free bipolar codebook.
//! - `AdditiveGaussian`: exact result plus i.i.d. `N(0, σ²)` on every output
//!   entry, in both directions.
//! - `Pcm`: a phase-change-memory crossbar. Each `±1` weight is one programmed
//!   device (positive or negative side of a differential pair) with
//!   conductance `G(t) = G_T0 (t/T0)^(-ν_dev) + n_r`, where
//!   `G_T0 = G_tar + n_p` and `ν_dev ~ N(ν, σ_ν²)` are frozen at programming
//!   and `n_r ~ N(0, σ_r²)` is redrawn on every read.
//!
//! All outputs are in normalized units: similarities are divided by
//! `G_tar · D` and projections by `G_tar`, so thresholds do not depend on the
//! backend.
//!
//! The PCM fast path reads the frozen drifted weights and adds the read noise
//! aggregated per output line. Per-device read noise enters an output as
//! `Σ_d x_d n_r,d` (or `Σ_i w_i n_r,i` for the projection), which is exactly
//! `N(0, σ_r² Σ x_d²)`, so this is equal in distribution to summing
//! individually perturbed devices ([`read_effective_weights`]).

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::vsa::{Codebook, Hypervector, SimilarityVector};

/// Device-level PCM noise parameters. Conductances in µS, times in s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PcmParams {
    pub g_tar_us: f64,
    pub t0_s: f64,
    pub sigma_p_us: f64,
    pub sigma_r_us: f64,
    pub sigma_nu: f64,
    pub nu: f64,
}

impl Default for PcmParams {
    /// Parameters fitted on 65,536 devices of the experimental platform.
    fn default() -> Self {
        Self {
            g_tar_us: 5.0,
            t0_s: 60.0,
            sigma_p_us: 1.1636,
            sigma_r_us: 0.3951,
            sigma_nu: 0.0907,
            nu: 0.0428,
        }
    }
}

impl PcmParams {
    /// All noise sources off and no drift.
    pub fn noiseless() -> Self {
        Self {
            sigma_p_us: 0.0,
            sigma_r_us: 0.0,
            sigma_nu: 0.0,
            nu: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.g_tar_us,
            self.t0_s,
            self.sigma_p_us,
            self.sigma_r_us,
            self.sigma_nu,
            self.nu,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("PCM parameters must be finite"));
        }
        if self.g_tar_us <= 0.0 || self.t0_s <= 0.0 {
            return Err(Error::invalid("G_tar and T0 must be positive"));
        }
        if self.sigma_p_us < 0.0 || self.sigma_r_us < 0.0 || self.sigma_nu < 0.0 {
            return Err(Error::invalid("noise standard deviations must be >= 0"));
        }
        Ok(())
    }

    /// `sqrt(σ_p² + σ_r²)`, the sweep axis for scaled noise.
    pub fn total_sigma_us(&self) -> f64 {
        self.sigma_p_us.hypot(self.sigma_r_us)
    }

    /// Closed-form std of a programmed device's conductance read at `t`,
    /// including drift variability (clamping ignored).
    pub fn conductance_spread_us(&self, t: f64) -> f64 {
        let l = (t / self.t0_s).ln();
        // s = (t/T0)^-ν_dev is log-normal.
        let mean_s = (-self.nu * l + 0.5 * (self.sigma_nu * l).powi(2)).exp();
        let mean_s2 = (-2.0 * self.nu * l + 2.0 * (self.sigma_nu * l).powi(2)).exp();
        let g = self.g_tar_us;
        let var = (g * g + self.sigma_p_us.powi(2)) * mean_s2 - (g * mean_s).powi(2)
            + self.sigma_r_us.powi(2);
        var.max(0.0).sqrt()
    }

    /// Mean drift factor `(t/T0)^-ν`.
    pub fn mean_drift_factor(&self, t: f64) -> f64 {
        (t / self.t0_s).powf(-self.nu)
    }
}

/// Scales programming and read noise together, keeping `σ_r/σ_p` fixed.
/// Drift parameters are untouched.
pub fn scaled_pcm_params(scale: f64, base: &PcmParams) -> Result<PcmParams> {
    if !(scale >= 0.0) || !scale.is_finite() {
        return Err(Error::invalid(format!("noise scale must be >= 0, got {scale}")));
    }
    Ok(PcmParams {
        sigma_p_us: base.sigma_p_us * scale,
        sigma_r_us: base.sigma_r_us * scale,
        ..*base
    })
}

pub const DEFAULT_READ_TIME_S: f64 = 3600.0;

fn default_read_time() -> f64 {
    DEFAULT_READ_TIME_S
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseBackend {
    Exact,
    /// `sigma` in normalized similarity units.
    AdditiveGaussian { sigma: f64 },
    Pcm {
        #[serde(flatten)]
        params: PcmParams,
        #[serde(default = "default_read_time")]
        read_time_s: f64,
        /// One programmed array backs both MVM directions.
        #[serde(default)]
        shared_array: bool,
    },
}

impl NoiseBackend {
    pub fn pcm_default() -> Self {
        NoiseBackend::Pcm {
            params: PcmParams::default(),
            read_time_s: DEFAULT_READ_TIME_S,
            shared_array: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseBackend::Exact => Ok(()),
            NoiseBackend::AdditiveGaussian { sigma } if *sigma >= 0.0 && sigma.is_finite() => {
                Ok(())
            }
            NoiseBackend::AdditiveGaussian { sigma } => {
                Err(Error::invalid(format!("sigma_out must be >= 0, got {sigma}")))
            }
            NoiseBackend::Pcm {
                params,
                read_time_s,
                ..
            } => {
                params.validate()?;
                if !(*read_time_s >= params.t0_s) {
                    return Err(Error::invalid(format!(
                        "read time {read_time_s} s precedes T0 = {} s",
                        params.t0_s
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Conversion from a per-device i.i.d. conductance std to the equivalent
/// additive output std: `σ_device / (G_tar · √D)`.
pub fn device_sigma_to_output(sigma_device_us: f64, g_tar_us: f64, d: usize) -> f64 {
    sigma_device_us / (g_tar_us * (d as f64).sqrt())
}

/// One side of a differential crossbar: per-device conductance and drift exponent.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviceMatrix {
    pub g_t0_us: Vec<f64>,
    pub drift_exponent: Vec<f64>,
}

/// A codebook written into PCM devices. Row-major `M x D` on both sides.
#[derive(Clone, Debug, PartialEq)]
pub struct ProgrammedArray {
    rows: usize,
    cols: usize,
    positive: DeviceMatrix,
    negative: DeviceMatrix,
    /// `true` where the stored weight is `-1` (negative side programmed).
    negative_weight: Vec<bool>,
}

impl ProgrammedArray {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn positive(&self) -> &DeviceMatrix {
        &self.positive
    }

    pub fn negative(&self) -> &DeviceMatrix {
        &self.negative
    }

    /// Sign, conductance and drift exponent of the programmed device of a cell.
    fn programmed(&self, idx: usize) -> (f64, f64, f64) {
        if self.negative_weight[idx] {
            (-1.0, self.negative.g_t0_us[idx], self.negative.drift_exponent[idx])
        } else {
            (1.0, self.positive.g_t0_us[idx], self.positive.drift_exponent[idx])
        }
    }
}

/// Programs one device per weight: `+1` on the positive side, `-1` on the
/// negative side, the other device left at 0 µS.
pub fn program_array<R: Rng + ?Sized>(
    cb: &Codebook,
    params: &PcmParams,
    rng: &mut R,
) -> ProgrammedArray {
    let (rows, cols) = (cb.len(), cb.dim());
    let n = rows * cols;
    let mut positive = DeviceMatrix {
        g_t0_us: vec![0.0; n],
        drift_exponent: vec![0.0; n],
    };
    let mut negative = positive.clone();
    let mut negative_weight = vec![false; n];
    for (r, v) in cb.vectors().iter().enumerate() {
        for c in 0..cols {
            let idx = r * cols + c;
            let zp: f64 = StandardNormal.sample(rng);
            let zn: f64 = StandardNormal.sample(rng);
            let g = (params.g_tar_us + params.sigma_p_us * zp).max(0.0);
            let nu = params.nu + params.sigma_nu * zn;
            negative_weight[idx] = v.is_negative(c);
            let side = if v.is_negative(c) {
                &mut negative
            } else {
                &mut positive
            };
            side.g_t0_us[idx] = g;
            side.drift_exponent[idx] = nu;
        }
    }
    ProgrammedArray {
        rows,
        cols,
        positive,
        negative,
        negative_weight,
    }
}

fn check_read_time(params: &PcmParams, t: f64) -> Result<()> {
    if t >= params.t0_s {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "read time {t} s precedes T0 = {} s",
            params.t0_s
        )))
    }
}

/// Per-device conductances `(positive, negative)` read at time `t`.
///
/// Read noise is added to programmed devices only; unprogrammed devices sit
/// in the reset state and read 0 µS.
pub fn read_conductances<R: Rng + ?Sized>(
    arr: &ProgrammedArray,
    params: &PcmParams,
    t: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_read_time(params, t)?;
    let ratio = t / params.t0_s;
    let n = arr.rows * arr.cols;
    let mut pos = vec![0.0; n];
    let mut neg = vec![0.0; n];
    for idx in 0..n {
        let (_, g0, nu) = arr.programmed(idx);
        let z: f64 = StandardNormal.sample(rng);
        let g = g0 * ratio.powf(-nu) + params.sigma_r_us * z;
        if arr.negative_weight[idx] {
            neg[idx] = g;
        } else {
            pos[idx] = g;
        }
    }
    Ok((pos, neg))
}

/// Effective weights `(G_pos(t) - G_neg(t)) / G_tar`, row-major, fresh read noise.
pub fn read_effective_weights<R: Rng + ?Sized>(
    arr: &ProgrammedArray,
    params: &PcmParams,
    t: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let (pos, neg) = read_conductances(arr, params, t, rng)?;
    Ok(pos
        .iter()
        .zip(&neg)
        .map(|(p, n)| (p - n) / params.g_tar_us)
        .collect())
}

/// Effective weights with drift applied and no read noise.
pub fn drifted_weights(arr: &ProgrammedArray, params: &PcmParams, t: f64) -> Result<Vec<f64>> {
    check_read_time(params, t)?;
    let ratio = t / params.t0_s;
    Ok((0..arr.rows * arr.cols)
        .map(|idx| {
            let (sign, g0, nu) = arr.programmed(idx);
            sign * g0 * ratio.powf(-nu) / params.g_tar_us
        })
        .collect())
}

#[derive(Clone, Debug)]
enum Kernel {
    /// Bipolar codebook, popcount similarity; `sigma` may be 0.
    Bipolar { codebook: Codebook, sigma: f64 },
    /// Drifted PCM weights, normalized by `G_tar`.
    Analog { read_sigma: f64 },
}

/// A codebook prepared for repeated (noisy) MVMs in both directions.
#[derive(Clone, Debug)]
pub struct Crossbar {
    rows: usize,
    cols: usize,
    /// Row-major `M x D` weights.
    weights: Vec<f32>,
    kernel: Kernel,
}

impl Crossbar {
    pub fn exact(cb: &Codebook) -> Self {
        Self::additive(cb, 0.0)
    }

    pub fn additive(cb: &Codebook, sigma: f64) -> Self {
        Self {
            rows: cb.len(),
            cols: cb.dim(),
            weights: cb.to_dense_f32(),
            kernel: Kernel::Bipolar {
                codebook: cb.clone(),
                sigma,
            },
        }
    }

    /// Freezes a programmed array at read time `t`.
    pub fn pcm(arr: &ProgrammedArray, params: &PcmParams, t: f64) -> Result<Self> {
        let weights = drifted_weights(arr, params, t)?
            .into_iter()
            .map(|w| w as f32)
            .collect();
        Ok(Self {
            rows: arr.rows,
            cols: arr.cols,
            weights,
            kernel: Kernel::Analog {
                read_sigma: params.sigma_r_us / params.g_tar_us,
            },
        })
    }

    /// Builds the crossbar for `backend`, programming PCM devices from `rng`.
    pub fn new<R: Rng + ?Sized>(cb: &Codebook, backend: &NoiseBackend, rng: &mut R) -> Result<Self> {
        backend.validate()?;
        match *backend {
            NoiseBackend::Exact => Ok(Self::exact(cb)),
            NoiseBackend::AdditiveGaussian { sigma } => Ok(Self::additive(cb, sigma)),
            NoiseBackend::Pcm {
                params,
                read_time_s,
                ..
            } => Self::pcm(&program_array(cb, &params, rng), &params, read_time_s),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    /// Noisy similarity search.
    pub fn mvm<R: Rng + ?Sized>(&self, x: &Hypervector, rng: &mut R) -> Result<SimilarityVector> {
        check_dim(self.cols, x.dim())?;
        let mut scratch = vec![0.0f32; self.cols];
        let mut out = vec![0.0; self.rows];
        self.mvm_into(x, &mut scratch, &mut out, rng);
        Ok(out.into())
    }

    /// Noisy projection, `Σ_i w[i] · row_i` plus noise.
    pub fn transposed_mvm<R: Rng + ?Sized>(&self, w: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        check_dim(self.rows, w.len())?;
        let mut out = vec![0.0; self.cols];
        self.transposed_mvm_into(w, &mut out, rng);
        Ok(out)
    }

    pub(crate) fn mvm_into<R: Rng + ?Sized>(
        &self,
        x: &Hypervector,
        scratch: &mut [f32],
        out: &mut [f64],
        rng: &mut R,
    ) {
        let d = self.cols as f64;
        match &self.kernel {
            Kernel::Bipolar { codebook, sigma } => {
                for (o, v) in out.iter_mut().zip(codebook.vectors()) {
                    *o = v.dot_unchecked(x) as f64 / d;
                }
                add_noise(out, *sigma, rng);
            }
            Kernel::Analog { read_sigma } => {
                x.write_f32(scratch);
                for (o, row) in out.iter_mut().zip(self.weights.chunks_exact(self.cols)) {
                    *o = dot_f32(row, scratch) as f64 / d;
                }
                add_noise(out, read_sigma / d.sqrt(), rng);
            }
        }
    }

    pub(crate) fn transposed_mvm_into<R: Rng + ?Sized>(
        &self,
        w: &[f64],
        out: &mut [f64],
        rng: &mut R,
    ) {
        out.fill(0.0);
        for (&wi, row) in w.iter().zip(self.weights.chunks_exact(self.cols)) {
            if wi == 0.0 {
                continue;
            }
            let out = &mut out[..row.len()];
            for j in 0..row.len() {
                out[j] += wi * f64::from(row[j]);
            }
        }
        match &self.kernel {
            Kernel::Bipolar { sigma, .. } => add_noise(out, *sigma, rng),
            Kernel::Analog { read_sigma } => {
                let energy: f64 = w.iter().map(|v| v * v).sum();
                add_noise(out, read_sigma * energy.sqrt(), rng);
            }
        }
    }
}

fn add_noise<R: Rng + ?Sized>(out: &mut [f64], sigma: f64, rng: &mut R) {
    if sigma > 0.0 {
        for o in out.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *o += sigma * z;
        }
    }
}

/// Dot product with four independent partial sums of four lanes each.
///
/// The AVX and SSE paths assign elements to the same partial sums and reduce
/// them in the same order, so both produce bit-identical results.
#[cfg(target_arch = "x86_64")]
fn dot_f32(a: &[f32], b: &[f32]) -> f32 {
    let n = a.len().min(b.len());
    let split = n - n % 16;
    let lanes = if std::is_x86_feature_detected!("avx") {
        // SAFETY: the required feature was detected at runtime.
        unsafe { partial_sums_avx(&a[..split], &b[..split]) }
    } else {
        // SAFETY: SSE2 is part of the x86_64 baseline.
        unsafe { partial_sums_sse(&a[..split], &b[..split]) }
    };
    let mut s = (lanes[0] + lanes[2]) + (lanes[1] + lanes[3]);
    for (x, y) in a[split..n].iter().zip(&b[split..n]) {
        s += x * y;
    }
    s
}

// SAFETY contract for both kernels: `a` and `b` have equal length, a
// multiple of 16, so every 4- or 8-float load is in bounds.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "sse2")]
unsafe fn partial_sums_sse(a: &[f32], b: &[f32]) -> [f32; 4] {
    use std::arch::x86_64::*;
    let (pa, pb) = (a.as_ptr(), b.as_ptr());
    let (mut s0, mut s1, mut s2, mut s3) =
        (_mm_setzero_ps(), _mm_setzero_ps(), _mm_setzero_ps(), _mm_setzero_ps());
    let mut i = 0;
    while i < a.len() {
        s0 = _mm_add_ps(s0, _mm_mul_ps(_mm_loadu_ps(pa.add(i)), _mm_loadu_ps(pb.add(i))));
        s1 = _mm_add_ps(s1, _mm_mul_ps(_mm_loadu_ps(pa.add(i + 4)), _mm_loadu_ps(pb.add(i + 4))));
        s2 = _mm_add_ps(s2, _mm_mul_ps(_mm_loadu_ps(pa.add(i + 8)), _mm_loadu_ps(pb.add(i + 8))));
        s3 = _mm_add_ps(s3, _mm_mul_ps(_mm_loadu_ps(pa.add(i + 12)), _mm_loadu_ps(pb.add(i + 12))));
        i += 16;
    }
    let mut out = [0.0f32; 4];
    _mm_storeu_ps(out.as_mut_ptr(), _mm_add_ps(_mm_add_ps(s0, s1), _mm_add_ps(s2, s3)));
    out
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx")]
unsafe fn partial_sums_avx(a: &[f32], b: &[f32]) -> [f32; 4] {
    use std::arch::x86_64::*;
    let (pa, pb) = (a.as_ptr(), b.as_ptr());
    // lo holds partial sums 0 and 1, hi holds 2 and 3.
    let (mut lo, mut hi) = (_mm256_setzero_ps(), _mm256_setzero_ps());
    let mut i = 0;
    while i < a.len() {
        lo = _mm256_add_ps(lo, _mm256_mul_ps(_mm256_loadu_ps(pa.add(i)), _mm256_loadu_ps(pb.add(i))));
        hi = _mm256_add_ps(
            hi,
            _mm256_mul_ps(_mm256_loadu_ps(pa.add(i + 8)), _mm256_loadu_ps(pb.add(i + 8))),
        );
        i += 16;
    }
    let s01 = _mm_add_ps(_mm256_castps256_ps128(lo), _mm256_extractf128_ps::<1>(lo));
    let s23 = _mm_add_ps(_mm256_castps256_ps128(hi), _mm256_extractf128_ps::<1>(hi));
    let mut out = [0.0f32; 4];
    _mm_storeu_ps(out.as_mut_ptr(), _mm_add_ps(s01, s23));
    out
}

#[cfg(not(target_arch = "x86_64"))]
fn dot_f32(a: &[f32], b: &[f32]) -> f32 {
    let n = a.len().min(b.len());
    let split = n - n % 16;
    let mut acc = [[0.0f32; 4]; 4];
    for (x, y) in a[..split].chunks_exact(16).zip(b[..split].chunks_exact(16)) {
        for (g, lanes) in acc.iter_mut().enumerate() {
            for l in 0..4 {
                lanes[l] += x[4 * g + l] * y[4 * g + l];
            }
        }
    }
    let lanes: [f32; 4] = std::array::from_fn(|l| (acc[0][l] + acc[1][l]) + (acc[2][l] + acc[3][l]));
    let mut s = (lanes[0] + lanes[2]) + (lanes[1] + lanes[3]);
    for (x, y) in a[split..n].iter().zip(&b[split..n]) {
        s += x * y;
    }
    s
}

/// Noisy similarity search through a prepared crossbar.
pub fn noisy_mvm<R: Rng + ?Sized>(
    xbar: &Crossbar,
    x: &Hypervector,
    rng: &mut R,
) -> Result<SimilarityVector> {
    xbar.mvm(x, rng)
}

/// Noisy projection through a prepared crossbar.
pub fn noisy_transposed_mvm<R: Rng + ?Sized>(
    xbar: &Crossbar,
    w: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    xbar.transposed_mvm(w, rng)
}

/// The arrays serving one factor: similarity search and projection.
#[derive(Clone, Debug)]
pub struct FactorMemory {
    pub forward: Arc<Crossbar>,
    pub backward: Arc<Crossbar>,
}

impl FactorMemory {
    /// With PCM and `shared_array = false` the projection array is programmed
    /// independently of the similarity array.
    pub fn new<R: Rng + ?Sized>(cb: &Codebook, backend: &NoiseBackend, rng: &mut R) -> Result<Self> {
        let forward = Arc::new(Crossbar::new(cb, backend, rng)?);
        let backward = match backend {
            NoiseBackend::Pcm {
                shared_array: false,
                ..
            } => Arc::new(Crossbar::new(cb, backend, rng)?),
            _ => Arc::clone(&forward),
        };
        Ok(Self { forward, backward })
    }
}
