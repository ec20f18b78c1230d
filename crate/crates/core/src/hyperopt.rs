//! Bayesian optimization of the activation threshold, the convergence ratio
//! and, for software simulation, an additive noise level.
//!
//! The surrogate is a Gaussian process with an anisotropic RBF kernel over
//! box-normalized inputs, fitted to standardized error rates; candidates are
//! chosen by expected improvement over random box samples.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorizer::max_iterations;
use crate::harness::{
    run_trials, ActivationKind, ActivationSection, ConvergenceSection, ExperimentConfig, Problem, RunSection,
    Sizes,
};
use crate::noise::NoiseBackend;
use crate::normal;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperPoint {
    pub t: f64,
    pub convergence_ratio: f64,
    /// Additive output noise in normalized similarity units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_out: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub t: (f64, f64),
    pub convergence_ratio: (f64, f64),
    /// Present when the noise level is tuned as well.
    pub sigma_out: Option<(f64, f64)>,
}

impl Bounds {
    /// `T ∈ [0, 4/√D]`, ratio `∈ [0.1, 0.9]`, `σ ∈ [0, 8/√D]`.
    pub fn default_for(d: usize, tune_noise: bool) -> Self {
        let s = (d as f64).sqrt();
        Self {
            t: (0.0, 4.0 / s),
            convergence_ratio: (0.1, 0.9),
            sigma_out: tune_noise.then_some((0.0, 8.0 / s)),
        }
    }

    pub fn dims(&self) -> usize {
        2 + self.sigma_out.is_some() as usize
    }

    fn ranges(&self) -> Vec<(f64, f64)> {
        let mut r = vec![self.t, self.convergence_ratio];
        r.extend(self.sigma_out);
        r
    }

    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in self.ranges() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!("bad box bound [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, h: &HyperPoint) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        inside(h.t, self.t)
            && inside(h.convergence_ratio, self.convergence_ratio)
            && match (h.sigma_out, self.sigma_out) {
                (Some(s), Some(b)) => inside(s, b),
                (None, None) => true,
                _ => false,
            }
    }

    pub fn to_unit(&self, h: &HyperPoint) -> Vec<f64> {
        let mut v = vec![h.t, h.convergence_ratio];
        v.extend(h.sigma_out);
        v.iter()
            .zip(self.ranges())
            .map(|(x, (lo, hi))| (x - lo) / (hi - lo))
            .collect()
    }

    pub fn from_unit(&self, u: &[f64]) -> HyperPoint {
        let x: Vec<f64> = u
            .iter()
            .zip(self.ranges())
            .map(|(u, (lo, hi))| (lo + u.clamp(0.0, 1.0) * (hi - lo)).clamp(lo, hi))
            .collect();
        HyperPoint { t: x[0], convergence_ratio: x[1], sigma_out: x.get(2).copied() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub point: HyperPoint,
    /// Fraction of wrongly factorized queries, non-converged included.
    pub error_rate: f64,
    pub trials: usize,
    pub n_used: usize,
}

/// A reduced evaluation protocol for tuning: fixed codebooks, `trials`
/// random queries, iteration cap `n_prime`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningProblem {
    pub d: usize,
    pub m: usize,
    pub f: usize,
    /// Used when the evaluated point carries no `sigma_out`.
    pub backend: NoiseBackend,
    pub trials: usize,
    pub n_prime: usize,
    pub codebook_seed: u64,
}

impl TuningProblem {
    /// 256 trials with a cap of one tenth of the brute-force iteration bound.
    pub fn new(d: usize, m: usize, f: usize, backend: NoiseBackend) -> Result<Self> {
        let n = if m == 1 { 0 } else { max_iterations(m, f)? };
        Ok(Self {
            d,
            m,
            f,
            backend,
            trials: 256,
            n_prime: usize::try_from(n / 10).unwrap_or(usize::MAX).max(1),
            codebook_seed: 0,
        })
    }

    fn experiment(&self, h: &HyperPoint, master_seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            problem: Problem { d: self.d, m: Sizes::Shared(self.m), f: self.f },
            activation: ActivationSection { kind: ActivationKind::Threshold, k: None, t: Some(h.t) },
            convergence: ConvergenceSection { policy: Default::default(), ratio: h.convergence_ratio },
            noise: match h.sigma_out {
                Some(sigma) => NoiseBackend::AdditiveGaussian { sigma },
                None => self.backend,
            },
            run: RunSection {
                trials: self.trials,
                n_max: Some(self.n_prime),
                master_seed,
                codebook_seed: Some(self.codebook_seed),
                update_policy: Default::default(),
                multiplex: false,
                corruption: 0.0,
                reprogram_per_trial: false,
                shared_queries: true,
            },
            sweep: None,
            output: None,
        }
    }
}

/// Error rate of `h` on `problem`; the query seed is drawn from `rng`.
pub fn evaluate<R: Rng + ?Sized>(h: &HyperPoint, problem: &TuningProblem, rng: &mut R) -> Result<Observation> {
    if problem.trials == 0 {
        return Err(Error::invalid("evaluation needs at least one trial"));
    }
    let cfg = problem.experiment(h, rng.random());
    cfg.validate()?;
    let summary = run_trials(&cfg)?;
    Ok(Observation {
        point: *h,
        error_rate: 1.0 - summary.accuracy,
        trials: summary.trials,
        n_used: problem.n_prime,
    })
}

const LENGTH_GRID: [f64; 6] = [0.05, 0.1, 0.2, 0.4, 0.8, 1.6];
const NOISE_GRID: [f64; 6] = [1e-6, 1e-4, 1e-3, 1e-2, 0.1, 0.3];
const JITTER: f64 = 1e-8;
const MAX_JITTER: f64 = 1e-2;

/// Gaussian-process posterior on unit-box inputs.
#[derive(Clone, Debug)]
pub struct GaussianProcess {
    x: Vec<Vec<f64>>,
    y_mean: f64,
    y_scale: f64,
    length_scales: Vec<f64>,
    noise_var: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

fn kernel(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    let r2: f64 = a.iter().zip(b).zip(ls).map(|((a, b), l)| ((a - b) / l).powi(2)).sum();
    (-0.5 * r2).exp()
}

fn gram(x: &[Vec<f64>], ls: &[f64], diag: f64) -> DMatrix<f64> {
    let n = x.len();
    DMatrix::from_fn(n, n, |i, j| kernel(&x[i], &x[j], ls) + if i == j { diag } else { 0.0 })
}

/// Cholesky factor of the Gram matrix, escalating the jitter tenfold on failure.
fn factor(x: &[Vec<f64>], ls: &[f64], noise_var: f64) -> Result<Cholesky<f64, Dyn>> {
    let mut jitter = JITTER;
    while jitter <= MAX_JITTER {
        if let Some(c) = gram(x, ls, noise_var + jitter).cholesky() {
            return Ok(c);
        }
        jitter *= 10.0;
    }
    Err(Error::Numerical("kernel matrix is not positive definite".into()))
}

fn log_marginal_likelihood(chol: &Cholesky<f64, Dyn>, y: &DVector<f64>) -> f64 {
    let alpha = chol.solve(y);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * y.len() as f64 * (2.0 * std::f64::consts::PI).ln()
}

fn length_grid(dims: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![]];
    for _ in 0..dims {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                LENGTH_GRID.iter().map(move |&l| {
                    let mut v = prefix.clone();
                    v.push(l);
                    v
                })
            })
            .collect();
    }
    out
}

impl GaussianProcess {
    /// Fits to points in the unit box. Length scales and the noise variance
    /// maximize the marginal likelihood over a log grid.
    pub fn fit_unit(x: Vec<Vec<f64>>, y: &[f64]) -> Result<Self> {
        if x.len() < 2 || x.len() != y.len() {
            return Err(Error::invalid(format!(
                "gp fit needs >= 2 paired observations, got {} inputs and {} targets",
                x.len(),
                y.len()
            )));
        }
        let dims = x[0].len();
        if dims == 0 || x.iter().any(|p| p.len() != dims) {
            return Err(Error::invalid("gp inputs must share a positive dimension"));
        }
        if y.iter().chain(x.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite gp input".into()));
        }
        let n = y.len() as f64;
        let y_mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n;
        let y_scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        let ys = DVector::from_iterator(y.len(), y.iter().map(|v| (v - y_mean) / y_scale));

        let mut best: Option<(f64, Vec<f64>, f64, Cholesky<f64, Dyn>)> = None;
        for ls in length_grid(dims) {
            for &noise in &NOISE_GRID {
                let Ok(chol) = factor(&x, &ls, noise) else { continue };
                let lml = log_marginal_likelihood(&chol, &ys);
                if best.as_ref().is_none_or(|b| lml > b.0) {
                    best = Some((lml, ls.clone(), noise, chol));
                }
            }
        }
        let (_, length_scales, noise_var, chol) =
            best.ok_or_else(|| Error::Numerical("no kernel setting gave a positive definite matrix".into()))?;
        let alpha = chol.solve(&ys);
        Ok(Self { x, y_mean, y_scale, length_scales, noise_var, chol, alpha })
    }

    /// Posterior mean and standard deviation of the latent function.
    pub fn predict_unit(&self, u: &[f64]) -> (f64, f64) {
        let k = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| kernel(xi, u, &self.length_scales)));
        let mean = k.dot(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&k).expect("cholesky factor is invertible");
        let var = (1.0 - v.norm_squared()).max(0.0);
        (self.y_mean + self.y_scale * mean, self.y_scale * var.sqrt())
    }

    pub fn length_scales(&self) -> &[f64] {
        &self.length_scales
    }

    /// Fitted observation noise variance, in standardized units.
    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }
}

/// Surrogate for the error rate over a hyperparameter box.
#[derive(Clone, Debug)]
pub struct Surrogate {
    bounds: Bounds,
    gp: GaussianProcess,
}

impl Surrogate {
    pub fn predict(&self, h: &HyperPoint) -> (f64, f64) {
        self.gp.predict_unit(&self.bounds.to_unit(h))
    }

    pub fn gp(&self) -> &GaussianProcess {
        &self.gp
    }
}

pub fn gp_fit(obs: &[Observation], bounds: &Bounds) -> Result<Surrogate> {
    bounds.validate()?;
    let x = obs.iter().map(|o| bounds.to_unit(&o.point)).collect();
    let y: Vec<f64> = obs.iter().map(|o| o.error_rate).collect();
    Ok(Surrogate { bounds: *bounds, gp: GaussianProcess::fit_unit(x, &y)? })
}

/// Expected improvement below `best` of a normal posterior `N(mean, std²)`.
pub fn expected_improvement_from(mean: f64, std: f64, best: f64) -> f64 {
    let gain = best - mean;
    if std <= 0.0 {
        return gain.max(0.0);
    }
    let z = gain / std;
    (gain * normal::cdf(z) + std * normal::pdf(z)).max(0.0)
}

pub fn expected_improvement(surrogate: &Surrogate, candidate: &HyperPoint, best: f64) -> f64 {
    let (mean, std) = surrogate.predict(candidate);
    expected_improvement_from(mean, std, best)
}

pub const INITIAL_DESIGN: usize = 8;
pub const EI_CANDIDATES: usize = 1024;
pub const AVERAGED_BEST: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    /// Field-wise average of the best observations.
    pub best: HyperPoint,
    pub observations: Vec<Observation>,
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let (mut out, mut f) = (0.0, 1.0 / base as f64);
    while i > 0 {
        out += f * (i % base) as f64;
        i /= base;
        f /= base as f64;
    }
    out
}

/// Halton points 1..=n in `dims` dimensions.
pub fn halton(n: usize, dims: usize) -> Vec<Vec<f64>> {
    const PRIMES: [u64; 6] = [2, 3, 5, 7, 11, 13];
    assert!(dims <= PRIMES.len(), "at most {} Halton dimensions", PRIMES.len());
    (1..=n as u64)
        .map(|i| PRIMES[..dims].iter().map(|&b| radical_inverse(i, b)).collect())
        .collect()
}

/// The optimization loop against any objective.
pub fn optimize_with<R, F>(bounds: &Bounds, budget: usize, rng: &mut R, mut objective: F) -> Result<TuningResult>
where
    R: Rng + ?Sized,
    F: FnMut(&HyperPoint, &mut R) -> Result<Observation>,
{
    bounds.validate()?;
    if budget < 10 {
        return Err(Error::invalid(format!("tuning budget must be at least 10, got {budget}")));
    }
    let dims = bounds.dims();
    let mut observations = Vec::with_capacity(budget);
    for u in halton(INITIAL_DESIGN, dims) {
        observations.push(objective(&bounds.from_unit(&u), rng)?);
    }
    while observations.len() < budget {
        let surrogate = gp_fit(&observations, bounds)?;
        let best = observations.iter().map(|o| o.error_rate).fold(f64::INFINITY, f64::min);
        let mut pick: Option<(f64, HyperPoint)> = None;
        for _ in 0..EI_CANDIDATES {
            let u: Vec<f64> = (0..dims).map(|_| rng.random::<f64>()).collect();
            let h = bounds.from_unit(&u);
            let ei = expected_improvement(&surrogate, &h, best);
            if pick.is_none_or(|(e, _)| ei > e) {
                pick = Some((ei, h));
            }
        }
        let (_, h) = pick.expect("candidate set is non-empty");
        observations.push(objective(&h, rng)?);
    }

    let mut order: Vec<usize> = (0..observations.len()).collect();
    order.sort_by(|&a, &b| observations[a].error_rate.total_cmp(&observations[b].error_rate));
    let top = &order[..AVERAGED_BEST];
    let avg = |f: &dyn Fn(&HyperPoint) -> f64| top.iter().map(|&i| f(&observations[i].point)).sum::<f64>() / top.len() as f64;
    let best = HyperPoint {
        t: avg(&|h| h.t),
        convergence_ratio: avg(&|h| h.convergence_ratio),
        sigma_out: bounds.sigma_out.map(|_| avg(&|h| h.sigma_out.unwrap_or(0.0))),
    };
    Ok(TuningResult { best, observations })
}

/// Tunes `problem` within `bounds` using `budget` evaluations.
pub fn optimize<R: Rng + ?Sized>(
    problem: &TuningProblem,
    bounds: &Bounds,
    budget: usize,
    rng: &mut R,
) -> Result<TuningResult> {
    optimize_with(bounds, budget, rng, |h, rng| evaluate(h, problem, rng))
}
