//! The iterative resonator search.
//!
//! Each sweep updates the factors in ascending order. For factor `f` it
//! unbinds the latest estimates of the other factors from the product,
//! computes similarities against codebook `f`, sparsifies them with the
//! activation and projects back onto the codebook. The bipolarized
//! projection is the new estimate. Both MVMs go through the configured noise
//! backend.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::activation::ActivationSpec;
use crate::error::{check_dim, Error, Result};
use crate::noise::{FactorMemory, NoiseBackend};
use crate::vsa::{bipolarize, bundle, circular_shift, Codebook, Hypervector, SimilarityVector};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdatePolicy {
    /// Factor `f` sees the estimates already updated in this sweep.
    #[default]
    Sequential,
    /// All factors unbind with the estimates from the start of the sweep.
    Parallel,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergencePolicy {
    /// Every factor has a similarity above the convergence threshold.
    #[default]
    Threshold,
    /// At least one factor has a similarity above the convergence threshold.
    AnyFactor,
    /// No estimate changed during the last sweep.
    FixedPoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizerConfig {
    pub activation: ActivationSpec,
    /// Convergence threshold as a fraction of `D` (normalized similarity).
    pub convergence_ratio: f64,
    #[serde(default)]
    pub convergence_policy: ConvergencePolicy,
    pub backend: NoiseBackend,
    pub max_iterations: usize,
    #[serde(default)]
    pub update_policy: UpdatePolicy,
    /// One physical array shared by all factors through circular shifts.
    #[serde(default)]
    pub multiplex: bool,
}

impl FactorizerConfig {
    pub fn validate(&self) -> Result<()> {
        self.activation.validate()?;
        self.backend.validate()?;
        if !(0.0..=1.0).contains(&self.convergence_ratio) {
            return Err(Error::invalid(format!(
                "convergence ratio must lie in [0, 1], got {}",
                self.convergence_ratio
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("iteration cap must be at least 1"));
        }
        Ok(())
    }
}

/// Largest `N` with `N < M^(F-1) / F`, i.e. `N · M · F < M^F`.
pub fn max_iterations(m: usize, f: usize) -> Result<u64> {
    if m < 2 || f < 2 {
        return Err(Error::invalid(format!(
            "iteration bound needs M >= 2 and F >= 2, got M={m}, F={f}"
        )));
    }
    let pow = (m as u128)
        .checked_pow(f as u32 - 1)
        .filter(|p| *p <= u64::MAX as u128)
        .ok_or_else(|| Error::invalid(format!("M^(F-1) overflows for M={m}, F={f}")))?;
    Ok(((pow - 1) / f as u128) as u64)
}

/// `N · ΣM_f < ΠM_f`: the search never spends as many dot products as brute force.
pub fn within_search_budget(n: u64, sizes: &[usize]) -> bool {
    let per_iter: u128 = sizes.iter().map(|&m| m as u128).sum();
    let brute = sizes
        .iter()
        .try_fold(1u128, |acc, &m| acc.checked_mul(m as u128));
    match (brute, (n as u128).checked_mul(per_iter)) {
        (Some(b), Some(search)) => search < b,
        (None, Some(_)) => true,
        _ => false,
    }
}

/// Circular shift applied to factor `f` (0-based) when multiplexing one array.
pub fn shift_for_factor(f: usize) -> i64 {
    f as i64
}

/// The codebooks of all factors. A multiplexed set derives every factor's
/// codebook from one base array: factor `f` uses the base rotated by
/// `-shift_for_factor(f)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CodebookSet {
    codebooks: Vec<Codebook>,
    multiplexed: bool,
}

impl CodebookSet {
    pub fn independent(codebooks: Vec<Codebook>) -> Result<Self> {
        let first = codebooks
            .first()
            .ok_or_else(|| Error::invalid("need at least one codebook"))?;
        let d = first.dim();
        for cb in &codebooks {
            check_dim(d, cb.dim())?;
        }
        let codebooks = codebooks
            .into_iter()
            .enumerate()
            .map(|(f, cb)| cb.with_label(f))
            .collect();
        Ok(Self {
            codebooks,
            multiplexed: false,
        })
    }

    pub fn multiplexed(base: Codebook, factors: usize) -> Result<Self> {
        if factors == 0 {
            return Err(Error::invalid("need at least one factor"));
        }
        let codebooks = (0..factors)
            .map(|f| base.rotated(-shift_for_factor(f)).with_label(f))
            .collect();
        Ok(Self {
            codebooks,
            multiplexed: true,
        })
    }

    pub fn factors(&self) -> usize {
        self.codebooks.len()
    }

    pub fn dim(&self) -> usize {
        self.codebooks[0].dim()
    }

    pub fn codebooks(&self) -> &[Codebook] {
        &self.codebooks
    }

    pub fn get(&self, f: usize) -> &Codebook {
        &self.codebooks[f]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.codebooks.iter().map(Codebook::len).collect()
    }

    pub fn is_multiplexed(&self) -> bool {
        self.multiplexed
    }

    /// Number of combinations, `ΠM_f`, saturating.
    pub fn combinations(&self) -> u128 {
        self.codebooks
            .iter()
            .fold(1u128, |acc, cb| acc.saturating_mul(cb.len() as u128))
    }

    /// Bound product of the indexed codevectors.
    pub fn bind_indices(&self, indices: &[usize]) -> Result<Hypervector> {
        if indices.len() != self.factors() {
            return Err(Error::invalid(format!(
                "expected {} indices, got {}",
                self.factors(),
                indices.len()
            )));
        }
        let mut out = Hypervector::ones(self.dim());
        for (f, &i) in indices.iter().enumerate() {
            let v = self.codebooks[f].get(i).ok_or_else(|| {
                Error::invalid(format!(
                    "index {i} out of range for factor {f} (M={})",
                    self.codebooks[f].len()
                ))
            })?;
            out.bind_assign(v);
        }
        Ok(out)
    }
}

/// Superposition of each codebook: every codevector starts with an equal chance.
pub fn init_estimates<R: Rng + ?Sized>(codebooks: &[Codebook], rng: &mut R) -> Result<Vec<Hypervector>> {
    if codebooks.len() < 2 {
        return Err(Error::invalid(format!(
            "factorization needs F >= 2, got {}",
            codebooks.len()
        )));
    }
    codebooks
        .iter()
        .map(|cb| bundle(&cb.vectors().iter().collect::<Vec<_>>(), rng))
        .collect()
}

/// `p` with every estimate except factor `f` unbound.
pub fn unbind_estimate(p: &Hypervector, estimates: &[Hypervector], f: usize) -> Result<Hypervector> {
    let mut out = p.clone();
    for (g, e) in estimates.iter().enumerate() {
        if g != f {
            check_dim(out.dim(), e.dim())?;
            out.bind_assign(e);
        }
    }
    Ok(out)
}

/// Smallest `l` in `2..=l_max` such that the newest entry of `history`
/// reappears `l` steps back with different entries in between.
pub fn detect_limit_cycle<T: PartialEq>(history: &[T], l_max: usize) -> Option<usize> {
    let n = history.len();
    let last = history.last()?;
    for l in 2..=l_max.min(n.saturating_sub(1)) {
        if history[n - 1 - l] == *last && (1..l).all(|k| history[n - 1 - k] != *last) {
            return Some(l);
        }
    }
    None
}

#[derive(Clone, Debug)]
pub struct FactorizerState {
    pub estimates: Vec<Hypervector>,
    /// Pre-activation similarities from the latest sweep.
    pub similarities: Vec<SimilarityVector>,
    pub iteration: usize,
    /// D-dimensional dot products consumed so far.
    pub op_count: u64,
    changed: bool,
    scratch: Scratch,
}

#[derive(Clone, Debug)]
struct Scratch {
    x_f32: Vec<f32>,
    projection: Vec<f64>,
    rotated: Vec<f64>,
    activated: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    /// Per iteration, the largest similarity of each factor.
    pub max_similarity: Vec<Vec<f64>>,
    /// Iterations at which the estimate history closed a limit cycle.
    pub cycle_detections: usize,
    /// `(iteration, length)` of the first detected cycle.
    pub first_cycle: Option<(usize, usize)>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct TraceOptions {
    pub max_similarity: bool,
    /// Longest cycle searched for; 0 disables detection.
    pub cycle_window: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizationResult {
    pub converged: bool,
    pub predicted: Vec<usize>,
    pub iterations: usize,
    pub op_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Trace>,
}

/// A configured factorizer with its (possibly programmed) crossbars.
#[derive(Clone, Debug)]
pub struct Factorizer {
    set: CodebookSet,
    config: FactorizerConfig,
    memories: Vec<FactorMemory>,
}

impl Factorizer {
    /// Validates the configuration and prepares the crossbars. PCM arrays are
    /// programmed once here from `programming_rng`.
    pub fn new<R: Rng + ?Sized>(
        set: &CodebookSet,
        config: FactorizerConfig,
        programming_rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if set.factors() < 2 {
            return Err(Error::invalid(format!(
                "factorization needs F >= 2, got {}",
                set.factors()
            )));
        }
        if config.multiplex != set.is_multiplexed() {
            return Err(Error::invalid(
                "multiplex flag does not match the codebook set layout",
            ));
        }
        let sizes = set.sizes();
        let trivial = sizes.iter().all(|&m| m == 1);
        if !trivial && !within_search_budget(config.max_iterations as u64, &sizes) {
            return Err(Error::Budget(format!(
                "iteration cap {} with codebook sizes {:?} reaches the brute-force operation count",
                config.max_iterations, sizes
            )));
        }
        let memories = if set.is_multiplexed() {
            let shared = FactorMemory::new(set.get(0), &config.backend, programming_rng)?;
            vec![shared; set.factors()]
        } else {
            set.codebooks()
                .iter()
                .map(|cb| FactorMemory::new(cb, &config.backend, programming_rng))
                .collect::<Result<_>>()?
        };
        Ok(Self {
            set: set.clone(),
            config,
            memories,
        })
    }

    pub fn config(&self) -> &FactorizerConfig {
        &self.config
    }

    pub fn codebooks(&self) -> &CodebookSet {
        &self.set
    }

    pub fn init_state<R: Rng + ?Sized>(&self, rng: &mut R) -> FactorizerState {
        let estimates = init_estimates(self.set.codebooks(), rng).expect("validated at construction");
        let d = self.set.dim();
        FactorizerState {
            similarities: self
                .set
                .sizes()
                .iter()
                .map(|&m| SimilarityVector::new(vec![0.0; m]))
                .collect(),
            estimates,
            iteration: 0,
            op_count: 0,
            changed: true,
            scratch: Scratch {
                x_f32: vec![0.0; d],
                projection: vec![0.0; d],
                rotated: vec![0.0; d],
                activated: Vec::new(),
            },
        }
    }

    /// One sweep over all factors.
    pub fn step<R: Rng + ?Sized>(&self, state: &mut FactorizerState, p: &Hypervector, rng: &mut R) {
        debug_assert_eq!(p.dim(), self.set.dim());
        let snapshot = match self.config.update_policy {
            UpdatePolicy::Parallel => Some(state.estimates.clone()),
            UpdatePolicy::Sequential => None,
        };
        let mut changed = false;
        for f in 0..self.set.factors() {
            let source = snapshot.as_deref().unwrap_or(&state.estimates);
            let mut unbound = unbind_estimate(p, source, f).expect("dimensions validated");
            let shift = shift_for_factor(f);
            if self.set.is_multiplexed() {
                unbound = circular_shift(&unbound, shift);
            }

            let mem = &self.memories[f];
            let sc = &mut state.scratch;
            let sims = state.similarities[f].as_mut_vec();
            mem.forward.mvm_into(&unbound, &mut sc.x_f32, sims, rng);

            sc.activated.clear();
            sc.activated.extend_from_slice(sims);
            self.config.activation.apply_in_place(&mut sc.activated);
            mem.backward
                .transposed_mvm_into(&sc.activated, &mut sc.projection, rng);

            let projection = if self.set.is_multiplexed() {
                rotate_reals(&sc.projection, -shift, &mut sc.rotated);
                &sc.rotated
            } else {
                &sc.projection
            };
            let estimate = bipolarize(projection, rng);
            if estimate != state.estimates[f] {
                changed = true;
            }
            state.estimates[f] = estimate;
            state.op_count += 2 * self.set.get(f).len() as u64;
        }
        state.changed = changed;
        state.iteration += 1;
    }

    pub fn check_convergence(&self, state: &FactorizerState) -> bool {
        if state.iteration == 0 {
            return false;
        }
        let t = self.config.convergence_ratio;
        match self.config.convergence_policy {
            ConvergencePolicy::Threshold => state.similarities.iter().all(|s| s.max() > t),
            ConvergencePolicy::AnyFactor => state.similarities.iter().any(|s| s.max() > t),
            ConvergencePolicy::FixedPoint => !state.changed,
        }
    }

    pub fn factorize<R: Rng + ?Sized>(&self, p: &Hypervector, rng: &mut R) -> Result<FactorizationResult> {
        self.factorize_traced(p, rng, None)
    }

    pub fn factorize_traced<R: Rng + ?Sized>(
        &self,
        p: &Hypervector,
        rng: &mut R,
        trace_opts: Option<TraceOptions>,
    ) -> Result<FactorizationResult> {
        check_dim(self.set.dim(), p.dim())?;
        let mut state = self.init_state(rng);
        let mut trace = trace_opts.map(|_| Trace::default());
        let window = trace_opts.map_or(0, |o| o.cycle_window);
        let mut history: VecDeque<Vec<Hypervector>> = VecDeque::with_capacity(window + 1);
        let mut converged = false;
        while state.iteration < self.config.max_iterations {
            self.step(&mut state, p, rng);
            if let (Some(tr), Some(opts)) = (trace.as_mut(), trace_opts) {
                if opts.max_similarity {
                    tr.max_similarity
                        .push(state.similarities.iter().map(SimilarityVector::max).collect());
                }
                if window > 0 {
                    if history.len() == window + 1 {
                        history.pop_front();
                    }
                    history.push_back(state.estimates.clone());
                    if let Some(l) = detect_limit_cycle(history.make_contiguous(), window) {
                        tr.cycle_detections += 1;
                        tr.first_cycle.get_or_insert((state.iteration, l));
                    }
                }
            }
            if self.check_convergence(&state) {
                converged = true;
                break;
            }
        }
        Ok(FactorizationResult {
            converged,
            predicted: state
                .similarities
                .iter()
                .map(|s| s.argmax().unwrap_or(0))
                .collect(),
            iterations: state.iteration,
            op_count: state.op_count,
            trace,
        })
    }
}

/// One-shot factorization: prepares the crossbars from `rng`, then searches.
pub fn factorize<R: Rng + ?Sized>(
    p: &Hypervector,
    set: &CodebookSet,
    config: &FactorizerConfig,
    rng: &mut R,
) -> Result<FactorizationResult> {
    Factorizer::new(set, config.clone(), rng)?.factorize(p, rng)
}

/// Real-valued counterpart of [`circular_shift`].
fn rotate_reals(v: &[f64], k: i64, out: &mut [f64]) {
    let d = v.len();
    let k = k.rem_euclid(d as i64) as usize;
    for (i, &x) in v.iter().enumerate() {
        out[(i + k) % d] = x;
    }
}
