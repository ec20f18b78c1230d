//! Fixtures shared by the benchmarks.

use holofactor::oracle::random_codebook_set;
use holofactor::{ActivationSpec, CodebookSet, Factorizer, FactorizerConfig, Hypervector, NoiseBackend};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn codebooks(d: usize, m: usize, f: usize) -> CodebookSet {
    random_codebook_set(&vec![m; f], d, 1).expect("valid sizes")
}

/// A factorizer at the headline threshold with the given backend.
pub fn factorizer(set: &CodebookSet, backend: NoiseBackend, max_iterations: usize) -> Factorizer {
    let m = set.get(0).len();
    let config = FactorizerConfig {
        activation: ActivationSpec::threshold_for_count(8.34f64.min(m as f64 / 2.0), m, set.dim())
            .expect("valid activation count"),
        convergence_ratio: 0.5,
        convergence_policy: Default::default(),
        backend,
        max_iterations,
        update_policy: Default::default(),
        multiplex: false,
    };
    Factorizer::new(set, config, &mut rng(2)).expect("valid factorizer")
}

pub fn query(set: &CodebookSet) -> Hypervector {
    let truth: Vec<usize> = (0..set.factors()).map(|f| f % set.get(f).len()).collect();
    set.bind_indices(&truth).expect("indices in range")
}
