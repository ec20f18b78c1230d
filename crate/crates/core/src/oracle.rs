//! Ground truth for the factorizer: query synthesis and exhaustive search.

use std::collections::HashSet;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::factorizer::CodebookSet;
use crate::vsa::{random_codebook, Hypervector};

/// Default cap on `M^F` for [`brute_force`].
pub const BRUTE_FORCE_LIMIT: u128 = 1 << 24;

/// Products are checked for collisions when the set has at most this many combinations.
const COLLISION_CHECK_LIMIT: u128 = 1 << 16;

#[derive(Clone, Debug, PartialEq)]
pub struct QueryInstance {
    pub product: Hypervector,
    pub truth: Vec<usize>,
    pub codebook_seeds: Vec<Option<u64>>,
    /// Fraction of sign-flipped elements; 0 for exact products.
    pub corruption: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BruteForceResult {
    pub indices: Vec<usize>,
    pub similarity: f64,
    /// Dot products evaluated, `M^F`.
    pub op_count: u64,
}

/// Bound product of the `truth` codevectors with `round(corruption · D)`
/// distinct, uniformly chosen elements sign-flipped.
pub fn make_query<R: Rng + ?Sized>(
    set: &CodebookSet,
    truth: &[usize],
    corruption: f64,
    rng: &mut R,
) -> Result<QueryInstance> {
    if !(0.0..=0.5).contains(&corruption) {
        return Err(Error::invalid(format!(
            "corruption must lie in [0, 0.5], got {corruption}"
        )));
    }
    let mut product = set.bind_indices(truth)?;
    let d = product.dim();
    let flips = (corruption * d as f64).round() as usize;
    for i in sample(rng, d, flips) {
        product.flip(i);
    }
    Ok(QueryInstance {
        product,
        truth: truth.to_vec(),
        codebook_seeds: set.codebooks().iter().map(|cb| cb.seed()).collect(),
        corruption,
    })
}

/// Uniform truth indices, one per codebook.
pub fn random_truth<R: Rng + ?Sized>(set: &CodebookSet, rng: &mut R) -> Vec<usize> {
    set.codebooks()
        .iter()
        .map(|cb| rng.random_range(0..cb.len()))
        .collect()
}

/// Independent random codebooks with sizes `sizes`. Codebook `f` uses seed
/// `seed + f`; a codebook with repeated codevectors (or, for small sets, a
/// collision between two bound products) is regenerated under the next
/// unused seed.
pub fn random_codebook_set(sizes: &[usize], d: usize, seed: u64) -> Result<CodebookSet> {
    let f = sizes.len() as u64;
    let mut attempt = 0u64;
    loop {
        let base = seed.wrapping_add(attempt.wrapping_mul(f));
        let codebooks = sizes
            .iter()
            .enumerate()
            .map(|(i, &m)| random_codebook(m, d, base.wrapping_add(i as u64)))
            .collect::<Result<Vec<_>>>()?;
        let set = CodebookSet::independent(codebooks)?;
        if !has_collisions(&set) {
            return Ok(set);
        }
        attempt += 1;
        if attempt > 64 {
            return Err(Error::invalid(format!(
                "could not draw distinct codevectors for sizes {sizes:?} at D={d}"
            )));
        }
    }
}

fn has_collisions(set: &CodebookSet) -> bool {
    if set.codebooks().iter().any(|cb| cb.has_duplicates()) {
        return true;
    }
    if set.combinations() > COLLISION_CHECK_LIMIT {
        return false;
    }
    let mut seen = HashSet::new();
    for_each_combination(&set.sizes(), |idx| {
        seen.insert(set.bind_indices(idx).expect("indices in range"))
    })
}

/// Calls `visit` on every index tuple in lexicographic order until it returns false.
/// Returns true if iteration stopped early.
fn for_each_combination(sizes: &[usize], mut visit: impl FnMut(&[usize]) -> bool) -> bool {
    let mut idx = vec![0usize; sizes.len()];
    loop {
        if !visit(&idx) {
            return true;
        }
        let mut f = sizes.len();
        loop {
            if f == 0 {
                return false;
            }
            f -= 1;
            idx[f] += 1;
            if idx[f] < sizes[f] {
                break;
            }
            idx[f] = 0;
        }
    }
}

/// Exhaustive factorization under the default [`BRUTE_FORCE_LIMIT`].
pub fn brute_force(p: &Hypervector, set: &CodebookSet) -> Result<BruteForceResult> {
    brute_force_with_limit(p, set, BRUTE_FORCE_LIMIT)
}

/// Exhaustive factorization: the combination whose bound product is most
/// similar to `p`, lowest lexicographic index on ties.
pub fn brute_force_with_limit(p: &Hypervector, set: &CodebookSet, limit: u128) -> Result<BruteForceResult> {
    check_dim(set.dim(), p.dim())?;
    let combos = set.combinations();
    if combos > limit {
        return Err(Error::Budget(format!(
            "brute force over {combos} combinations exceeds the limit of {limit}"
        )));
    }
    let sizes = set.sizes();
    let last = set.factors() - 1;
    let (head_sizes, last_cb) = (&sizes[..last], set.get(last));

    // Parallel over the first factor; within a chunk, walk the remaining
    // prefixes and scan the last codebook against `p ⊙ prefix`.
    let best = (0..sizes[0])
        .into_par_iter()
        .map(|first| {
            let mut best: Option<(i64, Vec<usize>)> = None;
            let mut prefix_sizes = head_sizes.to_vec();
            prefix_sizes[0] = 1;
            for_each_combination(&prefix_sizes, |rest| {
                let mut head: Vec<usize> = rest.to_vec();
                head[0] = first;
                let mut target = p.clone();
                for (f, &i) in head.iter().enumerate() {
                    target.bind_assign(&set.get(f).vectors()[i]);
                }
                for (i, v) in last_cb.vectors().iter().enumerate() {
                    let dot = v.dot_unchecked(&target);
                    if best.as_ref().is_none_or(|(b, _)| dot > *b) {
                        let mut idx = head.clone();
                        idx.push(i);
                        best = Some((dot, idx));
                    }
                }
                true
            });
            best.expect("codebooks are non-empty")
        })
        .reduce_with(|a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a })
        .expect("codebooks are non-empty");

    Ok(BruteForceResult {
        indices: best.1,
        similarity: best.0 as f64 / p.dim() as f64,
        op_count: u64::try_from(combos).unwrap_or(u64::MAX),
    })
}
