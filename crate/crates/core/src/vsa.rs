//! Bipolar hypervector algebra.
//!
//! Vectors live in `{-1, +1}^D` and are stored bit-packed: a set bit encodes
//! `-1`. Binding is XOR on the packed words and the dot product is
//! `D - 2 * popcount(a ^ b)`. Padding bits past `D` are always zero.

use std::fmt;
use std::ops::Deref;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};

const WORD_BITS: usize = 64;

fn word_count(dim: usize) -> usize {
    dim.div_ceil(WORD_BITS)
}

fn tail_mask(dim: usize) -> u64 {
    match dim % WORD_BITS {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Hypervector {
    dim: usize,
    words: Vec<u64>,
}

impl Hypervector {
    /// The all-`+1` vector, the identity element of binding.
    pub fn ones(dim: usize) -> Self {
        Self {
            dim,
            words: vec![0; word_count(dim)],
        }
    }

    pub fn from_bipolar(values: &[i8]) -> Result<Self> {
        let mut out = Self::ones(values.len());
        for (i, &v) in values.iter().enumerate() {
            match v {
                1 => {}
                -1 => out.words[i / WORD_BITS] |= 1 << (i % WORD_BITS),
                other => {
                    return Err(Error::invalid(format!(
                        "element {i} is {other}, expected -1 or +1"
                    )))
                }
            }
        }
        Ok(out)
    }

    /// Builds a vector from a predicate that returns `true` where the element is `-1`.
    pub fn from_fn(dim: usize, mut negative: impl FnMut(usize) -> bool) -> Self {
        let mut words = vec![0u64; word_count(dim)];
        for (w, word) in words.iter_mut().enumerate() {
            let base = w * WORD_BITS;
            let end = (base + WORD_BITS).min(dim);
            let mut acc = 0u64;
            for i in base..end {
                acc |= (negative(i) as u64) << (i - base);
            }
            *word = acc;
        }
        Self { dim, words }
    }

    /// I.i.d. uniform `±1` entries.
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let mut words: Vec<u64> = (0..word_count(dim)).map(|_| rng.random()).collect();
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(dim);
        }
        Self { dim, words }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn is_negative(&self, i: usize) -> bool {
        (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub fn get(&self, i: usize) -> i8 {
        if self.is_negative(i) {
            -1
        } else {
            1
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = i8> + '_ {
        (0..self.dim).map(move |i| self.get(i))
    }

    pub fn to_bipolar(&self) -> Vec<i8> {
        self.iter().collect()
    }

    pub fn to_reals(&self) -> Vec<f64> {
        self.iter().map(f64::from).collect()
    }

    /// Writes the vector as `±1.0` into `out`.
    pub(crate) fn write_f32(&self, out: &mut [f32]) {
        debug_assert_eq!(out.len(), self.dim);
        for (chunk, &word) in out.chunks_mut(WORD_BITS).zip(&self.words) {
            for (b, o) in chunk.iter_mut().enumerate() {
                *o = 1.0 - 2.0 * ((word >> b) & 1) as f32;
            }
        }
    }

    pub fn negated(&self) -> Self {
        let mut out = self.clone();
        for w in &mut out.words {
            *w = !*w;
        }
        if let Some(last) = out.words.last_mut() {
            *last &= tail_mask(self.dim);
        }
        out
    }

    /// Flips the sign of element `i`.
    pub fn flip(&mut self, i: usize) {
        self.words[i / WORD_BITS] ^= 1 << (i % WORD_BITS);
    }

    /// Number of positions where the two vectors differ.
    pub fn hamming(&self, other: &Self) -> Result<usize> {
        check_dim(self.dim, other.dim)?;
        Ok(self.hamming_unchecked(other))
    }

    #[inline]
    pub(crate) fn hamming_unchecked(&self, other: &Self) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    /// Integer inner product `<a, b>`.
    pub fn dot(&self, other: &Self) -> Result<i64> {
        check_dim(self.dim, other.dim)?;
        Ok(self.dot_unchecked(other))
    }

    #[inline]
    pub(crate) fn dot_unchecked(&self, other: &Self) -> i64 {
        self.dim as i64 - 2 * self.hamming_unchecked(other) as i64
    }

    /// In-place binding with `other`.
    #[inline]
    pub(crate) fn bind_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }
}

impl fmt::Debug for Hypervector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hypervector(d={}, ", self.dim)?;
        for v in self.iter().take(16) {
            f.write_str(if v < 0 { "-" } else { "+" })?;
        }
        if self.dim > 16 {
            f.write_str("…")?;
        }
        f.write_str(")")
    }
}

/// Element-wise product of all inputs.
pub fn bind(xs: &[&Hypervector]) -> Result<Hypervector> {
    let (first, rest) = xs
        .split_first()
        .ok_or_else(|| Error::invalid("bind needs at least one vector"))?;
    let mut out = (*first).clone();
    for x in rest {
        check_dim(out.dim, x.dim)?;
        out.bind_assign(x);
    }
    Ok(out)
}

/// Removes `x` from the bound vector `p`. Identical to binding in bipolar space.
pub fn unbind(p: &Hypervector, x: &Hypervector) -> Result<Hypervector> {
    bind(&[p, x])
}

/// Majority vote over the inputs; zero sums are broken by a fair draw from `rng`.
pub fn bundle<R: Rng + ?Sized>(xs: &[&Hypervector], rng: &mut R) -> Result<Hypervector> {
    let first = xs
        .first()
        .ok_or_else(|| Error::invalid("bundle needs at least one vector"))?;
    let dim = first.dim;
    let mut sums = vec![0i64; dim];
    for x in xs {
        check_dim(dim, x.dim)?;
        for (i, s) in sums.iter_mut().enumerate() {
            *s += i64::from(x.get(i));
        }
    }
    Ok(Hypervector::from_fn(dim, |i| match sums[i] {
        s if s > 0 => false,
        s if s < 0 => true,
        _ => rng.random::<bool>(),
    }))
}

/// Cosine similarity, `<a, b> / D`.
pub fn similarity(a: &Hypervector, b: &Hypervector) -> Result<f64> {
    Ok(a.dot(b)? as f64 / a.dim as f64)
}

/// Element-wise sign. Exact zeros draw a fair `±1` from `rng`.
pub fn bipolarize<R: Rng + ?Sized>(v: &[f64], rng: &mut R) -> Hypervector {
    let mut words = vec![0u64; word_count(v.len())];
    for (word, chunk) in words.iter_mut().zip(v.chunks(WORD_BITS)) {
        let mut negative = 0u64;
        let mut tied = 0u64;
        for (b, &x) in chunk.iter().enumerate() {
            negative |= ((x < 0.0) as u64) << b;
            tied |= ((!(x > 0.0) && !(x < 0.0)) as u64) << b;
        }
        // Ties draw in ascending element order.
        while tied != 0 {
            let b = tied.trailing_zeros();
            if rng.random::<bool>() {
                negative |= 1 << b;
            }
            tied &= tied - 1;
        }
        *word = negative;
    }
    Hypervector {
        dim: v.len(),
        words,
    }
}

/// Rotates right by `k` positions: element `i` moves to `(i + k) mod D`.
pub fn circular_shift(x: &Hypervector, k: i64) -> Hypervector {
    let dim = x.dim;
    if dim == 0 {
        return x.clone();
    }
    let k = k.rem_euclid(dim as i64) as usize;
    if k == 0 {
        return x.clone();
    }
    Hypervector::from_fn(dim, |i| x.is_negative((i + dim - k) % dim))
}

/// Similarities against one codebook, one entry per codevector.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimilarityVector(Vec<f64>);

impl SimilarityVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn as_mut_vec(&mut self) -> &mut [f64] {
        &mut self.0
    }

    /// Index of the largest entry, lowest index on ties.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.0.iter().enumerate() {
            match best {
                Some((_, b)) if v <= b => {}
                _ => best = Some((i, v)),
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Number of nonzero entries.
    pub fn support(&self) -> usize {
        self.0.iter().filter(|v| **v != 0.0).count()
    }
}

impl Deref for SimilarityVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for SimilarityVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// The `M` candidate codevectors for one factor.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    vectors: Vec<Hypervector>,
    label: usize,
    seed: Option<u64>,
}

impl Codebook {
    pub fn new(vectors: Vec<Hypervector>, label: usize) -> Result<Self> {
        let first = vectors
            .first()
            .ok_or_else(|| Error::invalid("codebook needs at least one codevector"))?;
        let dim = first.dim();
        if dim == 0 {
            return Err(Error::invalid("codevector dimension must be positive"));
        }
        for v in &vectors {
            check_dim(dim, v.dim())?;
        }
        Ok(Self {
            vectors,
            label,
            seed: None,
        })
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = label;
        self
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].dim()
    }

    pub fn label(&self) -> usize {
        self.label
    }

    /// Seed the codebook was generated from, if it was generated.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn vectors(&self) -> &[Hypervector] {
        &self.vectors
    }

    pub fn get(&self, i: usize) -> Option<&Hypervector> {
        self.vectors.get(i)
    }

    /// Every codevector rotated by `k` (see [`circular_shift`]).
    pub fn rotated(&self, k: i64) -> Self {
        Self {
            vectors: self.vectors.iter().map(|v| circular_shift(v, k)).collect(),
            label: self.label,
            seed: self.seed,
        }
    }

    /// Row-major `M x D` matrix of `±1.0`.
    pub fn to_dense_f32(&self) -> Vec<f32> {
        let d = self.dim();
        let mut out = vec![0.0f32; self.len() * d];
        for (row, v) in out.chunks_exact_mut(d).zip(&self.vectors) {
            v.write_f32(row);
        }
        out
    }

    /// True if two codevectors coincide.
    pub fn has_duplicates(&self) -> bool {
        let mut seen = std::collections::HashSet::with_capacity(self.len());
        !self.vectors.iter().all(|v| seen.insert(&v.words))
    }
}

/// `M` random codevectors of dimension `D`, reproducible from `seed`.
pub fn random_codebook(m: usize, d: usize, seed: u64) -> Result<Codebook> {
    if m == 0 || d == 0 {
        return Err(Error::invalid(format!(
            "codebook size and dimension must be positive (m={m}, d={d})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vectors = (0..m).map(|_| Hypervector::random(d, &mut rng)).collect();
    let mut cb = Codebook::new(vectors, 0)?;
    cb.seed = Some(seed);
    Ok(cb)
}

/// Exact similarity search: `values[i] = similarity(x, cb[i])`.
pub fn mvm(cb: &Codebook, x: &Hypervector) -> Result<SimilarityVector> {
    check_dim(cb.dim(), x.dim())?;
    Ok(mvm_unchecked(cb, x))
}

pub(crate) fn mvm_unchecked(cb: &Codebook, x: &Hypervector) -> SimilarityVector {
    let d = x.dim() as f64;
    cb.vectors
        .iter()
        .map(|v| v.dot_unchecked(x) as f64 / d)
        .collect::<Vec<_>>()
        .into()
}

/// Pre-sign projection `out[d] = sum_i w[i] * cb[i][d]`.
pub fn transposed_mvm(cb: &Codebook, w: &[f64]) -> Result<Vec<f64>> {
    check_dim(cb.len(), w.len())?;
    let mut out = vec![0.0; cb.dim()];
    for (&wi, v) in w.iter().zip(&cb.vectors) {
        if wi == 0.0 {
            continue;
        }
        for (d, o) in out.iter_mut().enumerate() {
            if v.is_negative(d) {
                *o -= wi;
            } else {
                *o += wi;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hv(v: &[i8]) -> Hypervector {
        Hypervector::from_bipolar(v).unwrap()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn from_bipolar_rejects_zero() {
        assert!(Hypervector::from_bipolar(&[1, 0, -1]).is_err());
    }

    #[test]
    fn codebook_shape_and_determinism() {
        let cb = random_codebook(1, 4, 7).unwrap();
        assert_eq!((cb.len(), cb.dim()), (1, 4));
        assert!(cb.vectors()[0].iter().all(|v| v == 1 || v == -1));

        let a = random_codebook(256, 256, 99).unwrap();
        let b = random_codebook(256, 256, 99).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, random_codebook(256, 256, 100).unwrap());
    }

    #[test]
    fn codebook_rejects_zero_sizes() {
        assert!(random_codebook(0, 4, 1).is_err());
        assert!(random_codebook(4, 0, 1).is_err());
    }

    #[test]
    fn bind_examples() {
        let x = Hypervector::random(100, &mut rng(1));
        assert_eq!(bind(&[&x, &x]).unwrap(), Hypervector::ones(100));
        let a = hv(&[1, -1, 1, -1]);
        let b = hv(&[1, 1, -1, -1]);
        assert_eq!(bind(&[&a, &b]).unwrap(), hv(&[1, -1, -1, 1]));
        assert_eq!(bind(&[&a, &b]).unwrap(), bind(&[&b, &a]).unwrap());
        assert!(bind(&[&a, &Hypervector::ones(5)]).is_err());
        assert!(bind(&[]).is_err());
    }

    #[test]
    fn unbind_examples() {
        let mut r = rng(2);
        let a = Hypervector::random(257, &mut r);
        let b = Hypervector::random(257, &mut r);
        let c = Hypervector::random(257, &mut r);
        let p = bind(&[&a, &b]).unwrap();
        assert_eq!(unbind(&p, &a).unwrap(), b);
        assert_eq!(unbind(&p, &Hypervector::ones(257)).unwrap(), p);
        let p3 = bind(&[&a, &b, &c]).unwrap();
        assert_eq!(unbind(&unbind(&p3, &b).unwrap(), &c).unwrap(), a);
        assert!(unbind(&p, &Hypervector::ones(3)).is_err());
    }

    #[test]
    fn bundle_examples() {
        let mut r = rng(3);
        let x = Hypervector::random(64, &mut r);
        let y = Hypervector::random(64, &mut r);
        assert_eq!(bundle(&[&x], &mut r).unwrap(), x);
        assert_eq!(bundle(&[&x, &x, &y], &mut r).unwrap(), x);
        assert!(bundle(&[], &mut r).is_err());
    }

    #[test]
    fn bundle_of_opposites_is_balanced() {
        let mut r = rng(4);
        let x = Hypervector::random(128, &mut r);
        let nx = x.negated();
        let mut sums = vec![0i64; 128];
        let draws = 2000;
        for _ in 0..draws {
            let b = bundle(&[&x, &nx], &mut r).unwrap();
            for (s, v) in sums.iter_mut().zip(b.iter()) {
                *s += i64::from(v);
            }
        }
        // Per-element mean of a fair ±1 over 2000 draws has std ~0.022.
        let worst = sums
            .iter()
            .map(|s| (*s as f64 / draws as f64).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.12, "worst per-element mean {worst}");
        let overall: i64 = sums.iter().sum();
        assert!((overall as f64 / (draws * 128) as f64).abs() < 0.01);
    }

    #[test]
    fn similarity_examples() {
        let x = Hypervector::random(300, &mut rng(5));
        assert_eq!(similarity(&x, &x).unwrap(), 1.0);
        assert_eq!(similarity(&x, &x.negated()).unwrap(), -1.0);
        assert_eq!(
            similarity(&hv(&[1, 1, -1, -1]), &hv(&[1, -1, -1, -1])).unwrap(),
            0.5
        );
        assert!(similarity(&x, &Hypervector::ones(2)).is_err());
    }

    #[test]
    fn mvm_examples() {
        let cb = random_codebook(32, 1024, 6).unwrap();
        let x = cb.vectors()[5].clone();
        let s = mvm(&cb, &x).unwrap();
        assert_eq!(s.len(), 32);
        assert_eq!(s[5], 1.0);
        for (i, v) in s.iter().enumerate() {
            if i != 5 {
                assert!(v.abs() < 5.0 / 32.0, "cross similarity {v}");
            }
        }
        assert_eq!(s.argmax(), Some(5));

        let one = random_codebook(1, 64, 1).unwrap();
        let y = Hypervector::random(64, &mut rng(9));
        let s = mvm(&one, &y).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0], similarity(&y, &one.vectors()[0]).unwrap());
        assert!(mvm(&one, &Hypervector::ones(3)).is_err());
    }

    #[test]
    fn transposed_mvm_examples() {
        let cb = random_codebook(4, 70, 8).unwrap();
        let mut w = vec![0.0; 4];
        w[2] = -0.5;
        let out = transposed_mvm(&cb, &w).unwrap();
        for (o, v) in out.iter().zip(cb.vectors()[2].iter()) {
            assert_eq!(*o, -0.5 * f64::from(v));
        }
        assert!(transposed_mvm(&cb, &[0.0; 4])
            .unwrap()
            .iter()
            .all(|v| *v == 0.0));
        assert!(transposed_mvm(&cb, &[0.0; 3]).is_err());
    }

    #[test]
    fn bipolarize_examples() {
        let mut r = rng(10);
        assert_eq!(bipolarize(&[3.2, -0.1, 7.0], &mut r), hv(&[1, -1, 1]));
        let x = Hypervector::random(99, &mut r);
        assert_eq!(bipolarize(&x.to_reals(), &mut r), x);

        let mut total = 0i64;
        for _ in 0..200 {
            total += bipolarize(&[0.0; 256], &mut r)
                .iter()
                .map(i64::from)
                .sum::<i64>();
        }
        // 51,200 fair coins: std of the mean is ~0.0044.
        assert!((total as f64 / 51_200.0).abs() < 0.02);
    }

    #[test]
    fn circular_shift_examples() {
        let x = hv(&[1, 1, -1, -1]);
        assert_eq!(circular_shift(&x, 0), x);
        assert_eq!(circular_shift(&x, 4), x);
        // [a, b, c, d] -> [d, a, b, c]
        assert_eq!(circular_shift(&x, 1), hv(&[-1, 1, 1, -1]));
        let y = Hypervector::random(131, &mut rng(11));
        for k in [-300, -1, 1, 5, 130, 131, 1000] {
            assert_eq!(circular_shift(&circular_shift(&y, k), -k), y);
        }
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        let s = SimilarityVector::new(vec![0.1, 0.5, 0.5, -1.0]);
        assert_eq!(s.argmax(), Some(1));
        assert_eq!(s.support(), 4);
    }

    #[test]
    fn negated_keeps_padding_clear() {
        let x = Hypervector::ones(70);
        let n = x.negated();
        assert_eq!(n.dot(&x).unwrap(), -70);
        assert_eq!(n.negated(), x);
    }
}
