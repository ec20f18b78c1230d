use holofactor::activation::{identity, threshold, top_k};
use holofactor::hyperopt::expected_improvement_from;
use holofactor::noise::{noisy_mvm, noisy_transposed_mvm, Crossbar, NoiseBackend, PcmParams};
use holofactor::vsa::{bind, bundle, circular_shift, mvm, random_codebook, similarity, transposed_mvm, unbind};
use holofactor::Hypervector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn hv(d: usize, seed: u64) -> Hypervector {
    Hypervector::random(d, &mut rng(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unbind_inverts_bind(d in 1usize..300, a in any::<u64>(), b in any::<u64>()) {
        let (x, y) = (hv(d, a), hv(d, b));
        let p = bind(&[&x, &y]).unwrap();
        prop_assert_eq!(unbind(&p, &y).unwrap(), x.clone());
        prop_assert_eq!(bind(&[&y, &x]).unwrap(), p.clone());
        prop_assert_eq!(bind(&[&p, &p]).unwrap(), Hypervector::ones(d));
    }

    #[test]
    fn similarity_is_bounded_and_symmetric(d in 1usize..300, a in any::<u64>(), b in any::<u64>()) {
        let (x, y) = (hv(d, a), hv(d, b));
        let s = similarity(&x, &y).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert_eq!(s, similarity(&y, &x).unwrap());
        prop_assert_eq!(similarity(&x, &x).unwrap(), 1.0);
        prop_assert_eq!(similarity(&x, &x.negated()).unwrap(), -1.0);
        let h = x.hamming(&y).unwrap() as f64;
        prop_assert!((s - (1.0 - 2.0 * h / d as f64)).abs() < 1e-15);
    }

    #[test]
    fn bundle_of_odd_count_is_elementwise_majority(d in 1usize..200, n in 0usize..4, seed in any::<u64>()) {
        let xs: Vec<Hypervector> = (0..2 * n + 1).map(|i| hv(d, seed.wrapping_add(i as u64))).collect();
        let refs: Vec<&Hypervector> = xs.iter().collect();
        let b = bundle(&refs, &mut rng(0)).unwrap();
        for i in 0..d {
            let sum: i32 = xs.iter().map(|x| x.get(i) as i32).sum();
            prop_assert_eq!(b.get(i) as i32, sum.signum());
        }
    }

    #[test]
    fn shifts_compose(d in 1usize..200, a in -500i64..500, b in -500i64..500, seed in any::<u64>()) {
        let x = hv(d, seed);
        prop_assert_eq!(circular_shift(&circular_shift(&x, a), b), circular_shift(&x, a + b));
        prop_assert_eq!(circular_shift(&x, d as i64), x.clone());
        prop_assert_eq!(circular_shift(&x, 1).get(1 % d), x.get(0));
    }

    #[test]
    fn threshold_is_idempotent_and_monotone(
        a in prop::collection::vec(-1.0f64..1.0, 1..64),
        t1 in -1.0f64..1.0,
        t2 in -1.0f64..1.0,
    ) {
        let once = threshold(&a, t1);
        prop_assert_eq!(threshold(&once, t1), once.clone());
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(threshold(&a, hi).support() <= threshold(&a, lo).support());
        prop_assert_eq!(identity(&a).into_inner(), a.clone());
    }

    #[test]
    fn top_k_keeps_at_most_k(a in prop::collection::vec(-1.0f64..1.0, 1..64), k in 1usize..70) {
        let out = top_k(&a, k);
        prop_assert!(out.support() <= k.min(a.len()));
        prop_assert_eq!(top_k(&out, k), out.clone());
    }

    #[test]
    fn expected_improvement_is_nonnegative(mean in -5.0f64..5.0, std in 0.0f64..5.0, best in -5.0f64..5.0) {
        let ei = expected_improvement_from(mean, std, best);
        prop_assert!(ei >= 0.0);
        prop_assert!(ei >= (best - mean).max(0.0) - 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn noiseless_backends_match_exact_mvm(m in 1usize..20, d in 1usize..200, seed in any::<u64>()) {
        let cb = random_codebook(m, d, seed).unwrap();
        let x = hv(d, seed ^ 1);
        let w: Vec<f64> = (0..m).map(|i| (i as f64 - 3.0) / 7.0).collect();
        let exact = mvm(&cb, &x).unwrap();
        let exact_t = transposed_mvm(&cb, &w).unwrap();
        let backends = [
            NoiseBackend::Exact,
            NoiseBackend::AdditiveGaussian { sigma: 0.0 },
            NoiseBackend::Pcm {
                params: PcmParams { nu: 0.0, sigma_nu: 0.0, ..PcmParams::noiseless() },
                read_time_s: 3600.0,
                shared_array: false,
            },
        ];
        for b in backends {
            let xbar = Crossbar::new(&cb, &b, &mut rng(seed)).unwrap();
            let got = noisy_mvm(&xbar, &x, &mut rng(3)).unwrap();
            let got_t = noisy_transposed_mvm(&xbar, &w, &mut rng(3)).unwrap();
            for (g, e) in got.iter().zip(exact.iter()) {
                prop_assert!((g - e).abs() < 1e-12, "{b:?}: {g} vs {e}");
            }
            for (g, e) in got_t.iter().zip(&exact_t) {
                prop_assert!((g - e).abs() < 1e-5 * (1.0 + e.abs()), "{b:?}: {g} vs {e}");
            }
        }
    }
}
