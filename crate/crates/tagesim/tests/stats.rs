use num_rational::Ratio;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tagesim::stats::{
    alloc_prob, chernoff_log_bound, estimate_search_space, lpc_gain, p_prime, p_succ, ratio_f64, StatsError,
};

/// Successes of `Bin(n, q)` drawn through geometric gaps between hits.
fn binomial<R: Rng>(rng: &mut R, n: u64, q: f64) -> u64 {
    let ln = (1.0 - q).ln();
    let (mut pos, mut k) = (0u64, 0u64);
    loop {
        let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        pos += (u.ln() / ln).floor() as u64 + 1;
        if pos > n {
            return k;
        }
        k += 1;
    }
}

#[test]
fn published_exponents() {
    for (n, k, e) in [(1_000_000_000, 1, 30), (650_000_000, 4, 27), (1_100_000_000, 33, 25), (565_000_000, 61, 23)] {
        let r = estimate_search_space(n, k).unwrap();
        assert_eq!(r.exponent, e, "({n}, {k})");
        assert!(!r.lower_bound_only);
        assert_eq!(r.diagnostics.len(), 5);
    }
}

#[test]
fn zero_successes_give_a_lower_bound() {
    let r = estimate_search_space(1 << 20, 0).unwrap();
    assert!(r.lower_bound_only);
    assert_eq!(r.exponent, 20);
    assert_eq!(estimate_search_space(0, 0), Err(StatsError::NoTrials));
    assert_eq!(estimate_search_space(3, 4), Err(StatsError::TooManySuccesses { n: 3, k: 4 }));
}

#[test]
fn p_succ_matches_rational_expansion() {
    // p = 2^-12 exactly, expanded by hand in rationals.
    let p = Ratio::new(1i128, 4096);
    let one = Ratio::from_integer(1i128);
    for t in 2..=6u32 {
        for i in 1..t {
            let pp = Ratio::new((1i128 << (t - i)) - 1, (1i128 << t) - 1);
            let want = p * p + (one - p) * pp * p;
            let want = *want.numer() as f64 / *want.denom() as f64;
            let got = p_succ(1.0 / 4096.0, i, t).unwrap();
            assert!((got - want).abs() <= want * 1e-12, "i={i} T={t}");
        }
        assert_eq!(p_succ(1.0 / 4096.0, t, t).unwrap(), 1.0 / 4096.0);
    }
    let v = p_succ(1.0 / 4096.0, 1, 4).unwrap();
    assert!((v / 1.14e-4 - 1.0).abs() < 0.01, "{v}");
}

#[test]
fn lpc_gain_at_small_p_tracks_inverse_p_prime() {
    let p = 1e-9;
    for i in 1..4 {
        let want = 15.0 / ((1u32 << (4 - i)) - 1) as f64;
        assert!((lpc_gain(p, i, 4).unwrap() / want - 1.0).abs() < 1e-6);
    }
}

#[test]
fn chernoff_bound_separates_exponents_on_synthetic_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for (n, k0) in [(10_000_000u64, 12), (1_000_000_000, 20), (100_000_000, 16)] {
        for _ in 0..10 {
            let k = binomial(&mut rng, n, (-(k0 as f64)).exp2());
            let at_truth = chernoff_log_bound(n, k, k0);
            assert!(at_truth > -6.0 && at_truth <= 0.0, "n={n} k0={k0} k={k}: {at_truth}");
            for d in [-4, 4] {
                assert!(chernoff_log_bound(n, k, k0 + d) < (1e-6f64).ln(), "d={d}");
            }
            assert!((estimate_search_space(n, k).unwrap().exponent - k0).abs() <= 1);
        }
    }
}

#[test]
fn binomial_sampler_is_calibrated() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let draws: Vec<u64> = (0..400).map(|_| binomial(&mut rng, 100_000, 0.01)).collect();
    let mean = draws.iter().sum::<u64>() as f64 / draws.len() as f64;
    assert!((mean - 1000.0).abs() < 10.0, "{mean}");
}

proptest! {
    #[test]
    fn alloc_prob_normalizes_and_sums_to_p_prime(t in 1u32..=20) {
        let total = (1..=t).map(|i| alloc_prob(i, t).unwrap()).fold(Ratio::from_integer(0), |a, b| a + b);
        prop_assert_eq!(total, Ratio::from_integer(1));
        for i in 1..=t {
            let above = (i + 1..=t).map(|j| alloc_prob(j, t).unwrap()).fold(Ratio::from_integer(0), |a, b| a + b);
            prop_assert_eq!(p_prime(i, t).unwrap(), above);
        }
    }

    #[test]
    fn alloc_prob_halves_per_step(t in 2u32..=20, i in 1u32..20) {
        prop_assume!(i < t);
        prop_assert_eq!(alloc_prob(i, t).unwrap(), alloc_prob(i + 1, t).unwrap() * 2);
    }

    #[test]
    fn p_succ_decreases_with_depth(e in 4.0f64..30.0, t in 2u32..=12) {
        let p = (-e).exp2();
        for i in 1..t - 1 {
            prop_assert!(p_succ(p, i, t).unwrap() > p_succ(p, i + 1, t).unwrap());
        }
        prop_assert!(p_succ(p, t, t).unwrap() > p_succ(p, t - 1, t).unwrap());
        prop_assert!(ratio_f64(p_prime(t, t).unwrap()) == 0.0);
    }

    #[test]
    fn estimate_is_rounded_log_ratio(n in 1u64..1 << 40, k in 1u64..1 << 20) {
        prop_assume!(k <= n);
        let r = estimate_search_space(n, k).unwrap();
        let x = (n as f64 / k as f64).log2();
        prop_assert!((r.exponent as f64 - x).abs() <= 0.5 + 1e-9);
        prop_assert!(r.diagnostics.iter().any(|&(e, b)| e == r.exponent && b == r.chernoff_log_bound));
    }

    #[test]
    fn domain_errors(i in 0u32..70, t in 0u32..70) {
        let ok = (1..=62).contains(&t) && (1..=t).contains(&i);
        prop_assert_eq!(alloc_prob(i, t).is_ok(), ok);
        prop_assert_eq!(p_prime(i, t).is_ok(), ok);
    }
}
