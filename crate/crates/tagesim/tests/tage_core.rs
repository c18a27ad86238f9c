use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tagesim::bhr::BhrState;
use tagesim::tage::{geometric_lengths, Isolation, Privilege, SecurityContext, TageConfig, TageError, TagePredictor};

const USER: SecurityContext = SecurityContext::user(1);

fn random_bhr<R: Rng>(rng: &mut R, width: usize) -> BhrState {
    BhrState::from_words(width, &[rng.gen(), rng.gen()])
}

fn pc_of(x: u64) -> u64 {
    (x << 2) & 0xffff_ffff_fffc
}

fn three_tables() -> TageConfig {
    TageConfig { num_tables: 3, history_lengths: vec![8, 16, 32], ..TageConfig::tiny() }
}

fn desk() -> TageConfig {
    TageConfig::desk(100)
}

/// Table index and set of every live entry, with counter and useful.
fn dump(t: &TagePredictor) -> Vec<(usize, u32, u8, u8)> {
    let mut buf = Vec::new();
    t.dump_csv(&mut buf).unwrap();
    let mut r = csv::Reader::from_reader(buf.as_slice());
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[0].parse().unwrap(), rec[1].parse().unwrap(), rec[4].parse().unwrap(), rec[5].parse().unwrap())
        })
        .collect()
}

#[test]
fn hash_is_deterministic_and_suffix_only() {
    let cfg = desk();
    let t = TagePredictor::new(cfg.clone(), 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let pc = pc_of(rng.gen());
        let h = random_bhr(&mut rng, 100);
        for i in 1..=cfg.num_tables {
            let a = t.component_hash(i, pc, &h).unwrap();
            assert_eq!(a, t.component_hash(i, pc, &h).unwrap());
            let len = cfg.history_lengths[i - 1];
            let mut g = h;
            for b in len..100 {
                if rng.gen() {
                    g.toggle_bit(b);
                }
            }
            assert_eq!(a, t.component_hash(i, pc, &g).unwrap(), "table {i}");
        }
    }
    assert_eq!(t.component_hash(0, 0, &BhrState::zero(100)), Err(TageError::TableIndex(0, 4)));
}

#[test]
fn hash_collision_rate_matches_alias_probability() {
    let cfg = desk();
    let t = TagePredictor::new(cfg.clone(), 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 1_000_000u64;
    let mut hits = 0u64;
    for _ in 0..n {
        let (pa, pb) = (pc_of(rng.gen()), pc_of(rng.gen()));
        let (ha, hb) = (random_bhr(&mut rng, 100), random_bhr(&mut rng, 100));
        hits += u64::from(t.component_hash(4, pa, &ha).unwrap() == t.component_hash(4, pb, &hb).unwrap());
    }
    let p = cfg.alias_probability();
    let mean = n as f64 * p;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    assert!((hits as f64 - mean).abs() <= 3.0 * sigma, "{hits} vs {mean} +- {sigma}");
}

#[test]
fn empty_predictor_uses_base_not_taken() {
    let mut t = TagePredictor::new(desk(), 0).unwrap();
    let p = t.predict(0x1000, &BhrState::zero(100), USER);
    assert_eq!(p.provider, 0);
    assert!(!p.taken);
}

#[test]
fn installed_entry_becomes_provider() {
    let cfg = desk();
    let mut t = TagePredictor::new(cfg.clone(), 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 1..=cfg.num_tables {
        t.reset();
        let h = random_bhr(&mut rng, 100);
        t.install_entry(i, 0x4440, &h, true, USER).unwrap();
        assert_eq!(t.provider_of(0x4440, &h, USER), i);
        assert!(t.predict(0x4440, &h, USER).taken);
        assert_eq!(t.entry_state(i, 0x4440, &h, USER), Some((cfg.max_counter(), cfg.max_useful())));
    }
}

#[test]
fn privilege_tag_hides_entries_across_levels() {
    let cfg = TageConfig { isolation: Isolation::PrivilegeTag, ..desk() };
    let mut t = TagePredictor::new(cfg, 0).unwrap();
    let h = BhrState::from_words(100, &[0xdead_beef]);
    t.install_entry(4, 0x800, &h, true, SecurityContext::kernel()).unwrap();
    assert_eq!(t.provider_of(0x800, &h, SecurityContext::kernel()), 4);
    assert_ne!(t.provider_of(0x800, &h, SecurityContext::user(0)), 4);
    // Privilege tags ignore the process.
    assert_eq!(t.provider_of(0x800, &h, SecurityContext::new(Privilege::El1, 9)), 4);
}

#[test]
fn process_tag_separates_processes() {
    let cfg = TageConfig { isolation: Isolation::ProcessTag, ..desk() };
    let mut t = TagePredictor::new(cfg, 0).unwrap();
    let h = BhrState::from_words(100, &[7]);
    t.install_entry(2, 0x800, &h, true, SecurityContext::user(1)).unwrap();
    assert_eq!(t.provider_of(0x800, &h, SecurityContext::user(1)), 2);
    assert_eq!(t.provider_of(0x800, &h, SecurityContext::user(2)), 0);
}

#[test]
fn counter_saturates_after_enough_updates() {
    let cfg = desk();
    let mut t = TagePredictor::new(cfg.clone(), 0).unwrap();
    let h = BhrState::from_words(100, &[5]);
    t.install_entry(4, 0x40, &h, false, USER).unwrap();
    for _ in 0..1u32 << (cfg.counter_bits + 1) {
        t.execute(0x40, &h, true, USER);
    }
    assert_eq!(t.entry_state(4, 0x40, &h, USER).unwrap().0, 7);
}

#[test]
fn flipped_outcome_costs_four_mispredictions() {
    let mut t = TagePredictor::new(desk(), 0).unwrap();
    let h = BhrState::from_words(100, &[11]);
    t.install_entry(4, 0x40, &h, true, USER).unwrap();
    let misses: Vec<bool> = (0..8).map(|_| t.execute(0x40, &h, false, USER).taken).collect();
    assert_eq!(misses, [true, true, true, true, false, false, false, false]);
}

#[test]
fn update_requires_matching_predict() {
    let mut t = TagePredictor::new(desk(), 0).unwrap();
    let h = BhrState::zero(100);
    assert_eq!(t.update(0x40, &h, true, USER), Err(TageError::UpdateWithoutPredict));
    t.predict(0x40, &h, USER);
    assert_eq!(t.update(0x44, &h, true, USER), Err(TageError::UpdateWithoutPredict));
    t.predict(0x40, &h, USER);
    assert!(t.update(0x40, &h, true, USER).is_ok());
    assert_eq!(t.update(0x40, &h, true, USER), Err(TageError::UpdateWithoutPredict));
}

fn allocation_histogram(cfg: &TageConfig, provider: usize, draws: u32) -> Vec<f64> {
    let t = TagePredictor::new(cfg.clone(), 0).unwrap();
    let h = BhrState::zero(cfg.history_width());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut counts = vec![0u32; cfg.num_tables + 1];
    for _ in 0..draws {
        counts[t.allocate_higher(provider, 0x40, &h, USER, &mut rng).unwrap()] += 1;
    }
    counts.iter().map(|&c| c as f64 / draws as f64).collect()
}

#[test]
fn allocation_weights_halve_per_table() {
    let f = allocation_histogram(&three_tables(), 0, 100_000);
    for (i, want) in [(1, 4.0 / 7.0), (2, 2.0 / 7.0), (3, 1.0 / 7.0)] {
        assert!((f[i] - want).abs() < 0.01, "table {i}: {}", f[i]);
    }
    let f = allocation_histogram(&desk(), 0, 100_000);
    let above_one: f64 = f[2..].iter().sum();
    assert!((above_one - 7.0 / 15.0).abs() < 0.02, "{above_one}");
}

#[test]
fn allocation_skips_useful_entries() {
    let cfg = desk();
    let mut t = TagePredictor::new(cfg.clone(), 0).unwrap();
    let h = BhrState::from_words(100, &[3]);
    for i in 1..cfg.num_tables {
        t.install_entry(i, 0x40, &h, true, USER).unwrap();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        assert_eq!(t.allocate_higher(0, 0x40, &h, USER, &mut rng), Some(cfg.num_tables));
    }
    t.install_entry(cfg.num_tables, 0x40, &h, true, USER).unwrap();
    assert_eq!(t.allocate_higher(0, 0x40, &h, USER, &mut rng), None);
}

#[test]
fn geometric_lengths_end_at_max() {
    assert_eq!(geometric_lengths(4, 13, 100), vec![13, 26, 51, 100]);
    assert_eq!(TageConfig::desk(100).history_lengths, vec![13, 26, 51, 100]);
    assert_eq!(TageConfig::firestorm().history_width(), 100);
    assert_eq!(TageConfig::icestorm().history_width(), 60);
    assert_eq!(TageConfig::firestorm().counter_bits, 3);
    assert_eq!(TageConfig::icestorm().counter_bits, 3);
}

#[test]
fn config_validation() {
    let ok = desk();
    assert!(ok.validate().is_ok());
    let bad = [
        TageConfig { num_tables: 1, history_lengths: vec![100], ..ok.clone() },
        TageConfig { history_lengths: vec![13, 13, 51, 100], ..ok.clone() },
        TageConfig { history_lengths: vec![13, 26, 100], ..ok.clone() },
        TageConfig { counter_bits: 0, ..ok.clone() },
        TageConfig { tag_bits: 0, ..ok.clone() },
        TageConfig { decay_period: 0, ..ok.clone() },
    ];
    for c in bad {
        assert!(matches!(c.validate(), Err(TageError::InvalidConfig(_))), "{c:?}");
    }
    let json = serde_json::to_string(&ok).unwrap();
    assert_eq!(serde_json::from_str::<TageConfig>(&json).unwrap(), ok);
    assert!(serde_json::from_str::<TageConfig>(&json.replace("\"sets_log\"", "\"sets\"")).is_err());
}

#[test]
fn width_mismatch_is_reported() {
    let t = TagePredictor::new(desk(), 0).unwrap();
    assert_eq!(t.check_width(60), Err(TageError::WidthMismatch { got: 60, want: 100 }));
}

/// Branch stream over a handful of PCs and histories so entries collide.
fn stream() -> impl Strategy<Value = Vec<(u8, u8, bool, u8)>> {
    prop::collection::vec((0u8..6, 0u8..16, any::<bool>(), 0u8..4), 1..400)
}

fn decode(cfg: &TageConfig, (pc, h, _, c): (u8, u8, bool, u8)) -> (u64, BhrState, SecurityContext) {
    let width = cfg.history_width();
    let word = (h as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let ctx = SecurityContext::new(if c & 1 == 1 { Privilege::El1 } else { Privilege::El0 }, u32::from(c >> 1));
    (0x1000 + 4 * pc as u64, BhrState::from_words(width, &[word, !word]), ctx)
}

proptest! {
    #[test]
    fn counters_stay_in_range(ops in stream(), seed: u64) {
        let cfg = TageConfig { useful_bits: 1, decay_period: 64, ..TageConfig::tiny() };
        let mut t = TagePredictor::new(cfg.clone(), seed).unwrap();
        for op in ops {
            let (pc, h, ctx) = decode(&cfg, op);
            t.execute(pc, &h, op.2, ctx);
        }
        for (_, _, ctr, useful) in dump(&t) {
            prop_assert!(ctr <= cfg.max_counter());
            prop_assert!(useful <= cfg.max_useful());
        }
    }

    #[test]
    fn provider_counter_follows_saturating_arithmetic(outcomes in prop::collection::vec(any::<bool>(), 0..100), start: bool) {
        let cfg = desk();
        let mut t = TagePredictor::new(cfg.clone(), 0).unwrap();
        let h = BhrState::from_words(100, &[42]);
        t.install_entry(4, 0x40, &h, start, USER).unwrap();
        let mut want: i32 = if start { 7 } else { 0 };
        for o in outcomes {
            t.execute(0x40, &h, o, USER);
            want = (want + if o { 1 } else { -1 }).clamp(0, 7);
            prop_assert_eq!(t.entry_state(4, 0x40, &h, USER).unwrap().0 as i32, want);
        }
    }

    #[test]
    fn provider_is_longest_match(ops in stream(), seed: u64) {
        let cfg = TageConfig::tiny();
        let mut t = TagePredictor::new(cfg.clone(), seed).unwrap();
        for op in ops {
            let (pc, h, ctx) = decode(&cfg, op);
            let longest = (1..=cfg.num_tables).rev().find(|&i| t.entry_state(i, pc, &h, ctx).is_some()).unwrap_or(0);
            prop_assert_eq!(t.predict(pc, &h, ctx).provider, longest);
            t.update(pc, &h, op.2, ctx).unwrap();
        }
    }

    #[test]
    fn allocation_goes_above_provider_into_free_entries(ops in stream(), seed: u64) {
        let cfg = TageConfig { num_tables: 3, history_lengths: vec![2, 4, 8], ..TageConfig::tiny() };
        let mut t = TagePredictor::new(cfg.clone(), seed).unwrap();
        for op in ops {
            let (pc, h, ctx) = decode(&cfg, op);
            let before = dump(&t);
            let p = t.predict(pc, &h, ctx);
            let info = t.update(pc, &h, op.2, ctx).unwrap();
            if let Some(j) = info.allocated {
                prop_assert!(j > p.provider);
                let (set, _) = t.component_hash(j, pc, &h).unwrap();
                let prev = before.iter().find(|e| e.0 == j && e.1 == set);
                prop_assert!(prev.map_or(true, |e| e.3 == 0), "overwrote useful entry {:?}", prev);
            }
        }
    }

    #[test]
    fn security_tags_are_inert_without_isolation(ops in stream(), seed: u64) {
        let cfg = TageConfig::tiny();
        let mut tagged = TagePredictor::new(cfg.clone(), seed).unwrap();
        let mut plain = TagePredictor::new(cfg.clone(), seed).unwrap();
        for op in ops {
            let (pc, h, ctx) = decode(&cfg, op);
            let a = tagged.execute(pc, &h, op.2, ctx);
            let b = plain.execute(pc, &h, op.2, USER);
            prop_assert_eq!(a, b);
        }
        prop_assert_eq!(dump(&tagged), dump(&plain));
    }

    #[test]
    fn same_seed_same_state(ops in stream(), seed: u64) {
        let cfg = TageConfig::tiny();
        let run = || {
            let mut t = TagePredictor::new(cfg.clone(), seed).unwrap();
            let preds: Vec<_> = ops.iter().map(|&op| {
                let (pc, h, ctx) = decode(&cfg, op);
                t.execute(pc, &h, op.2, ctx)
            }).collect();
            (preds, dump(&t))
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn geometric_lengths_increase(n in 2usize..16, min in 1usize..20, extra in 16usize..200) {
        let l = geometric_lengths(n, min, min + extra);
        prop_assert_eq!(l.len(), n);
        prop_assert_eq!(l[0], min);
        prop_assert_eq!(*l.last().unwrap(), min + extra);
        prop_assert!(l.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn base_counters_respect_privilege_tags() {
    let h = BhrState::zero(100);
    for (isolation, shared) in [(Isolation::Off, true), (Isolation::PrivilegeTag, false)] {
        let mut t = TagePredictor::new(TageConfig { isolation, ..desk() }, 0).unwrap();
        for _ in 0..2 {
            t.predict(0x40, &h, SecurityContext::user(0));
            t.update(0x40, &h, true, SecurityContext::user(0)).unwrap();
        }
        let k = t.predict(0x40, &h, SecurityContext::kernel());
        assert_eq!(k.taken, shared, "{isolation:?}");
        if isolation == Isolation::PrivilegeTag {
            assert_eq!(k.provider, 0);
        }
    }
}
