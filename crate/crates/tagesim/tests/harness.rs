mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::tiny_model;
use tagesim::bhr::{BhrModel, BhrState, BranchEvent, BranchSlide, ADDR_MASK};
use tagesim::harness::{
    aliasing_detect, derive_seed, lpc_primitive, random_slide, run_search, setup_victim, slide_with_history,
    train_mistrain, trial, AliasClass, AliasConfig, BranchPair, Core, HarnessError, ResetPolicy, SearchMode,
    SlideTraffic, TrialConfig, VictimSpec,
};
use tagesim::tage::{SecurityContext, TageConfig, TagePredictor};

const USER: SecurityContext = SecurityContext::user(1);

fn core(model: &Arc<BhrModel>, cfg: TageConfig, seed: u64) -> Core {
    Core::new(TagePredictor::new(cfg, seed).unwrap(), model.clone()).unwrap()
}

fn firestorm() -> (Arc<BhrModel>, TageConfig) {
    (Arc::new(BhrModel::firestorm()), TageConfig::firestorm())
}

fn desk() -> (Arc<BhrModel>, TageConfig) {
    (Arc::new(BhrModel::firestorm()), TageConfig::desk(100))
}

fn victim(model: &BhrModel, depth: usize, seed: u64) -> VictimSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    VictimSpec { slide: random_slide(&mut rng, model), depth, correct: false }
}

#[test]
fn victim_setup_reaches_requested_depth() {
    let (m, cfg) = firestorm();
    for depth in [1, 2, cfg.num_tables] {
        let mut c = core(&m, cfg.clone(), 0);
        let v = victim(&m, depth, depth as u64);
        setup_victim(&mut c, &v, USER).unwrap();
        let h = m.bhr_of_slide(&v.slide);
        assert_eq!(c.tage.provider_of(v.pc(), &h, USER), depth);
    }
}

#[test]
fn victim_survives_unrelated_traffic() {
    let (m, cfg) = firestorm();
    let mut c = core(&m, cfg, 0);
    let v = victim(&m, 2, 7);
    setup_victim(&mut c, &v, USER).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut executed = 0;
    while executed < 1000 {
        let s = random_slide(&mut rng, &m);
        c.run(s.events(), USER);
        executed += s.len();
    }
    let h = m.bhr_of_slide(&v.slide);
    let p = c.tage.lookup(v.pc(), &h, USER).prediction;
    assert_eq!((p.provider, p.taken), (2, false));
}

#[test]
fn setup_rejects_bad_depth() {
    let (m, cfg) = firestorm();
    let mut c = core(&m, cfg, 0);
    let v = victim(&m, 9, 1);
    assert!(matches!(setup_victim(&mut c, &v, USER), Err(HarnessError::Tage(_))));
}

#[test]
fn random_slide_is_seeded_and_well_formed() {
    let m = BhrModel::icestorm();
    let a = random_slide(&mut ChaCha8Rng::seed_from_u64(1), &m);
    let b = random_slide(&mut ChaCha8Rng::seed_from_u64(1), &m);
    let c = random_slide(&mut ChaCha8Rng::seed_from_u64(2), &m);
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.len(), 61);
    assert!(m.check_flippable(&a).is_ok());
    for w in a.events().windows(2) {
        assert_eq!(w[0].target, w[1].pc, "slide branches are chained");
    }
}

#[test]
fn random_slide_histories_look_uniform() {
    // Chi-square over 256 bins of three byte projections; the 0.1% critical
    // value for 255 degrees of freedom is about 330.
    let m = BhrModel::firestorm();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 10_000;
    let hs: Vec<BhrState> = (0..n).map(|_| m.bhr_of_slide(&random_slide(&mut rng, &m))).collect();
    for byte in [0usize, 6, 11] {
        let mut bins = [0u32; 256];
        for h in &hs {
            let v = (0..8).fold(0usize, |acc, k| acc | usize::from(h.bit(byte * 8 + k)) << k);
            bins[v] += 1;
        }
        let e = n as f64 / 256.0;
        let chi: f64 = bins.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
        assert!(chi < 330.0, "byte {byte}: chi-square {chi}");
    }
}

#[test]
fn history_ignores_high_address_bits_of_a_slide() {
    let m = BhrModel::firestorm();
    let s = random_slide(&mut ChaCha8Rng::seed_from_u64(13), &m);
    let hi = 0x5a5a_u64 << 32 & ADDR_MASK;
    let moved: Vec<BranchEvent> = s
        .events()
        .iter()
        .map(|e| {
            if e.kind.is_conditional() {
                e.with_pc(e.pc ^ hi)
            } else {
                BranchEvent { pc: e.pc ^ hi, target: e.target ^ hi, ..*e }
            }
        })
        .collect();
    let moved = BranchSlide::new(moved).unwrap();
    assert_eq!(m.bhr_of_slide(&moved), m.bhr_of_slide(&s));
}

#[test]
fn slide_with_history_hits_target() {
    let m = BhrModel::firestorm();
    let target = BhrState::from_words(100, &[0x0123_4567_89ab_cdef, 0xf_0f0f_0f0f]);
    let s = slide_with_history(&m, &target, 0x7000).unwrap();
    assert_eq!(m.bhr_of_slide(&s), target);
    assert_eq!(s.terminal().pc, 0x7000);
}

#[test]
fn training_makes_the_branch_predict_the_trained_outcome() {
    let (m, cfg) = firestorm();
    let mut tagged = 0;
    let n = 500;
    for k in 0..n {
        let mut c = core(&m, cfg.clone(), k);
        let s = random_slide(&mut ChaCha8Rng::seed_from_u64(100 + k), &m);
        // Base counters start weakly not-taken, so taken is the outcome
        // that has to be learned by a tagged entry.
        train_mistrain(&mut c, &s, true, 16, USER, SlideTraffic::HistoryOnly);
        let h = m.bhr_of_slide(&s);
        let p = c.tage.lookup(s.terminal().pc, &h, USER).prediction;
        assert!(p.taken);
        tagged += u32::from(p.provider >= 1);
        train_mistrain(&mut c, &s, false, 16, USER, SlideTraffic::HistoryOnly);
        assert!(!c.tage.lookup(s.terminal().pc, &h, USER).prediction.taken);
    }
    assert!(tagged as f64 / n as f64 > 0.99, "{tagged}/{n}");
}

#[test]
fn zero_rounds_change_nothing() {
    let (m, cfg) = firestorm();
    let mut c = core(&m, cfg, 0);
    let s = random_slide(&mut ChaCha8Rng::seed_from_u64(1), &m);
    train_mistrain(&mut c, &s, true, 0, USER, SlideTraffic::Predicted);
    assert_eq!(c.tage.updates(), 0);
    assert!(c.tage.occupancy().iter().all(|&o| o == 0));
}

#[test]
fn lpc_trains_both_twins() {
    for (m, cfg) in [firestorm(), (Arc::new(BhrModel::icestorm()), TageConfig::icestorm())] {
        for k in 0..200u64 {
            let taken = k % 2 == 1;
            let mut c = core(&m, cfg.clone(), k);
            let s = random_slide(&mut ChaCha8Rng::seed_from_u64(k), &m);
            lpc_primitive(&mut c, &s, taken, 64, USER, SlideTraffic::HistoryOnly).unwrap();
            let h = m.bhr_of_slide(&s);
            let pc = s.terminal().pc;
            assert_eq!(c.tage.lookup(pc, &h, USER).prediction.taken, taken);
            assert_eq!(c.tage.lookup(pc, &h.with_msb_flipped(), USER).prediction.taken, !taken);
        }
    }
}

#[test]
fn lpc_reaches_last_table_on_every_tiny_history() {
    let m = Arc::new(tiny_model());
    let cfg = TageConfig::tiny();
    for hv in 0..256u64 {
        for pcb in 0..16u64 {
            let target = BhrState::from_words(8, &[hv]);
            let s = slide_with_history(&m, &target, 1 << 40 | pcb << 2).unwrap();
            let mut c = core(&m, cfg.clone(), hv << 4 | pcb);
            lpc_primitive(&mut c, &s, true, 64, USER, SlideTraffic::HistoryOnly).unwrap();
            let p = c.tage.lookup(s.terminal().pc, &target, USER).prediction;
            assert_eq!((p.provider, p.taken), (2, true), "history {hv:#04x} pc bits {pcb}");
        }
    }
}

#[test]
fn lpc_rejects_short_slides() {
    let (m, cfg) = firestorm();
    let mut c = core(&m, cfg, 0);
    let s = BranchSlide::new(vec![BranchEvent::conditional(0x40, 1, true).unwrap()]).unwrap();
    assert!(lpc_primitive(&mut c, &s, true, 64, USER, SlideTraffic::HistoryOnly).is_err());
}

#[test]
fn mirrored_attacker_always_succeeds() {
    let (m, cfg) = desk();
    for depth in 1..=4 {
        let mut c = core(&m, cfg.clone(), depth as u64);
        let v = victim(&m, depth, 40 + depth as u64);
        setup_victim(&mut c, &v, USER).unwrap();
        lpc_primitive(&mut c, &v.slide, !v.correct, 64, USER, SlideTraffic::HistoryOnly).unwrap();
        let h = m.bhr_of_slide(&v.slide);
        assert_eq!(c.tage.lookup(v.pc(), &h, USER).prediction.taken, !v.correct, "depth {depth}");
    }
}

#[test]
fn trial_restores_the_victim_each_time() {
    let (m, cfg) = desk();
    let mut c = core(&m, cfg.clone(), 0);
    let v = victim(&m, 2, 3);
    let h = m.bhr_of_slide(&v.slide);
    let tc = TrialConfig::new(SearchMode::BruteForce, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        trial(&mut c, &v, &tc, &mut rng, USER, USER).unwrap();
        setup_victim(&mut c, &v, USER).unwrap();
        assert_eq!(c.tage.entry_state(2, v.pc(), &h, USER), Some((0, cfg.max_useful())));
        assert_eq!(c.tage.provider_of(v.pc(), &h, USER), 2);
    }
}

#[test]
fn lpc_success_matches_last_table_alias() {
    let (m, cfg) = desk();
    let v = victim(&m, 4, 5);
    let tc = TrialConfig { reset: ResetPolicy::Full, ..TrialConfig::new(SearchMode::Lpc, 6) };
    let mut c = core(&m, cfg, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5000 {
        let o = trial(&mut c, &v, &tc, &mut rng, USER, USER).unwrap();
        assert_eq!(o.success, o.last_component_alias);
    }
}

#[test]
fn empty_search_reports_nothing() {
    let (m, cfg) = desk();
    let v = victim(&m, 1, 1);
    let r = run_search(&cfg, m, &v, &TrialConfig::new(SearchMode::Lpc, 0), 0, USER, USER).unwrap();
    assert_eq!((r.trials, r.successes), (0, 0));
}

#[test]
fn search_rejects_short_training() {
    let (m, cfg) = desk();
    let v = victim(&m, 1, 1);
    let tc = TrialConfig { training_rounds: 15, ..TrialConfig::new(SearchMode::BruteForce, 0) };
    assert!(matches!(run_search(&cfg, m, &v, &tc, 10, USER, USER), Err(HarnessError::InvalidTrial(_))));
}

#[test]
fn search_totals_do_not_depend_on_thread_count() {
    let (m, cfg) = desk();
    let v = victim(&m, 4, 2);
    let tc = TrialConfig { shards: 4, reset: ResetPolicy::Full, ..TrialConfig::new(SearchMode::Lpc, 99) };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_search(&cfg, m.clone(), &v, &tc, 20_000, USER, USER).unwrap())
    };
    let one = run(1);
    assert_eq!(one.trials, 20_000);
    assert_eq!(one, run(3));
    assert_eq!(one.oracle_disagreements, 0);
}

#[test]
fn privilege_isolation_blocks_cross_level_lpc() {
    let m = Arc::new(BhrModel::icestorm());
    let cfg = TageConfig::icestorm();
    let v = victim(&m, cfg.num_tables, 3);
    let tc = TrialConfig::new(SearchMode::Lpc, 1);
    let r = run_search(&cfg, m, &v, &tc, 20_000, USER, SecurityContext::kernel()).unwrap();
    assert_eq!(r.successes, 0);
}

fn pair(model: &BhrModel, seed: u64, outcome: bool) -> BranchPair {
    BranchPair { slide: random_slide(&mut ChaCha8Rng::seed_from_u64(seed), model), outcome }
}

#[test]
fn alias_detector_signatures() {
    let (m, cfg) = firestorm();
    let a = pair(&m, 1, true);
    let flipped = BranchPair { outcome: false, ..a.clone() };
    let r = aliasing_detect(&mut core(&m, cfg.clone(), 0), &a, &flipped, &AliasConfig::default(), USER);
    assert!((r.rate - 0.25).abs() < 0.02, "{}", r.rate);
    assert_eq!(r.class, AliasClass::Aliased);

    let b = pair(&m, 2, false);
    let r = aliasing_detect(&mut core(&m, cfg.clone(), 0), &a, &b, &AliasConfig::default(), USER);
    assert!(r.rate <= 0.02, "{}", r.rate);
    assert_eq!(r.class, AliasClass::NotAliased);

    let r = aliasing_detect(&mut core(&m, cfg, 0), &a, &a, &AliasConfig::default(), USER);
    assert_eq!(r.rate, 0.0);
}

#[test]
fn alias_bands() {
    assert_eq!(AliasClass::from_rate(0.25), AliasClass::Aliased);
    assert_eq!(AliasClass::from_rate(0.02), AliasClass::NotAliased);
    assert_eq!(AliasClass::from_rate(0.1), AliasClass::Indeterminate);
    assert_eq!(AliasClass::from_rate(0.31), AliasClass::Indeterminate);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn derived_seeds_differ(seed: u64, a in 0u64..1000, b in 0u64..1000) {
        prop_assume!(a != b);
        prop_assert_ne!(derive_seed(seed, a), derive_seed(seed, b));
    }

    #[test]
    fn same_seed_same_report(seed: u64, depth in 1usize..=4, lpc: bool) {
        let (m, cfg) = desk();
        let v = victim(&m, depth, seed);
        let mode = if lpc { SearchMode::Lpc } else { SearchMode::BruteForce };
        let tc = TrialConfig { shards: 2, ..TrialConfig::new(mode, seed) };
        let a = run_search(&cfg, m.clone(), &v, &tc, 300, USER, USER).unwrap();
        let b = run_search(&cfg, m, &v, &tc, 300, USER, USER).unwrap();
        prop_assert_eq!(a, b);
    }
}
