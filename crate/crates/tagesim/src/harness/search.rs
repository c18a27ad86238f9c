use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bhr::{BhrModel, BhrState};
use crate::tage::{SecurityContext, TageConfig, TagePredictor};

use super::train::{lpc_rounds, setup_victim_at, train_once};
use super::{derive_seed, random_slide, Core, HarnessError, SlideTraffic, VictimSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMode {
    BruteForce,
    Lpc,
}

impl SearchMode {
    pub fn name(self) -> &'static str {
        match self {
            SearchMode::BruteForce => "brute-force",
            SearchMode::Lpc => "lpc",
        }
    }
}

/// Predictor state carried from one trial to the next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ResetPolicy {
    /// Only the victim's entries are restored; attacker pollution persists.
    #[default]
    VictimOnly,
    /// The whole predictor is cleared before the victim is restored.
    Full,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub mode: SearchMode,
    pub training_rounds: u32,
    pub rng_seed: u64,
    pub reset: ResetPolicy,
    pub traffic: SlideTraffic,
    /// Independent predictor instances the trials are split across.
    pub shards: u32,
}

impl TrialConfig {
    /// Defaults: 16 rounds for brute force, 64 for LPC, victim-only reset.
    pub fn new(mode: SearchMode, rng_seed: u64) -> Self {
        TrialConfig {
            mode,
            training_rounds: match mode {
                SearchMode::BruteForce => 16,
                SearchMode::Lpc => 64,
            },
            rng_seed,
            reset: ResetPolicy::VictimOnly,
            traffic: SlideTraffic::HistoryOnly,
            shards: 8,
        }
    }

    pub fn validate(&self, counter_bits: u32) -> Result<(), HarnessError> {
        let min = 1u32 << (counter_bits + 1);
        if self.training_rounds < min {
            return Err(HarnessError::InvalidTrial(format!(
                "training_rounds {} below 2^(c+1) = {min}",
                self.training_rounds
            )));
        }
        if self.shards == 0 {
            return Err(HarnessError::InvalidTrial("shards must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOutcome {
    pub success: bool,
    /// White-box check: attacker and victim share the last table's set and tag.
    pub last_component_alias: bool,
    /// Table providing the attacker's prediction after training.
    pub attacker_provider: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchReport {
    pub mode: SearchMode,
    pub seed: u64,
    pub trials: u64,
    pub successes: u64,
    /// Trials whose success bit differed from the last-table alias check.
    pub oracle_disagreements: u64,
    /// Trials whose attacker branch ended up served by the last table.
    pub attacker_at_last: u64,
}

impl SearchReport {
    pub fn empty(mode: SearchMode, seed: u64) -> Self {
        SearchReport { mode, seed, trials: 0, successes: 0, oracle_disagreements: 0, attacker_at_last: 0 }
    }

    pub fn merge(mut self, other: &SearchReport) -> Self {
        self.trials += other.trials;
        self.successes += other.successes;
        self.oracle_disagreements += other.oracle_disagreements;
        self.attacker_at_last += other.attacker_at_last;
        self
    }

    pub fn rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }
}

/// Victim with its history precomputed.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Prepared {
    pub pc: u64,
    pub h: BhrState,
    pub depth: usize,
    pub correct: bool,
}

impl Prepared {
    pub fn new(model: &BhrModel, v: &VictimSpec) -> Self {
        Prepared { pc: v.pc(), h: model.bhr_of_slide(&v.slide), depth: v.depth, correct: v.correct }
    }
}

/// One mistraining attempt with a fresh random slide.
pub fn trial<R: Rng + ?Sized>(
    core: &mut Core,
    victim: &VictimSpec,
    cfg: &TrialConfig,
    rng: &mut R,
    ctx_attacker: SecurityContext,
    ctx_victim: SecurityContext,
) -> Result<TrialOutcome, HarnessError> {
    let v = Prepared::new(&core.model, victim);
    trial_prepared(core, &v, cfg, rng, ctx_attacker, ctx_victim)
}

pub(crate) fn trial_prepared<R: Rng + ?Sized>(
    core: &mut Core,
    v: &Prepared,
    cfg: &TrialConfig,
    rng: &mut R,
    ctx_a: SecurityContext,
    ctx_v: SecurityContext,
) -> Result<TrialOutcome, HarnessError> {
    if cfg.reset == ResetPolicy::Full {
        core.tage.reset();
    }
    setup_victim_at(core, v.pc, &v.h, v.depth, v.correct, ctx_v)?;
    let slide = random_slide(rng, &core.model);
    let desired = !v.correct;
    let h = core.model.bhr_of_slide(&slide);
    match cfg.mode {
        SearchMode::BruteForce => {
            for _ in 0..cfg.training_rounds {
                train_once(core, &slide, &h, desired, ctx_a, cfg.traffic);
            }
        }
        SearchMode::Lpc => {
            let flipped = core.model.flip_last_bhr_bit(&slide)?;
            let hf = core.model.bhr_of_slide(&flipped);
            lpc_rounds(core, &slide, &flipped, &h, &hf, desired, cfg.training_rounds, ctx_a, cfg.traffic);
        }
    }
    let b_a = slide.terminal().pc;
    let t = core.tage.num_tables();
    let iso = core.tage.config().isolation;
    let success = core.tage.lookup(v.pc, &v.h, ctx_v).prediction.taken == desired;
    let last_component_alias = core.tage.component_hash(t, b_a, &h)? == core.tage.component_hash(t, v.pc, &v.h)?
        && ctx_a.tag(iso) == ctx_v.tag(iso);
    let attacker_provider = core.tage.provider_of(b_a, &h, ctx_a);
    Ok(TrialOutcome { success, last_component_alias, attacker_provider })
}

/// Runs `n_trials` trials split over `cfg.shards` independent predictors.
/// Totals depend only on the config, not on how shards are scheduled.
pub fn run_search(
    tage_cfg: &TageConfig,
    model: Arc<BhrModel>,
    victim: &VictimSpec,
    cfg: &TrialConfig,
    n_trials: u64,
    ctx_attacker: SecurityContext,
    ctx_victim: SecurityContext,
) -> Result<SearchReport, HarnessError> {
    cfg.validate(tage_cfg.counter_bits)?;
    let v = Prepared::new(&model, victim);
    let shards = cfg.shards as u64;
    let parts: Vec<Result<SearchReport, HarnessError>> = (0..shards)
        .into_par_iter()
        .map(|k| {
            let n = n_trials / shards + u64::from(k < n_trials % shards);
            let seed = derive_seed(cfg.rng_seed, k);
            let tage = TagePredictor::new(tage_cfg.clone(), derive_seed(seed, u64::MAX))?;
            let mut core = Core::new(tage, model.clone())?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut rep = SearchReport::empty(cfg.mode, cfg.rng_seed);
            for _ in 0..n {
                let o = trial_prepared(&mut core, &v, cfg, &mut rng, ctx_attacker, ctx_victim)?;
                rep.trials += 1;
                rep.successes += u64::from(o.success);
                rep.oracle_disagreements += u64::from(o.success != o.last_component_alias);
                rep.attacker_at_last += u64::from(o.attacker_provider == tage_cfg.num_tables);
            }
            Ok(rep)
        })
        .collect();
    let mut total = SearchReport::empty(cfg.mode, cfg.rng_seed);
    for p in parts {
        total = total.merge(&p?);
    }
    Ok(total)
}
