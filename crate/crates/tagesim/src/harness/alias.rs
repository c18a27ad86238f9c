use serde::{Deserialize, Serialize};

use crate::bhr::{BhrState, BranchSlide};
use crate::tage::SecurityContext;

use super::{Core, SlideTraffic};

/// A slide whose terminal branch runs with a fixed outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchPair {
    pub slide: BranchSlide,
    pub outcome: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AliasClass {
    Aliased,
    NotAliased,
    Indeterminate,
}

impl AliasClass {
    /// Aliased within [20%, 30%], not aliased at or below 2%.
    pub fn from_rate(rate: f64) -> Self {
        if (0.20..=0.30).contains(&rate) {
            AliasClass::Aliased
        } else if rate <= 0.02 {
            AliasClass::NotAliased
        } else {
            AliasClass::Indeterminate
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AliasClass::Aliased => "aliased",
            AliasClass::NotAliased => "not-aliased",
            AliasClass::Indeterminate => "indeterminate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasConfig {
    /// Measured alternations.
    pub rounds: u32,
    /// Alternations run before measuring.
    pub warmup: u32,
    pub traffic: SlideTraffic,
}

impl Default for AliasConfig {
    fn default() -> Self {
        AliasConfig { rounds: 64, warmup: 8, traffic: SlideTraffic::HistoryOnly }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AliasReport {
    pub rate: f64,
    pub class: AliasClass,
}

/// Alternates blocks of `2^(c+1)` executions of each pair and reports the
/// misprediction rate of the two terminal branches.
pub fn aliasing_detect(
    core: &mut Core,
    a: &BranchPair,
    b: &BranchPair,
    cfg: &AliasConfig,
    ctx: SecurityContext,
) -> AliasReport {
    let block = 1u32 << (core.tage.config().counter_bits + 1);
    let ha = core.model.bhr_of_slide(&a.slide);
    let hb = core.model.bhr_of_slide(&b.slide);
    let run = |core: &mut Core, p: &BranchPair, h: &BhrState| -> u64 {
        let t = p.slide.terminal().with_outcome(p.outcome);
        let mut miss = 0;
        for _ in 0..block {
            core.enter_slide(&p.slide, h, cfg.traffic, ctx);
            miss += u64::from(core.step(&t, ctx) == Some(true));
        }
        miss
    };
    for _ in 0..cfg.warmup {
        run(core, a, &ha);
        run(core, b, &hb);
    }
    let mut miss = 0;
    for _ in 0..cfg.rounds {
        miss += run(core, a, &ha);
        miss += run(core, b, &hb);
    }
    let total = 2 * block as u64 * cfg.rounds as u64;
    let rate = if total == 0 { 0.0 } else { miss as f64 / total as f64 };
    AliasReport { rate, class: AliasClass::from_rate(rate) }
}
