use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::harness::{
    aliasing_detect, derive_seed, random_slide, run_search, AliasClass, AliasConfig, BranchPair, Core, SearchMode,
    SearchReport, TrialConfig, VictimSpec,
};
use crate::stats::{estimate_search_space, p_succ, EstimateResult};
use crate::tage::{SecurityContext, TagePredictor};

use super::{fmt_sig6, ExperimentError, Microarch, Table};

/// Victim slide drawn from the campaign seed; its branch is architecturally
/// not taken.
pub fn campaign_victim(arch: &Microarch, depth: usize, seed: u64) -> VictimSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x71c));
    VictimSpec { slide: random_slide(&mut rng, &arch.model), depth, correct: false }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignRow {
    pub preset: String,
    pub depth: usize,
    pub report: SearchReport,
    pub expected_rate: f64,
    pub estimate: Option<EstimateResult>,
}

impl CampaignRow {
    pub const HEADER: [&'static str; 13] = [
        "scenario",
        "preset",
        "mode",
        "depth",
        "seed",
        "trials",
        "successes",
        "rate",
        "expected_rate",
        "estimated_exponent",
        "chernoff_log_bound",
        "lower_bound_only",
        "oracle_disagreements",
    ];

    fn cells(&self, scenario: &str) -> Vec<String> {
        let r = &self.report;
        let (exp, bound, lower) = match &self.estimate {
            Some(e) => (e.exponent.to_string(), fmt_sig6(e.chernoff_log_bound), e.lower_bound_only.to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        vec![
            scenario.into(),
            self.preset.clone(),
            r.mode.name().into(),
            self.depth.to_string(),
            r.seed.to_string(),
            r.trials.to_string(),
            r.successes.to_string(),
            fmt_sig6(r.rate()),
            fmt_sig6(self.expected_rate),
            exp,
            bound,
            lower,
            r.oracle_disagreements.to_string(),
        ]
    }

    pub fn table(rows: &[CampaignRow]) -> Table {
        let mut t = Table::new(&Self::HEADER);
        for r in rows {
            t.push(r.cells("search"));
        }
        t
    }
}

/// Runs `trials` mistraining attempts against a victim at `depth` and
/// estimates the search space from the outcome.
pub fn run_search_campaign(
    arch: &Microarch,
    cfg: &TrialConfig,
    depth: usize,
    trials: u64,
    ctx_attacker: SecurityContext,
    ctx_victim: SecurityContext,
) -> Result<CampaignRow, ExperimentError> {
    let t = arch.tage.num_tables;
    if depth == 0 || depth > t {
        return Err(ExperimentError::Invalid(format!("victim depth {depth} outside 1..={t}")));
    }
    let victim = campaign_victim(arch, depth, cfg.rng_seed);
    let report = run_search(&arch.tage, arch.model.clone(), &victim, cfg, trials, ctx_attacker, ctx_victim)?;
    let p = arch.tage.alias_probability();
    let expected_rate = match cfg.mode {
        SearchMode::Lpc => p,
        SearchMode::BruteForce => p_succ(p, depth as u32, t as u32)?,
    };
    let estimate = if trials > 0 { Some(estimate_search_space(trials, report.successes)?) } else { None };
    Ok(CampaignRow { preset: arch.name.clone(), depth, report, expected_rate, estimate })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpcCompareRow {
    pub brute_force: CampaignRow,
    pub lpc: CampaignRow,
    /// Measured LPC over brute-force success ratio.
    pub ratio: f64,
    /// `p / p_succ(p, i, T)`.
    pub expected_ratio: f64,
}

impl LpcCompareRow {
    pub fn table(rows: &[LpcCompareRow]) -> Table {
        let mut header: Vec<&str> = CampaignRow::HEADER.to_vec();
        header.extend(["ratio", "expected_ratio"]);
        let mut t = Table::new(&header);
        for r in rows {
            for c in [&r.brute_force, &r.lpc] {
                let mut cells = c.cells("lpc-compare");
                cells.push(fmt_sig6(r.ratio));
                cells.push(fmt_sig6(r.expected_ratio));
                t.push(cells);
            }
        }
        t
    }
}

/// Brute force and LPC campaigns against the same victim, for each depth.
pub fn run_lpc_compare(
    arch: &Microarch,
    base: &TrialConfig,
    depths: &[usize],
    trials: u64,
) -> Result<Vec<LpcCompareRow>, ExperimentError> {
    let ctx = SecurityContext::default();
    depths
        .iter()
        .map(|&i| {
            let bf_cfg = TrialConfig {
                mode: SearchMode::BruteForce,
                training_rounds: TrialConfig::new(SearchMode::BruteForce, 0).training_rounds,
                ..base.clone()
            };
            let lpc_cfg = TrialConfig { mode: SearchMode::Lpc, ..base.clone() };
            let brute_force = run_search_campaign(arch, &bf_cfg, i, trials, ctx, ctx)?;
            let lpc = run_search_campaign(arch, &lpc_cfg, i, trials, ctx, ctx)?;
            let ratio = if brute_force.report.successes == 0 {
                f64::INFINITY
            } else {
                lpc.report.rate() / brute_force.report.rate()
            };
            let expected_ratio = lpc.expected_rate / brute_force.expected_rate;
            Ok(LpcCompareRow { brute_force, lpc, ratio, expected_ratio })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AliasPairKind {
    /// Same slide and branch, opposite outcomes.
    FlippedOutcome,
    /// Same slide; the branch address differs only above bit 31.
    HighAddressBits,
    /// Independent random slides.
    Random,
}

impl AliasPairKind {
    pub fn name(self) -> &'static str {
        match self {
            AliasPairKind::FlippedOutcome => "flipped-outcome",
            AliasPairKind::HighAddressBits => "high-address-bits",
            AliasPairKind::Random => "random",
        }
    }

    pub fn expected(self) -> AliasClass {
        match self {
            AliasPairKind::Random => AliasClass::NotAliased,
            _ => AliasClass::Aliased,
        }
    }
}

/// Runs the aliasing detector on `pairs` generated pairs of each kind.
pub fn run_alias_detect(
    arch: &Microarch,
    kinds: &[AliasPairKind],
    pairs: usize,
    seed: u64,
    parallel: bool,
) -> Result<Table, ExperimentError> {
    let points: Vec<(AliasPairKind, usize)> = kinds.iter().flat_map(|&k| (0..pairs).map(move |j| (k, j))).collect();
    let run = |idx: usize| -> Result<(AliasPairKind, usize, f64, AliasClass), ExperimentError> {
        let (kind, j) = points[idx];
        let s = derive_seed(seed, idx as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let slide = random_slide(&mut rng, &arch.model);
        let a = BranchPair { slide: slide.clone(), outcome: true };
        let b_slide = match kind {
            AliasPairKind::FlippedOutcome => slide,
            AliasPairKind::HighAddressBits => {
                let t = slide.terminal();
                let high = loop {
                    let h = rng.gen::<u64>() & 0xffff;
                    if h != 0 {
                        break h;
                    }
                };
                let moved = t.with_pc(t.pc ^ (high << 32));
                crate::bhr::BranchSlide::with_terminal(slide.prefix().to_vec(), moved)?
            }
            AliasPairKind::Random => random_slide(&mut rng, &arch.model),
        };
        let b = BranchPair { slide: b_slide, outcome: false };
        let tage = TagePredictor::new(arch.tage.clone(), derive_seed(s, 1))?;
        let mut core = Core::new(tage, arch.model.clone())?;
        let rep = aliasing_detect(&mut core, &a, &b, &AliasConfig::default(), SecurityContext::default());
        Ok((kind, j, rep.rate, rep.class))
    };
    let results: Vec<_> = if parallel {
        (0..points.len()).into_par_iter().map(run).collect::<Result<_, _>>()?
    } else {
        (0..points.len()).map(run).collect::<Result<_, _>>()?
    };
    let mut t = Table::new(&["scenario", "preset", "pair_kind", "pair", "rate", "classification", "expected"]);
    for (kind, j, rate, class) in results {
        if class == AliasClass::Indeterminate {
            t.indeterminate = true;
        }
        t.push(vec![
            "alias-detect".into(),
            arch.name.clone(),
            kind.name().into(),
            j.to_string(),
            fmt_sig6(rate),
            class.name().into(),
            kind.expected().name().into(),
        ]);
    }
    Ok(t)
}

/// Search-space estimate for observed `(trials, successes)` pairs.
pub fn run_estimate(observations: &[(u64, u64)]) -> Result<Table, ExperimentError> {
    let mut t = Table::new(&[
        "scenario",
        "trials",
        "successes",
        "estimated_exponent",
        "chernoff_log_bound",
        "lower_bound_only",
    ]);
    for &(n, k) in observations {
        let e = estimate_search_space(n, k)?;
        t.push(vec![
            "estimate".into(),
            n.to_string(),
            k.to_string(),
            e.exponent.to_string(),
            fmt_sig6(e.chernoff_log_bound),
            e.lower_bound_only.to_string(),
        ]);
    }
    Ok(t)
}
