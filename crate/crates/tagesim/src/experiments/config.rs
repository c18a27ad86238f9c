use std::fmt;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bhr::{Attribute, AttributeMaskSet, BhrConfig, BhrModel};
use crate::harness::{ResetPolicy, SearchMode, SlideTraffic, TrialConfig};
use crate::tage::{Isolation, SecurityContext, TageConfig};

use super::campaign::{
    run_alias_detect, run_estimate, run_lpc_compare, run_search_campaign, AliasPairKind, CampaignRow, LpcCompareRow,
};
use super::probes::{run_counter_probe, run_isolation, Crossing, IsolationRow};
use super::two_path::{rows_table, run_bit_effect, run_distance_sweep, run_outcome_effect, run_update_policy};
use super::{ExperimentError, Microarch, Preset, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioId {
    BitEffect,
    DistanceSweep,
    UpdatePolicy,
    OutcomeEffect,
    CounterProbe,
    Search,
    LpcCompare,
    Isolation,
    AliasDetect,
    Estimate,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 10] = [
        ScenarioId::BitEffect,
        ScenarioId::DistanceSweep,
        ScenarioId::UpdatePolicy,
        ScenarioId::OutcomeEffect,
        ScenarioId::CounterProbe,
        ScenarioId::Search,
        ScenarioId::LpcCompare,
        ScenarioId::Isolation,
        ScenarioId::AliasDetect,
        ScenarioId::Estimate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::BitEffect => "bit-effect",
            ScenarioId::DistanceSweep => "distance-sweep",
            ScenarioId::UpdatePolicy => "update-policy",
            ScenarioId::OutcomeEffect => "outcome-effect",
            ScenarioId::CounterProbe => "counter-probe",
            ScenarioId::Search => "search",
            ScenarioId::LpcCompare => "lpc-compare",
            ScenarioId::Isolation => "isolation",
            ScenarioId::AliasDetect => "alias-detect",
            ScenarioId::Estimate => "estimate",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioId {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| ExperimentError::Invalid(format!("unknown scenario '{s}'")))
    }
}

/// Fully specified core for the `custom` preset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomArch {
    pub bhr: BhrConfig,
    pub masks: AttributeMaskSet,
    pub tage: TageConfig,
}

/// Predictor sizing applied on top of the preset's history model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TagePreset {
    /// The preset's own sizing.
    #[default]
    Native,
    /// Four tables of 64 sets with 6-bit tags, spanning the full history.
    Desk,
}

/// One scenario run, read from a JSON document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Must match the scenario named on the command line when present.
    #[serde(default)]
    pub scenario: Option<ScenarioId>,
    #[serde(default)]
    pub preset: Option<Preset>,
    #[serde(default)]
    pub custom: Option<CustomArch>,
    #[serde(default)]
    pub tage_preset: TagePreset,
    /// Field-level overrides merged into the predictor config.
    #[serde(default)]
    pub tage: Option<serde_json::Map<String, serde_json::Value>>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub parallel: bool,
    /// Scenario-specific parameters; unknown keys are rejected.
    #[serde(default)]
    pub params: Option<serde_json::Value>,
}

impl ScenarioConfig {
    pub fn from_json(s: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(s).map_err(|e| ExperimentError::Invalid(format!("config: {e}")))
    }

    pub fn microarch(&self) -> Result<Microarch, ExperimentError> {
        let preset = self.preset.unwrap_or(Preset::Firestorm);
        let arch = match (preset, &self.custom) {
            (Preset::Custom, Some(c)) => {
                let model = BhrModel::new(c.bhr, c.masks)?;
                Microarch::new("custom", model, c.tage.clone())?
            }
            (Preset::Custom, None) => {
                return Err(ExperimentError::Invalid("preset 'custom' requires a 'custom' section".into()))
            }
            (p, None) => Microarch::preset(p)?,
            (_, Some(_)) => {
                return Err(ExperimentError::Invalid("'custom' section is only valid with preset 'custom'".into()))
            }
        };
        let mut tage = match self.tage_preset {
            TagePreset::Native => arch.tage.clone(),
            TagePreset::Desk => TageConfig { isolation: arch.tage.isolation, ..TageConfig::desk(arch.model.width()) },
        };
        if let Some(over) = &self.tage {
            let mut v = serde_json::to_value(&tage).expect("config serializes");
            let obj = v.as_object_mut().expect("config is an object");
            for (k, val) in over {
                obj.insert(k.clone(), val.clone());
            }
            tage = serde_json::from_value(v).map_err(|e| ExperimentError::Invalid(format!("tage override: {e}")))?;
        }
        arch.with_tage(tage)
    }

    fn params<P: DeserializeOwned + Default>(&self) -> Result<P, ExperimentError> {
        match &self.params {
            None => Ok(P::default()),
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| ExperimentError::Invalid(format!("params: {e}"))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct BitEffectParams {
    attribute: Attribute,
    bits: Option<[u32; 2]>,
    h: usize,
}

impl Default for BitEffectParams {
    fn default() -> Self {
        BitEffectParams { attribute: Attribute::CondPc, bits: None, h: 0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct DistanceParams {
    attribute: Attribute,
    bit: u32,
    h: Option<[usize; 2]>,
}

impl Default for DistanceParams {
    fn default() -> Self {
        DistanceParams { attribute: Attribute::CondPc, bit: 2, h: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct UpdatePolicyParams {
    attribute: Attribute,
    shift: u32,
    bits: Option<[u32; 2]>,
}

impl Default for UpdatePolicyParams {
    fn default() -> Self {
        UpdatePolicyParams { attribute: Attribute::CondImm, shift: 1, bits: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct OutcomeParams {
    offsets: [u32; 2],
    control: bool,
}

impl Default for OutcomeParams {
    fn default() -> Self {
        OutcomeParams { offsets: [32, 40], control: false }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct CounterParams {
    n: Vec<u32>,
}

impl Default for CounterParams {
    fn default() -> Self {
        CounterParams { n: vec![8, 16, 32, 64] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum CrossParam {
    #[default]
    None,
    El,
    Process,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SearchParams {
    mode: SearchMode,
    depth: Option<usize>,
    trials: u64,
    rounds: Option<u32>,
    reset: ResetPolicy,
    traffic: SlideTraffic,
    shards: u32,
    crossing: CrossParam,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            mode: SearchMode::Lpc,
            depth: None,
            trials: 100_000,
            rounds: None,
            reset: ResetPolicy::Full,
            traffic: SlideTraffic::HistoryOnly,
            shards: 8,
            crossing: CrossParam::None,
        }
    }
}

impl SearchParams {
    fn trial_config(&self, seed: u64) -> TrialConfig {
        let mut cfg = TrialConfig::new(self.mode, seed);
        if let Some(r) = self.rounds {
            cfg.training_rounds = r;
        }
        cfg.reset = self.reset;
        cfg.traffic = self.traffic;
        cfg.shards = self.shards;
        cfg
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct LpcCompareParams {
    depths: Option<Vec<usize>>,
    trials: u64,
    rounds: Option<u32>,
    reset: ResetPolicy,
    shards: u32,
}

impl Default for LpcCompareParams {
    fn default() -> Self {
        LpcCompareParams { depths: None, trials: 100_000, rounds: None, reset: ResetPolicy::Full, shards: 8 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct IsolationParams {
    isolation: Option<Isolation>,
    crossings: Vec<Crossing>,
}

impl Default for IsolationParams {
    fn default() -> Self {
        IsolationParams { isolation: None, crossings: vec![Crossing::El, Crossing::Process] }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct AliasParams {
    pairs: usize,
    kinds: Vec<AliasPairKind>,
}

impl Default for AliasParams {
    fn default() -> Self {
        AliasParams {
            pairs: 16,
            kinds: vec![AliasPairKind::FlippedOutcome, AliasPairKind::HighAddressBits, AliasPairKind::Random],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct EstimateParams {
    observations: Vec<[u64; 2]>,
}

impl Default for EstimateParams {
    fn default() -> Self {
        EstimateParams {
            observations: vec![[1_000_000_000, 1], [650_000_000, 4], [1_100_000_000, 33], [565_000_000, 61]],
        }
    }
}

/// Result of one scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutput {
    pub table: Table,
}

impl ScenarioOutput {
    /// 0 when every row was classified, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.table.indeterminate {
            2
        } else {
            0
        }
    }
}

fn range_or<T: Copy>(r: Option<[T; 2]>, lo: T, hi: T) -> std::ops::RangeInclusive<T> {
    let [a, b] = r.unwrap_or([lo, hi]);
    a..=b
}

/// Runs `id` under `cfg`; `seed` takes precedence over the config's seed.
pub fn run_scenario(
    id: ScenarioId,
    cfg: &ScenarioConfig,
    seed: Option<u64>,
) -> Result<ScenarioOutput, ExperimentError> {
    if let Some(s) = cfg.scenario {
        if s != id {
            return Err(ExperimentError::Invalid(format!("config is for scenario '{s}', not '{id}'")));
        }
    }
    let seed = seed.or(cfg.seed).unwrap_or(0);
    let par = cfg.parallel;
    let table = match id {
        ScenarioId::Estimate => {
            let p: EstimateParams = cfg.params()?;
            let obs: Vec<(u64, u64)> = p.observations.iter().map(|&[n, k]| (n, k)).collect();
            run_estimate(&obs)?
        }
        _ => {
            let arch = cfg.microarch()?;
            run_arch_scenario(id, cfg, &arch, seed, par)?
        }
    };
    Ok(ScenarioOutput { table })
}

fn run_arch_scenario(
    id: ScenarioId,
    cfg: &ScenarioConfig,
    arch: &Microarch,
    seed: u64,
    par: bool,
) -> Result<Table, ExperimentError> {
    let hl = arch.history_length();
    let t = arch.tage.num_tables;
    Ok(match id {
        ScenarioId::BitEffect => {
            let p: BitEffectParams = cfg.params()?;
            let a = p.attribute;
            rows_table(&run_bit_effect(arch, a, range_or(p.bits, a.min_bit(), a.max_bit()), p.h, seed, par)?)
        }
        ScenarioId::DistanceSweep => {
            let p: DistanceParams = cfg.params()?;
            let sweep = run_distance_sweep(arch, p.attribute, p.bit, range_or(p.h, 0, hl + 2), seed, par)?;
            let mut table = rows_table(&sweep.rows);
            table.header.push("cutoff".into());
            let cutoff = sweep.cutoff.map_or_else(String::new, |c| c.to_string());
            for r in &mut table.rows {
                r.push(cutoff.clone());
            }
            table
        }
        ScenarioId::UpdatePolicy => {
            let p: UpdatePolicyParams = cfg.params()?;
            let a = p.attribute;
            let hi = a.max_bit().saturating_sub(p.shift);
            rows_table(&run_update_policy(arch, a, p.shift, range_or(p.bits, a.min_bit(), hi), seed, par)?)
        }
        ScenarioId::OutcomeEffect => {
            let p: OutcomeParams = cfg.params()?;
            rows_table(&run_outcome_effect(arch, p.offsets[0]..=p.offsets[1], p.control, seed, par)?)
        }
        ScenarioId::CounterProbe => {
            let p: CounterParams = cfg.params()?;
            run_counter_probe(arch, &p.n, seed, par)?.table(&arch.name)
        }
        ScenarioId::Search => {
            let p: SearchParams = cfg.params()?;
            let (ctx_a, ctx_v) = match p.crossing {
                CrossParam::None => (SecurityContext::default(), SecurityContext::default()),
                CrossParam::El => (SecurityContext::user(1), SecurityContext::kernel()),
                CrossParam::Process => (SecurityContext::user(1), SecurityContext::user(2)),
            };
            let row = run_search_campaign(arch, &p.trial_config(seed), p.depth.unwrap_or(t), p.trials, ctx_a, ctx_v)?;
            CampaignRow::table(&[row])
        }
        ScenarioId::LpcCompare => {
            let p: LpcCompareParams = cfg.params()?;
            let base = SearchParams {
                mode: SearchMode::Lpc,
                rounds: p.rounds,
                reset: p.reset,
                shards: p.shards,
                ..SearchParams::default()
            }
            .trial_config(seed);
            let depths = p.depths.unwrap_or_else(|| (1..t).collect());
            LpcCompareRow::table(&run_lpc_compare(arch, &base, &depths, p.trials)?)
        }
        ScenarioId::Isolation => {
            let p: IsolationParams = cfg.params()?;
            let iso = p.isolation.unwrap_or(arch.tage.isolation);
            let rows = p.crossings.iter().map(|&c| run_isolation(arch, iso, c, seed)).collect::<Result<Vec<_>, _>>()?;
            IsolationRow::table(&rows)
        }
        ScenarioId::AliasDetect => {
            let p: AliasParams = cfg.params()?;
            run_alias_detect(arch, &p.kinds, p.pairs, seed, par)?
        }
        ScenarioId::Estimate => unreachable!("handled without a core"),
    })
}
