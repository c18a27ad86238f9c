use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bhr::{Attribute, BhrModel, BhrState, BranchEvent, BranchKind, NotTakenPolicy, ADDR_MASK};
use crate::harness::{derive_seed, Core};
use crate::tage::{SecurityContext, TagePredictor};

use super::{ExperimentError, Microarch, Table};

/// Spy verdict: a distinguishing attribute leaves the spy at about 0%.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Effect,
    NoEffect,
    Indeterminate,
    /// The bit's effect is unknown (address bit 31).
    Undetermined,
}

impl Classification {
    /// At most 2% is an effect; 20% to 30% is no effect.
    pub fn from_rate(rate: f64) -> Self {
        if rate <= 0.02 {
            Classification::Effect
        } else if (0.20..=0.30).contains(&rate) {
            Classification::NoEffect
        } else {
            Classification::Indeterminate
        }
    }

    pub fn from_expected(effect: bool) -> Self {
        if effect {
            Classification::Effect
        } else {
            Classification::NoEffect
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Classification::Effect => "effect",
            Classification::NoEffect => "no-effect",
            Classification::Indeterminate => "indeterminate",
            Classification::Undetermined => "undetermined",
        }
    }
}

/// Branches that differ between the two paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathSetup {
    pub a: Vec<BranchEvent>,
    pub b: Vec<BranchEvent>,
}

/// Two paths sharing everything except the setup branches. The spy takes
/// the branch on path A and falls through on path B; the shadow repeats
/// the spy's outcome right after the reset slide.
#[derive(Debug, Clone)]
pub struct TwoPathExperiment {
    pub reset: Vec<BranchEvent>,
    /// Shared branches executed before the setup.
    pub prefix: Vec<BranchEvent>,
    pub setup: PathSetup,
    pub buffer: Vec<BranchEvent>,
    pub spy: BranchEvent,
    pub shadow: BranchEvent,
    pub executions_per_path: u32,
    pub warmup_switches: u32,
    pub measured_switches: u32,
}

impl TwoPathExperiment {
    /// Runs on `core` and returns `(spy rate, shadow rate)`.
    pub fn run(&self, core: &mut Core, ctx: SecurityContext) -> (f64, f64) {
        let mut reset_h = core.model.zero_state();
        for e in &self.reset {
            core.model.apply(&mut reset_h, e);
        }
        let (mut spy_miss, mut shadow_miss, mut n) = (0u64, 0u64, 0u64);
        for sw in 0..self.warmup_switches + self.measured_switches {
            let path_a = sw % 2 == 0;
            let setup = if path_a { &self.setup.a } else { &self.setup.b };
            for _ in 0..self.executions_per_path {
                core.bhr = reset_h;
                core.run(&self.prefix, ctx);
                core.run(setup, ctx);
                core.run(&self.buffer, ctx);
                let m = core.step(&self.spy.with_outcome(path_a), ctx) == Some(true);
                core.bhr = reset_h;
                let ms = core.step(&self.shadow.with_outcome(path_a), ctx) == Some(true);
                if sw >= self.warmup_switches {
                    spy_miss += u64::from(m);
                    shadow_miss += u64::from(ms);
                    n += 1;
                }
            }
        }
        let n = n.max(1) as f64;
        (spy_miss as f64 / n, shadow_miss as f64 / n)
    }
}

/// One measured parameter point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario: &'static str,
    pub preset: String,
    pub attribute: Option<Attribute>,
    pub params: Vec<(&'static str, i64)>,
    pub spy_rate: f64,
    pub shadow_rate: f64,
    pub classification: Classification,
}

impl ResultRow {
    pub fn param(&self, name: &str) -> Option<i64> {
        self.params.iter().find(|(k, _)| *k == name).map(|&(_, v)| v)
    }
}

/// CSV view of two-path rows.
pub fn rows_table(rows: &[ResultRow]) -> Table {
    let mut header = vec!["scenario", "preset", "attribute"];
    if let Some(r) = rows.first() {
        header.extend(r.params.iter().map(|(k, _)| *k));
    }
    header.extend(["spy_rate", "shadow_rate", "classification"]);
    let mut t = Table::new(&header);
    for r in rows {
        let mut cells = vec![
            r.scenario.to_string(),
            r.preset.clone(),
            r.attribute.map_or_else(String::new, |a| a.name().to_string()),
        ];
        cells.extend(r.params.iter().map(|(_, v)| v.to_string()));
        cells.push(super::fmt_sig6(r.spy_rate));
        cells.push(super::fmt_sig6(r.shadow_rate));
        cells.push(r.classification.name().to_string());
        t.indeterminate |= r.classification == Classification::Indeterminate;
        t.push(cells);
    }
    t
}

/// Whether toggling `bit` of `attr` is visible in the history `h` shifts later.
pub fn expected_effect(model: &BhrModel, attr: Attribute, bit: u32, h: usize) -> bool {
    let w = model.bit_word(attr, bit);
    (0..128).any(|p| w >> p & 1 == 1 && p + h < model.width())
}

/// Whether toggling `bit` in the first of two back-to-back branches and
/// `bit + s` in the second leaves the history unchanged.
pub fn expected_cancellation(model: &BhrModel, attr: Attribute, bit: u32, s: u32) -> bool {
    let w1 = model.bit_word(attr, bit);
    let w2 = model.bit_word(attr, bit + s);
    let mut a = BhrState::zero(model.width());
    a.shift_xor(w1);
    a.shift_xor(w2);
    a.is_zero()
}

/// Random branch addresses with bit 31 clear.
fn addr(rng: &mut ChaCha8Rng) -> u64 {
    rng.gen::<u64>() & ADDR_MASK & !3 & !(1 << 31)
}

fn imm(rng: &mut ChaCha8Rng) -> i32 {
    rng.gen_range(BranchEvent::IMM_MIN..=BranchEvent::IMM_MAX)
}

fn sext19(v: u64) -> i32 {
    ((v << 45) as i64 >> 45) as i32
}

/// Fixed branches shared by every point of one scenario run.
struct Fixture {
    rng: ChaCha8Rng,
    reset: Vec<BranchEvent>,
    spy: BranchEvent,
    shadow: BranchEvent,
}

impl Fixture {
    fn new(arch: &Microarch, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xf1));
        let reset = (0..arch.history_length())
            .map(|_| BranchEvent::indirect(addr(&mut rng), addr(&mut rng)).expect("aligned"))
            .collect();
        let spy = BranchEvent::conditional(addr(&mut rng), imm(&mut rng), true).expect("aligned");
        let shadow = BranchEvent::conditional(addr(&mut rng), imm(&mut rng), true).expect("aligned");
        Fixture { rng, reset, spy, shadow }
    }

    fn branch(&mut self, kind: BranchKind) -> BranchEvent {
        let rng = &mut self.rng;
        match kind {
            BranchKind::IndirectTaken => BranchEvent::indirect(addr(rng), addr(rng)),
            _ => BranchEvent::conditional(addr(rng), imm(rng), true),
        }
        .expect("aligned")
    }

    fn buffer(&mut self, kind: BranchKind, n: usize) -> Vec<BranchEvent> {
        (0..n).map(|_| self.branch(kind)).collect()
    }

    fn experiment(&self, setup: PathSetup, buffer: Vec<BranchEvent>) -> TwoPathExperiment {
        TwoPathExperiment {
            reset: self.reset.clone(),
            prefix: Vec::new(),
            setup,
            buffer,
            spy: self.spy,
            shadow: self.shadow,
            executions_per_path: 16,
            warmup_switches: 16,
            measured_switches: 64,
        }
    }
}

/// The same branch with source bit `bit` of `attr` toggled.
fn toggled(base: &BranchEvent, attr: Attribute, bit: u32) -> Result<BranchEvent, ExperimentError> {
    let m = 1u64 << bit;
    let e = match attr {
        Attribute::CondPc => BranchEvent::conditional(base.pc ^ m, base.imm, true),
        Attribute::CondImm => BranchEvent::conditional(base.pc, sext19(base.imm_bits() ^ m), true),
        Attribute::IndirPc => BranchEvent::indirect(base.pc ^ m, base.target),
        Attribute::IndirTarget => BranchEvent::indirect(base.pc, base.target ^ m),
    }?;
    Ok(e)
}

fn check_bits(attr: Attribute, bits: &RangeInclusive<u32>) -> Result<(), ExperimentError> {
    if bits.is_empty() || *bits.start() < attr.min_bit() || *bits.end() > attr.max_bit() {
        return Err(ExperimentError::Invalid(format!(
            "bit range {}..={} outside the modeled range {}..={} for {attr}",
            bits.start(),
            bits.end(),
            attr.min_bit(),
            attr.max_bit()
        )));
    }
    Ok(())
}

fn run_points<T, F>(n: usize, parallel: bool, f: F) -> Result<Vec<T>, ExperimentError>
where
    T: Send,
    F: Fn(usize) -> Result<T, ExperimentError> + Sync + Send,
{
    if parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

/// Independent predictors each point is measured on.
const REPLICAS: u64 = 3;

/// Median spy and shadow rates over predictors with independent hash and
/// allocation seeds, which masks rare set conflicts in any one of them.
fn measure(arch: &Microarch, exp: &TwoPathExperiment, seed: u64, point: usize) -> Result<(f64, f64), ExperimentError> {
    let mut spy = Vec::with_capacity(REPLICAS as usize);
    let mut shadow = Vec::with_capacity(REPLICAS as usize);
    for r in 0..REPLICAS {
        let s = derive_seed(derive_seed(seed, point as u64), r);
        let mut cfg = arch.tage.clone();
        cfg.hash_seed ^= derive_seed(s, 0x4a5);
        let mut core = Core::new(TagePredictor::new(cfg, s)?, arch.model.clone())?;
        let (a, b) = exp.run(&mut core, SecurityContext::default());
        spy.push(a);
        shadow.push(b);
    }
    Ok((median(&mut spy), median(&mut shadow)))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn classify(attr: Attribute, bit: u32, rate: f64) -> Classification {
    if attr != Attribute::CondImm && bit == 31 {
        Classification::Undetermined
    } else {
        Classification::from_rate(rate)
    }
}

fn sweep(
    arch: &Microarch,
    scenario: &'static str,
    attr: Attribute,
    points: &[(u32, usize)],
    seed: u64,
    parallel: bool,
) -> Result<Vec<ResultRow>, ExperimentError> {
    let mut fx = Fixture::new(arch, seed);
    let kind = attr.branch_kind();
    let base = fx.branch(kind);
    let max_h = points.iter().map(|p| p.1).max().unwrap_or(0);
    let pool = fx.buffer(kind, max_h);
    run_points(points.len(), parallel, |k| {
        let (bit, h) = points[k];
        let setup = PathSetup { a: vec![base], b: vec![toggled(&base, attr, bit)?] };
        let exp = fx.experiment(setup, pool[..h].to_vec());
        let (spy, shadow) = measure(arch, &exp, seed, k)?;
        Ok(ResultRow {
            scenario,
            preset: arch.name.clone(),
            attribute: Some(attr),
            params: vec![("bit", bit as i64), ("h", h as i64)],
            spy_rate: spy,
            shadow_rate: shadow,
            classification: classify(attr, bit, spy),
        })
    })
}

/// Toggles each bit of `attr` in one setup branch placed `h` branches
/// before the spy.
pub fn run_bit_effect(
    arch: &Microarch,
    attr: Attribute,
    bits: RangeInclusive<u32>,
    h: usize,
    seed: u64,
    parallel: bool,
) -> Result<Vec<ResultRow>, ExperimentError> {
    check_bits(attr, &bits)?;
    let points: Vec<(u32, usize)> = bits.map(|b| (b, h)).collect();
    sweep(arch, "bit-effect", attr, &points, seed, parallel)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceSweep {
    pub rows: Vec<ResultRow>,
    /// First distance without effect, when every shorter distance had one.
    pub cutoff: Option<usize>,
}

pub fn run_distance_sweep(
    arch: &Microarch,
    attr: Attribute,
    bit: u32,
    hs: RangeInclusive<usize>,
    seed: u64,
    parallel: bool,
) -> Result<DistanceSweep, ExperimentError> {
    check_bits(attr, &(bit..=bit))?;
    let points: Vec<(u32, usize)> = hs.map(|h| (bit, h)).collect();
    let rows = sweep(arch, "distance-sweep", attr, &points, seed, parallel)?;
    let cutoff = rows
        .iter()
        .position(|r| r.classification != Classification::Effect)
        .filter(|&k| k > 0 && rows[k].classification == Classification::NoEffect)
        .map(|k| rows[k].param("h").unwrap() as usize);
    Ok(DistanceSweep { rows, cutoff })
}

/// Two back-to-back setup branches: the first toggles `bit`, the second
/// `bit + s`. The spy follows immediately.
pub fn run_update_policy(
    arch: &Microarch,
    attr: Attribute,
    s: u32,
    bits: RangeInclusive<u32>,
    seed: u64,
    parallel: bool,
) -> Result<Vec<ResultRow>, ExperimentError> {
    if attr == Attribute::IndirPc {
        return Err(ExperimentError::Invalid("update-policy supports cond-pc, cond-imm and indir-target".into()));
    }
    if s == 0 {
        return Err(ExperimentError::Invalid("shift must be positive".into()));
    }
    check_bits(attr, &bits)?;
    check_bits(attr, &(*bits.end() + s..=*bits.end() + s))?;
    let mut fx = Fixture::new(arch, seed);
    let kind = attr.branch_kind();
    let (b1, b2) = (fx.branch(kind), fx.branch(kind));
    let bits: Vec<u32> = bits.collect();
    run_points(bits.len(), parallel, |k| {
        let i = bits[k];
        let setup = PathSetup { a: vec![b1, b2], b: vec![toggled(&b1, attr, i)?, toggled(&b2, attr, i + s)?] };
        let exp = fx.experiment(setup, Vec::new());
        let (spy, shadow) = measure(arch, &exp, seed, k)?;
        Ok(ResultRow {
            scenario: "update-policy",
            preset: arch.name.clone(),
            attribute: Some(attr),
            params: vec![("bit", i as i64), ("shift", s as i64)],
            spy_rate: spy,
            shadow_rate: shadow,
            classification: classify(attr, if i + s == 31 { 31 } else { i }, spy),
        })
    })
}

/// A switch branch whose outcome equals the spy's follows `HL` taken
/// conditionals spaced `2^o` bytes apart with identical low address bits.
/// With `control`, non-taken branches leave the history untouched.
pub fn run_outcome_effect(
    arch: &Microarch,
    offsets: RangeInclusive<u32>,
    control: bool,
    seed: u64,
    parallel: bool,
) -> Result<Vec<ResultRow>, ExperimentError> {
    let hl = arch.history_length() as u64;
    if *offsets.start() < 32 || offsets.is_empty() {
        return Err(ExperimentError::Invalid("offsets must start at 32 or above".into()));
    }
    if (hl + 1).checked_shl(*offsets.end()).map_or(true, |v| v > ADDR_MASK) {
        return Err(ExperimentError::Invalid("sparse slide does not fit in 48-bit addresses".into()));
    }
    let arch = if control {
        let model = (*arch.model).clone().with_not_taken_policy(NotTakenPolicy::Ignore);
        Microarch::new(&arch.name, model, arch.tage.clone())?
    } else {
        arch.clone()
    };
    let fx = Fixture::new(&arch, seed);
    let low = 0x10u64;
    let offsets: Vec<u32> = offsets.collect();
    run_points(offsets.len(), parallel, |k| {
        let o = offsets[k];
        let prefix =
            (1..=hl).map(|j| BranchEvent::conditional(j << o | low, 1, true)).collect::<Result<Vec<_>, _>>()?;
        let switch = BranchEvent::conditional((hl + 1) << o | low, 1, true)?;
        let setup = PathSetup { a: vec![switch], b: vec![switch.with_outcome(false)] };
        let mut exp = fx.experiment(setup, Vec::new());
        exp.prefix = prefix;
        let (spy, shadow) = measure(&arch, &exp, seed, k)?;
        Ok(ResultRow {
            scenario: "outcome-effect",
            preset: arch.name.clone(),
            attribute: None,
            params: vec![("offset", o as i64), ("control", control as i64)],
            spy_rate: spy,
            shadow_rate: shadow,
            classification: Classification::from_rate(spy),
        })
    })
}
