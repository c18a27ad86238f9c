use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bhr::{BranchEvent, ADDR_MASK};
use crate::harness::{derive_seed, Core};
use crate::tage::{Isolation, SecurityContext, TagePredictor};

use super::{fmt_sig6, ExperimentError, Microarch, Table};

fn reset_history(arch: &Microarch, rng: &mut ChaCha8Rng) -> crate::bhr::BhrState {
    let mut h = arch.model.zero_state();
    for _ in 0..arch.history_length() {
        let e = BranchEvent::indirect(rng.gen::<u64>() & ADDR_MASK & !3, rng.gen::<u64>() & ADDR_MASK & !3)
            .expect("aligned");
        arch.model.apply(&mut h, &e);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterProbe {
    /// `(N, misprediction rate)` per flip period.
    pub rows: Vec<(u32, f64)>,
    /// Counter width recovered from `rate = 2^(c-1) / N`.
    pub fitted_c: u32,
}

impl CounterProbe {
    pub fn table(&self, preset: &str) -> Table {
        let mut t = Table::new(&["scenario", "preset", "n", "rate", "expected_rate", "fitted_c"]);
        for &(n, rate) in &self.rows {
            let expected = (1u64 << (self.fitted_c - 1)) as f64 / n as f64;
            t.push(vec![
                "counter-probe".into(),
                preset.into(),
                n.to_string(),
                fmt_sig6(rate),
                fmt_sig6(expected.min(1.0)),
                self.fitted_c.to_string(),
            ]);
        }
        t
    }
}

/// One branch under a fixed history whose outcome flips every `N` runs.
pub fn run_counter_probe(
    arch: &Microarch,
    ns: &[u32],
    seed: u64,
    parallel: bool,
) -> Result<CounterProbe, ExperimentError> {
    if ns.is_empty() || ns.contains(&0) {
        return Err(ExperimentError::Invalid("flip periods must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xc0));
    let h = reset_history(arch, &mut rng);
    let pc = rng.gen::<u64>() & ADDR_MASK & !3;
    let probe = |k: usize| -> Result<(u32, f64), ExperimentError> {
        let n = ns[k];
        let tage = TagePredictor::new(arch.tage.clone(), derive_seed(seed, k as u64))?;
        let mut core = Core::new(tage, arch.model.clone())?;
        let (warm, measured) = (16u32, 64u32);
        let mut miss = 0u64;
        for flip in 0..warm + measured {
            let outcome = flip % 2 == 0;
            for _ in 0..n {
                let p = core.tage.execute(pc, &h, outcome, SecurityContext::default());
                if flip >= warm {
                    miss += u64::from(p.taken != outcome);
                }
            }
        }
        Ok((n, miss as f64 / (measured as u64 * n as u64) as f64))
    };
    let rows: Vec<(u32, f64)> = if parallel {
        (0..ns.len()).into_par_iter().map(probe).collect::<Result<_, _>>()?
    } else {
        (0..ns.len()).map(probe).collect::<Result<_, _>>()?
    };
    let k = rows.iter().map(|&(n, r)| r * n as f64).sum::<f64>() / rows.len() as f64;
    let fitted_c = (k.max(1.0).log2().round() as u32) + 1;
    Ok(CounterProbe { rows, fitted_c })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Crossing {
    /// User attacker, kernel victim.
    El,
    /// Two user processes at the same address.
    Process,
}

impl Crossing {
    pub fn name(self) -> &'static str {
        match self {
            Crossing::El => "el",
            Crossing::Process => "process",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsolationRow {
    pub preset: String,
    pub isolation: Isolation,
    pub crossing: Crossing,
    pub victim_rate: f64,
    pub mistrained: bool,
    pub isolated: bool,
}

impl IsolationRow {
    pub fn table(rows: &[IsolationRow]) -> Table {
        let mut t = Table::new(&["scenario", "preset", "isolation", "crossing", "victim_rate", "classification"]);
        for r in rows {
            let class = if r.mistrained {
                "mistrained"
            } else if r.isolated {
                "isolated"
            } else {
                t.indeterminate = true;
                "indeterminate"
            };
            let iso = serde_json::to_value(r.isolation).expect("enum serializes");
            t.push(vec![
                "isolation".into(),
                r.preset.clone(),
                iso.as_str().unwrap_or_default().to_string(),
                r.crossing.name().into(),
                fmt_sig6(r.victim_rate),
                class.into(),
            ]);
        }
        t
    }
}

/// An attacker branch sharing the victim's low 32 address bits and history
/// is trained one way; the victim then runs the other way 16 times.
pub fn run_isolation(
    arch: &Microarch,
    isolation: Isolation,
    crossing: Crossing,
    seed: u64,
) -> Result<IsolationRow, ExperimentError> {
    let mut tage_cfg = arch.tage.clone();
    tage_cfg.isolation = isolation;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x150));
    let h = reset_history(arch, &mut rng);
    let low = rng.gen::<u32>() as u64 & !3 & !(1 << 31);
    let (pc_a, pc_v, ctx_a, ctx_v) = match crossing {
        Crossing::El => (1 << 32 | low, 0xfe00 << 32 | low, SecurityContext::user(1), SecurityContext::kernel()),
        Crossing::Process => (1 << 32 | low, 1 << 32 | low, SecurityContext::user(1), SecurityContext::user(2)),
    };
    let mut tage = TagePredictor::new(tage_cfg, derive_seed(seed, 1))?;
    tage.check_width(h.width())?;
    let (warm, measured, block) = (16u32, 64u32, 16u32);
    let mut miss = 0u64;
    for round in 0..warm + measured {
        for _ in 0..block {
            tage.execute(pc_a, &h, true, ctx_a);
        }
        for _ in 0..block {
            let p = tage.execute(pc_v, &h, false, ctx_v);
            if round >= warm {
                miss += u64::from(p.taken);
            }
        }
    }
    let victim_rate = miss as f64 / (measured * block) as f64;
    Ok(IsolationRow {
        preset: arch.name.clone(),
        isolation,
        crossing,
        victim_rate,
        mistrained: (0.20..=0.30).contains(&victim_rate),
        isolated: victim_rate <= 0.02,
    })
}
