use serde::{Deserialize, Serialize};

use super::TageError;

pub const MAX_TABLES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Isolation {
    #[default]
    Off,
    PrivilegeTag,
    ProcessTag,
}

/// Whether the alternate component also learns from an outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AltUpdate {
    #[default]
    Never,
    /// Update the alternate counter while the provider's useful counter is zero.
    WhenProviderNotUseful,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TageConfig {
    pub num_tables: usize,
    pub sets_log: u32,
    #[serde(default)]
    pub ways_log: u32,
    pub tag_bits: u32,
    pub counter_bits: u32,
    pub useful_bits: u32,
    pub history_lengths: Vec<usize>,
    #[serde(default = "default_alloc_ratio")]
    pub alloc_ratio: u32,
    #[serde(default = "default_decay")]
    pub decay_period: u64,
    #[serde(default)]
    pub isolation: Isolation,
    #[serde(default)]
    pub hash_seed: u64,
    #[serde(default = "default_base_log")]
    pub base_log: u32,
    #[serde(default = "default_base_bits")]
    pub base_counter_bits: u32,
    #[serde(default)]
    pub alt_update: AltUpdate,
}

fn default_alloc_ratio() -> u32 {
    2
}
fn default_decay() -> u64 {
    1 << 18
}
fn default_base_log() -> u32 {
    10
}
fn default_base_bits() -> u32 {
    2
}

/// `n` history lengths growing geometrically from `min` to `max`.
pub fn geometric_lengths(n: usize, min: usize, max: usize) -> Vec<usize> {
    assert!(n >= 2 && min >= 1 && max > min);
    let ratio = (max as f64 / min as f64).powf(1.0 / (n - 1) as f64);
    let mut out: Vec<usize> = Vec::with_capacity(n);
    for k in 0..n {
        let mut l = (min as f64 * ratio.powi(k as i32)).round() as usize;
        if let Some(&prev) = out.last() {
            l = l.max(prev + 1);
        }
        out.push(l);
    }
    *out.last_mut().unwrap() = max;
    out
}

impl TageConfig {
    fn base(num_tables: usize, sets_log: u32, tag_bits: u32, history_lengths: Vec<usize>) -> Self {
        TageConfig {
            num_tables,
            sets_log,
            ways_log: 0,
            tag_bits,
            counter_bits: 3,
            useful_bits: 2,
            history_lengths,
            alloc_ratio: default_alloc_ratio(),
            decay_period: default_decay(),
            isolation: Isolation::Off,
            hash_seed: 0x5eed_0001,
            base_log: default_base_log(),
            base_counter_bits: default_base_bits(),
            alt_update: AltUpdate::Never,
        }
    }

    /// Performance-core sizing over a 100-bit history.
    pub fn firestorm() -> Self {
        Self::base(6, 9, 11, geometric_lengths(6, 6, 100))
    }

    /// Efficiency-core sizing over a 60-bit history, with privilege tags.
    pub fn icestorm() -> Self {
        TageConfig { isolation: Isolation::PrivilegeTag, ..Self::base(5, 8, 10, geometric_lengths(5, 5, 60)) }
    }

    /// Four tables of 64 sets and 6-bit tags: aliasing probability 2^-12.
    pub fn desk(width: usize) -> Self {
        Self::base(4, 6, 6, geometric_lengths(4, width.div_ceil(8), width))
    }

    /// Two tables of 8 sets and 3-bit tags over an 8-bit history.
    pub fn tiny() -> Self {
        Self::base(2, 3, 3, vec![4, 8])
    }

    pub fn ways(&self) -> usize {
        1 << self.ways_log
    }

    pub fn sets(&self) -> usize {
        1 << self.sets_log
    }

    pub fn max_counter(&self) -> u8 {
        ((1u32 << self.counter_bits) - 1) as u8
    }

    pub fn max_useful(&self) -> u8 {
        ((1u32 << self.useful_bits) - 1) as u8
    }

    /// Per-component aliasing probability 2^-(s+t).
    pub fn alias_probability(&self) -> f64 {
        (-((self.sets_log + self.tag_bits) as f64)).exp2()
    }

    pub fn history_width(&self) -> usize {
        *self.history_lengths.last().unwrap_or(&0)
    }

    pub fn validate(&self) -> Result<(), TageError> {
        let err = |m: &str| Err(TageError::InvalidConfig(m.to_string()));
        let t = self.num_tables;
        if !(2..=MAX_TABLES).contains(&t) {
            return err("num_tables must be in 2..=16");
        }
        if self.history_lengths.len() != t {
            return err("history_lengths must have one entry per table");
        }
        if self.history_lengths[0] == 0 || self.history_lengths.windows(2).any(|w| w[0] >= w[1]) {
            return err("history_lengths must be positive and strictly increasing");
        }
        if self.sets_log > 20 || self.ways_log > 4 {
            return err("sets_log must be <= 20 and ways_log <= 4");
        }
        if self.tag_bits == 0 || self.sets_log + self.tag_bits > 32 {
            return err("tag_bits must be positive and sets_log + tag_bits <= 32");
        }
        if !(1..=7).contains(&self.counter_bits) || !(1..=7).contains(&self.useful_bits) {
            return err("counter_bits and useful_bits must be in 1..=7");
        }
        if !(1..=7).contains(&self.base_counter_bits) || self.base_log > 24 {
            return err("base_counter_bits must be in 1..=7 and base_log <= 24");
        }
        if !(1..=16).contains(&self.alloc_ratio) {
            return err("alloc_ratio must be in 1..=16");
        }
        if self.decay_period == 0 {
            return err("decay_period must be positive");
        }
        Ok(())
    }
}
