//! Branch history register model.
//!
//! A branch contributes a word of placed attribute bits (`attrs`). Shifting
//! branches apply `(h << 1) ^ attrs`; non-taken conditionals only XOR.

mod event;
mod masks;
mod slide;
mod state;

pub use event::{BranchEvent, BranchKind, ADDR_BITS, ADDR_MASK, IMM_BITS};
pub use masks::{AttributeMaskSet, BitSet, Placement, PlacementSet};
pub use slide::BranchSlide;
pub use state::{BhrState, MAX_WIDTH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BhrError {
    #[error("address {0:#x} is not 4-byte aligned")]
    Misaligned(u64),
    #[error("address {0:#x} exceeds the 48-bit virtual address space")]
    AddressRange(u64),
    #[error("immediate {0} does not fit in 19 signed bits")]
    ImmediateRange(i64),
    #[error("empty branch slide")]
    EmptySlide,
    #[error("slide terminal must be a conditional branch")]
    TerminalNotConditional,
    #[error("slide is not eligible for a last-bit flip: {0}")]
    NotFlippable(String),
    #[error("invalid mask set: {0}")]
    InvalidMasks(String),
    #[error("invalid history config: {0}")]
    InvalidConfig(String),
    #[error("bit set syntax: {0}")]
    BitSetSyntax(String),
}

/// How a non-taken conditional branch touches the history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NotTakenPolicy {
    /// XOR the attributes without shifting.
    #[default]
    XorNoShift,
    /// Leave the history untouched.
    Ignore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BhrConfig {
    pub history_length: usize,
    #[serde(default = "one")]
    pub shift_per_update: usize,
}

fn one() -> usize {
    1
}

impl BhrConfig {
    pub fn new(history_length: usize) -> Self {
        BhrConfig { history_length, shift_per_update: 1 }
    }

    pub fn firestorm() -> Self {
        Self::new(100)
    }

    pub fn icestorm() -> Self {
        Self::new(60)
    }

    pub fn width(&self) -> usize {
        self.history_length * self.shift_per_update
    }

    pub fn validate(&self) -> Result<(), BhrError> {
        if self.shift_per_update != 1 {
            return Err(BhrError::InvalidConfig("shift_per_update must be 1".into()));
        }
        if self.history_length == 0 || self.width() > MAX_WIDTH {
            return Err(BhrError::InvalidConfig(format!("history_length must be in 1..={MAX_WIDTH}")));
        }
        Ok(())
    }
}

/// Attribute source inside a branch event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Attribute {
    CondPc,
    CondImm,
    IndirPc,
    IndirTarget,
}

impl Attribute {
    pub const ALL: [Attribute; 4] = [Attribute::CondPc, Attribute::CondImm, Attribute::IndirPc, Attribute::IndirTarget];

    fn slot(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Attribute::CondPc => "cond-pc",
            Attribute::CondImm => "cond-imm",
            Attribute::IndirPc => "indir-pc",
            Attribute::IndirTarget => "indir-target",
        }
    }

    /// Highest bit index that exists in the attribute's source field.
    pub fn max_bit(self) -> u32 {
        match self {
            Attribute::CondImm => IMM_BITS - 1,
            _ => ADDR_BITS - 1,
        }
    }

    /// Lowest bit index that can be toggled without breaking alignment.
    pub fn min_bit(self) -> u32 {
        match self {
            Attribute::CondImm => 0,
            _ => 2,
        }
    }

    /// Whether the attribute belongs to a conditional or an indirect branch.
    pub fn branch_kind(self) -> BranchKind {
        match self {
            Attribute::CondPc | Attribute::CondImm => BranchKind::ConditionalTaken,
            _ => BranchKind::IndirectTaken,
        }
    }
}

impl std::fmt::Display for Attribute {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Byte-wise placement tables for one attribute: source bits 0..32.
type Lut = [[u128; 256]; 4];

/// Compiled history model: config, masks and precomputed placement tables.
#[derive(Clone)]
pub struct BhrModel {
    cfg: BhrConfig,
    masks: AttributeMaskSet,
    not_taken: NotTakenPolicy,
    luts: Box<[Lut; 4]>,
}

impl std::fmt::Debug for BhrModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BhrModel")
            .field("cfg", &self.cfg)
            .field("masks", &self.masks)
            .field("not_taken", &self.not_taken)
            .finish()
    }
}

impl BhrModel {
    pub fn new(cfg: BhrConfig, masks: AttributeMaskSet) -> Result<Self, BhrError> {
        cfg.validate()?;
        masks.validate()?;
        let mut luts = Box::new([[[0u128; 256]; 4]; 4]);
        for attr in Attribute::ALL {
            let lut = &mut luts[attr.slot()];
            for bit in 0..32u32 {
                let word = masks.bit_word(attr, bit);
                if word == 0 {
                    continue;
                }
                let (byte, shift) = ((bit / 8) as usize, bit % 8);
                for (v, e) in lut[byte].iter_mut().enumerate() {
                    if v >> shift & 1 == 1 {
                        *e ^= word;
                    }
                }
            }
        }
        Ok(BhrModel { cfg, masks, not_taken: NotTakenPolicy::default(), luts })
    }

    pub fn firestorm() -> Self {
        Self::new(BhrConfig::firestorm(), AttributeMaskSet::firestorm()).expect("firestorm preset is valid")
    }

    pub fn icestorm() -> Self {
        Self::new(BhrConfig::icestorm(), AttributeMaskSet::icestorm()).expect("icestorm preset is valid")
    }

    pub fn with_not_taken_policy(mut self, policy: NotTakenPolicy) -> Self {
        self.not_taken = policy;
        self
    }

    pub fn config(&self) -> &BhrConfig {
        &self.cfg
    }

    pub fn masks(&self) -> &AttributeMaskSet {
        &self.masks
    }

    pub fn not_taken_policy(&self) -> NotTakenPolicy {
        self.not_taken
    }

    pub fn width(&self) -> usize {
        self.cfg.width()
    }

    pub fn zero_state(&self) -> BhrState {
        BhrState::zero(self.width())
    }

    #[inline]
    fn place(&self, attr: Attribute, value: u64) -> u128 {
        let lut = &self.luts[attr.slot()];
        let v = value as u32;
        lut[0][(v & 0xff) as usize]
            ^ lut[1][(v >> 8 & 0xff) as usize]
            ^ lut[2][(v >> 16 & 0xff) as usize]
            ^ lut[3][(v >> 24) as usize]
    }

    /// Placed attribute word of `event`. Positions at or above the history
    /// width are kept here and discarded when applied to a state.
    #[inline]
    pub fn attrs(&self, event: &BranchEvent) -> u128 {
        match event.kind {
            BranchKind::ConditionalTaken | BranchKind::ConditionalNotTaken => {
                self.place(Attribute::CondPc, event.pc) ^ self.place(Attribute::CondImm, event.imm_bits())
            }
            BranchKind::IndirectTaken => {
                self.place(Attribute::IndirPc, event.pc) ^ self.place(Attribute::IndirTarget, event.target)
            }
            BranchKind::DirectUnconditional => self.place(Attribute::CondPc, event.pc),
        }
    }

    /// Placed word produced by a single source bit of one attribute.
    pub fn bit_word(&self, attr: Attribute, bit: u32) -> u128 {
        if bit >= 32 {
            0
        } else {
            self.place(attr, 1u64 << bit)
        }
    }

    #[inline]
    pub fn update(&self, state: &BhrState, event: &BranchEvent) -> BhrState {
        let mut next = *state;
        self.apply(&mut next, event);
        next
    }

    #[inline]
    pub fn apply(&self, state: &mut BhrState, event: &BranchEvent) {
        debug_assert_eq!(state.width(), self.width());
        if event.kind.shifts() {
            state.shift_xor(self.attrs(event));
        } else if self.not_taken == NotTakenPolicy::XorNoShift {
            state.xor_word(self.attrs(event));
        }
    }

    /// Fold of all events before the slide's terminal branch, from zero.
    pub fn bhr_of_slide(&self, slide: &BranchSlide) -> BhrState {
        let mut h = self.zero_state();
        for e in slide.prefix() {
            self.apply(&mut h, e);
        }
        h
    }

    /// Toggles PC bit 2 of the slide's first branch, which moves that
    /// branch's contribution in and out of the history MSB.
    pub fn flip_last_bhr_bit(&self, slide: &BranchSlide) -> Result<BranchSlide, BhrError> {
        self.check_flippable(slide)?;
        let mut events = slide.events().to_vec();
        events[0] = events[0].with_pc(events[0].pc ^ 0b100);
        BranchSlide::new(events)
    }

    pub fn check_flippable(&self, slide: &BranchSlide) -> Result<(), BhrError> {
        let hl = self.cfg.history_length;
        let prefix = slide.prefix();
        if prefix.len() < hl {
            return Err(BhrError::NotFlippable(format!("{} events before the terminal, need {hl}", prefix.len())));
        }
        if prefix.len() > hl {
            return Err(BhrError::NotFlippable(format!(
                "{} events before the terminal, expected exactly {hl}",
                prefix.len()
            )));
        }
        if prefix[0].kind != BranchKind::ConditionalTaken {
            return Err(BhrError::NotFlippable("first event is not a taken conditional".into()));
        }
        if prefix.iter().any(|e| !e.kind.shifts()) {
            return Err(BhrError::NotFlippable("slide contains non-shifting branches".into()));
        }
        if self.bit_word(Attribute::CondPc, 2) != 1 {
            return Err(BhrError::NotFlippable("conditional PC bit 2 is not placed at history position 0".into()));
        }
        Ok(())
    }
}
