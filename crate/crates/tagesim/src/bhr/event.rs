use serde::{Deserialize, Serialize};

use super::BhrError;

pub const ADDR_BITS: u32 = 48;
pub const ADDR_MASK: u64 = (1 << ADDR_BITS) - 1;
pub const IMM_BITS: u32 = 19;
const IMM_MASK: u64 = (1 << IMM_BITS) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchKind {
    ConditionalTaken,
    ConditionalNotTaken,
    IndirectTaken,
    DirectUnconditional,
}

impl BranchKind {
    /// Every kind except a non-taken conditional shifts the history.
    pub fn shifts(self) -> bool {
        self != BranchKind::ConditionalNotTaken
    }

    pub fn is_conditional(self) -> bool {
        matches!(self, BranchKind::ConditionalTaken | BranchKind::ConditionalNotTaken)
    }
}

/// One executed branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BranchEvent {
    pub kind: BranchKind,
    pub pc: u64,
    pub target: u64,
    /// Signed word offset; zero for non-conditional kinds.
    pub imm: i32,
}

fn check_addr(addr: u64) -> Result<(), BhrError> {
    if addr & !ADDR_MASK != 0 {
        return Err(BhrError::AddressRange(addr));
    }
    if addr & 3 != 0 {
        return Err(BhrError::Misaligned(addr));
    }
    Ok(())
}

fn cond_target(pc: u64, imm: i32) -> u64 {
    pc.wrapping_add((imm as i64 * 4) as u64) & ADDR_MASK
}

impl BranchEvent {
    pub const IMM_MIN: i32 = -(1 << (IMM_BITS - 1));
    pub const IMM_MAX: i32 = (1 << (IMM_BITS - 1)) - 1;

    /// Conditional branch at `pc` jumping `imm` words when taken.
    pub fn conditional(pc: u64, imm: i32, taken: bool) -> Result<Self, BhrError> {
        check_addr(pc)?;
        if !(Self::IMM_MIN..=Self::IMM_MAX).contains(&imm) {
            return Err(BhrError::ImmediateRange(imm as i64));
        }
        let kind = if taken { BranchKind::ConditionalTaken } else { BranchKind::ConditionalNotTaken };
        Ok(BranchEvent { kind, pc, target: cond_target(pc, imm), imm })
    }

    pub fn indirect(pc: u64, target: u64) -> Result<Self, BhrError> {
        check_addr(pc)?;
        check_addr(target)?;
        Ok(BranchEvent { kind: BranchKind::IndirectTaken, pc, target, imm: 0 })
    }

    pub fn direct(pc: u64, target: u64) -> Result<Self, BhrError> {
        check_addr(pc)?;
        check_addr(target)?;
        Ok(BranchEvent { kind: BranchKind::DirectUnconditional, pc, target, imm: 0 })
    }

    pub fn validate(&self) -> Result<(), BhrError> {
        check_addr(self.pc)?;
        check_addr(self.target)?;
        if self.kind.is_conditional() {
            if !(Self::IMM_MIN..=Self::IMM_MAX).contains(&self.imm) {
                return Err(BhrError::ImmediateRange(self.imm as i64));
            }
            if self.target != cond_target(self.pc, self.imm) {
                return Err(BhrError::InvalidConfig("conditional target != pc + 4*imm".into()));
            }
        }
        Ok(())
    }

    /// The immediate as a 19-bit two's complement field.
    #[inline]
    pub fn imm_bits(&self) -> u64 {
        self.imm as i64 as u64 & IMM_MASK
    }

    /// Same branch with the outcome replaced (conditional kinds only).
    pub fn with_outcome(self, taken: bool) -> Self {
        debug_assert!(self.kind.is_conditional());
        let kind = if taken { BranchKind::ConditionalTaken } else { BranchKind::ConditionalNotTaken };
        BranchEvent { kind, ..self }
    }

    /// Same branch moved to `pc`; conditional targets follow the move.
    pub fn with_pc(self, pc: u64) -> Self {
        let target = if self.kind.is_conditional() { cond_target(pc, self.imm) } else { self.target };
        BranchEvent { pc, target, ..self }
    }

    /// Whether any address field touches bit 31, whose effect is unknown.
    pub fn touches_bit31(&self) -> bool {
        let bit = 1u64 << 31;
        match self.kind {
            BranchKind::IndirectTaken => (self.pc | self.target) & bit != 0,
            _ => self.pc & bit != 0,
        }
    }
}
