use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Attribute, BhrError, IMM_BITS};

/// Set of bit indices below 32, written as ranges like `"2-5,25-30"`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct BitSet(pub u32);

impl BitSet {
    pub const EMPTY: BitSet = BitSet(0);

    /// Inclusive range `lo..=hi`.
    pub fn range(lo: u32, hi: u32) -> Self {
        assert!(lo <= hi && hi < 32);
        let n = hi - lo + 1;
        BitSet(if n == 32 { u32::MAX } else { ((1u32 << n) - 1) << lo })
    }

    pub fn union(self, other: BitSet) -> Self {
        BitSet(self.0 | other.0)
    }

    pub fn contains(self, bit: u32) -> bool {
        bit < 32 && self.0 >> bit & 1 == 1
    }

    pub fn iter(self) -> impl Iterator<Item = u32> {
        (0..32).filter(move |&b| self.contains(b))
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for BitSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        let mut b = 0;
        while b < 32 {
            if self.contains(b) {
                let lo = b;
                while b + 1 < 32 && self.contains(b + 1) {
                    b += 1;
                }
                parts.push(if lo == b { lo.to_string() } else { format!("{lo}-{b}") });
            }
            b += 1;
        }
        f.write_str(&parts.join(","))
    }
}

impl fmt::Debug for BitSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{self}}}")
    }
}

impl FromStr for BitSet {
    type Err = BhrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut set = BitSet::EMPTY;
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let parse = |t: &str| t.trim().parse::<u32>().map_err(|_| BhrError::BitSetSyntax(format!("bad bit {t:?}")));
            let (lo, hi) = match part.split_once('-') {
                Some((a, b)) => (parse(a)?, parse(b)?),
                None => {
                    let v = parse(part)?;
                    (v, v)
                }
            };
            if lo > hi || hi >= 32 {
                return Err(BhrError::BitSetSyntax(format!("range {part:?} outside 0..32")));
            }
            set = set.union(BitSet::range(lo, hi));
        }
        Ok(set)
    }
}

impl Serialize for BitSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BitSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Maps source bit `b` to history position `offset + b`, or
/// `offset - b` when descending.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    pub offset: i32,
    #[serde(default)]
    pub descending: bool,
}

impl Placement {
    pub const fn ascending(offset: i32) -> Self {
        Placement { offset, descending: false }
    }

    pub const fn descending(offset: i32) -> Self {
        Placement { offset, descending: true }
    }

    pub fn position(self, bit: u32) -> i32 {
        if self.descending {
            self.offset - bit as i32
        } else {
            self.offset + bit as i32
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementSet {
    pub cond_pc: Placement,
    pub cond_imm: Placement,
    pub indir_pc: Placement,
    pub indir_target: Placement,
}

impl PlacementSet {
    /// Indirect PC bits fill the positions just below `history_length - 26`.
    pub fn for_history_length(history_length: usize) -> Self {
        PlacementSet {
            cond_pc: Placement::ascending(-2),
            cond_imm: Placement::ascending(0),
            indir_pc: Placement::descending(history_length as i32 - 26),
            indir_target: Placement::ascending(-2),
        }
    }

    pub fn get(&self, attr: Attribute) -> Placement {
        match attr {
            Attribute::CondPc => self.cond_pc,
            Attribute::CondImm => self.cond_imm,
            Attribute::IndirPc => self.indir_pc,
            Attribute::IndirTarget => self.indir_target,
        }
    }
}

/// Which attribute bits reach the history, and where.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeMaskSet {
    pub cond_pc_bits: BitSet,
    pub cond_imm_bits: BitSet,
    pub indir_pc_bits: BitSet,
    pub indir_target_bits: BitSet,
    #[serde(default)]
    pub anomalous_cond_pc_bits: BitSet,
    #[serde(default)]
    pub anomalous_cond_imm_bits: BitSet,
    pub placement: PlacementSet,
}

impl AttributeMaskSet {
    fn m1(history_length: usize) -> Self {
        AttributeMaskSet {
            cond_pc_bits: BitSet::range(2, 24),
            cond_imm_bits: BitSet::range(0, IMM_BITS - 1),
            indir_pc_bits: BitSet::range(2, 5).union(BitSet::range(25, 30)),
            indir_target_bits: BitSet::range(2, 30),
            anomalous_cond_pc_bits: BitSet::range(5, 5),
            anomalous_cond_imm_bits: BitSet::range(2, 2),
            placement: PlacementSet::for_history_length(history_length),
        }
    }

    pub fn firestorm() -> Self {
        Self::m1(100)
    }

    pub fn icestorm() -> Self {
        Self::m1(60)
    }

    pub fn mask(&self, attr: Attribute) -> BitSet {
        match attr {
            Attribute::CondPc => self.cond_pc_bits,
            Attribute::CondImm => self.cond_imm_bits,
            Attribute::IndirPc => self.indir_pc_bits,
            Attribute::IndirTarget => self.indir_target_bits,
        }
    }

    pub fn anomalous(&self, attr: Attribute) -> BitSet {
        match attr {
            Attribute::CondPc => self.anomalous_cond_pc_bits,
            Attribute::CondImm => self.anomalous_cond_imm_bits,
            _ => BitSet::EMPTY,
        }
    }

    /// History word contributed by source bit `bit` of `attr`.
    ///
    /// An anomalous bit at position q sits normally, but every masked bit
    /// placed above it also feeds position `p + q + 1` (dropped past 127).
    /// The extra copy spoils shift-by-one cancellation exactly at the
    /// anomalous bit while leaving each bit's lowest position at `p`.
    pub fn bit_word(&self, attr: Attribute, bit: u32) -> u128 {
        if !self.mask(attr).contains(bit) {
            return 0;
        }
        let pl = self.placement.get(attr);
        let p = pl.position(bit);
        let mut word = 1u128 << p;
        for b in self.anomalous(attr).iter() {
            let q = pl.position(b);
            if q < p && p + q + 1 < 128 {
                word ^= 1u128 << (p + q + 1);
            }
        }
        word
    }

    pub fn validate(&self) -> Result<(), BhrError> {
        let err = |m: String| Err(BhrError::InvalidMasks(m));
        for attr in Attribute::ALL {
            let m = self.mask(attr);
            if m.contains(31) {
                return err(format!("{attr} mask uses bit 31, whose effect is undetermined"));
            }
            if attr != Attribute::CondImm && m.0 & 0b11 != 0 {
                return err(format!("{attr} mask uses alignment bits 0-1"));
            }
            if attr == Attribute::CondImm && m.0 >> IMM_BITS != 0 {
                return err("cond-imm mask exceeds 19 bits".into());
            }
            let anom = self.anomalous(attr);
            if anom.0 & !m.0 != 0 {
                return err(format!("{attr} anomalous bits {anom} not inside the mask"));
            }
            let pl = self.placement.get(attr);
            for b in m.iter() {
                let p = pl.position(b);
                if !(0..128).contains(&p) {
                    return err(format!("{attr} bit {b} placed at position {p}, outside 0..128"));
                }
            }
        }
        Ok(())
    }
}
