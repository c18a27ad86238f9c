#![allow(dead_code)]

use tagesim::bhr::{AttributeMaskSet, BhrConfig, BhrModel, BitSet, PlacementSet};

/// Eight-bit history: conditional PC bits 2..9 and immediate bits 0..7
/// fill every position; indirect targets use PC-like placement.
pub fn tiny_model() -> BhrModel {
    let masks = AttributeMaskSet {
        cond_pc_bits: BitSet::range(2, 9),
        cond_imm_bits: BitSet::range(0, 7),
        indir_pc_bits: BitSet::EMPTY,
        indir_target_bits: BitSet::range(2, 9),
        anomalous_cond_pc_bits: BitSet::EMPTY,
        anomalous_cond_imm_bits: BitSet::EMPTY,
        placement: PlacementSet::for_history_length(8),
    };
    BhrModel::new(BhrConfig::new(8), masks).unwrap()
}

/// Plain bit-vector history used as a reference for the packed one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefHistory(pub Vec<bool>);

impl RefHistory {
    pub fn zero(width: usize) -> Self {
        RefHistory(vec![false; width])
    }

    pub fn shift_xor(&mut self, word: u128) {
        let w = self.0.len();
        for i in (1..w).rev() {
            self.0[i] = self.0[i - 1];
        }
        self.0[0] = false;
        self.xor(word);
    }

    pub fn xor(&mut self, word: u128) {
        for (i, b) in self.0.iter_mut().enumerate().take(128) {
            *b ^= word >> i & 1 == 1;
        }
    }
}
