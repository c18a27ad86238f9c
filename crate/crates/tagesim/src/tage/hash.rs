use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bhr::BhrState;

use super::TageConfig;

/// Lowest and highest PC bits that feed the hash.
const PC_LO: u32 = 2;
const PC_HI: u32 = 31;

/// Seeded random linear maps, one per table, from (PC, history suffix) to
/// `sets_log + tag_bits` output bits. The low bits index the set and the
/// high bits form the tag. Evaluated byte-wise through lookup tables.
#[derive(Debug, Clone)]
pub struct HashFamily {
    sets_log: u32,
    out_mask: u32,
    tables: Vec<TableHash>,
}

#[derive(Debug, Clone)]
struct TableHash {
    hist_bytes: usize,
    hist: Vec<u32>,
    pc: Vec<u32>,
}

fn lut_from_columns(columns: &[u32]) -> Vec<u32> {
    let bytes = columns.len().div_ceil(8);
    let mut lut = vec![0u32; bytes * 256];
    for (bit, &col) in columns.iter().enumerate() {
        let (byte, shift) = (bit / 8, bit % 8);
        for v in 0..256 {
            if v >> shift & 1 == 1 {
                lut[byte * 256 + v] ^= col;
            }
        }
    }
    lut
}

impl HashFamily {
    pub fn new(cfg: &TageConfig) -> Self {
        let width = cfg.sets_log + cfg.tag_bits;
        let out_mask = if width == 32 { u32::MAX } else { (1u32 << width) - 1 };
        let index_mask = (1u32 << cfg.sets_log) - 1;
        let tables = cfg
            .history_lengths
            .iter()
            .enumerate()
            .map(|(i, &len)| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(cfg.hash_seed ^ (i as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                // Every history column moves the set index, so histories
                // differing in one bit never share a set.
                let hist_cols: Vec<u32> = (0..len)
                    .map(|_| loop {
                        let c = rng.gen::<u32>() & out_mask;
                        if index_mask == 0 || c & index_mask != 0 {
                            break c;
                        }
                    })
                    .collect();
                let pc_cols: Vec<u32> = (0..32)
                    .map(|b| {
                        let c = rng.gen::<u32>() & out_mask;
                        if (PC_LO..=PC_HI).contains(&b) {
                            c
                        } else {
                            0
                        }
                    })
                    .collect();
                TableHash {
                    hist_bytes: len.div_ceil(8),
                    hist: lut_from_columns(&hist_cols),
                    pc: lut_from_columns(&pc_cols),
                }
            })
            .collect();
        HashFamily { sets_log: cfg.sets_log, out_mask, tables }
    }

    /// Raw `sets_log + tag_bits` hash for 0-based table `t`.
    #[inline]
    pub fn raw(&self, t: usize, pc: u64, bhr: &BhrState) -> u32 {
        let th = &self.tables[t];
        let p = pc as u32;
        let mut h = th.pc[p as usize & 0xff]
            ^ th.pc[256 + (p >> 8 & 0xff) as usize]
            ^ th.pc[512 + (p >> 16 & 0xff) as usize]
            ^ th.pc[768 + (p >> 24) as usize];
        for k in 0..th.hist_bytes {
            h ^= th.hist[k * 256 + bhr.byte(k) as usize];
        }
        h & self.out_mask
    }

    /// `(set index, tag)` for 0-based table `t`.
    #[inline]
    pub fn index_tag(&self, t: usize, pc: u64, bhr: &BhrState) -> (u32, u32) {
        let h = self.raw(t, pc, bhr);
        (h & ((1u32 << self.sets_log) - 1), h >> self.sets_log)
    }
}
