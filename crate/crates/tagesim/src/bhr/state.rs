use std::fmt;

/// Widest history the state can hold.
pub const MAX_WIDTH: usize = 256;
const WORDS: usize = MAX_WIDTH / 64;

/// Fixed-width history bit vector. Bit 0 is the newest contribution.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct BhrState {
    words: [u64; WORDS],
    width: u16,
}

impl BhrState {
    pub fn zero(width: usize) -> Self {
        assert!((1..=MAX_WIDTH).contains(&width), "history width {width} out of range");
        BhrState { words: [0; WORDS], width: width as u16 }
    }

    pub fn width(&self) -> usize {
        self.width as usize
    }

    pub fn words(&self) -> &[u64; WORDS] {
        &self.words
    }

    #[inline]
    fn trim(&mut self) {
        let w = self.width as usize;
        let top = (w - 1) / 64;
        let rem = w % 64;
        if rem != 0 {
            self.words[top] &= (1u64 << rem) - 1;
        }
        for x in self.words.iter_mut().skip(top + 1) {
            *x = 0;
        }
    }

    /// `(self << 1) ^ attrs`, dropping bits at or above the width.
    #[inline]
    pub fn shift_xor(&mut self, attrs: u128) {
        let w = &mut self.words;
        w[3] = w[3] << 1 | w[2] >> 63;
        w[2] = w[2] << 1 | w[1] >> 63;
        w[1] = w[1] << 1 | w[0] >> 63;
        w[0] <<= 1;
        self.xor_word(attrs);
    }

    #[inline]
    pub fn xor_word(&mut self, attrs: u128) {
        self.words[0] ^= attrs as u64;
        self.words[1] ^= (attrs >> 64) as u64;
        self.trim();
    }

    pub fn bit(&self, i: usize) -> bool {
        i < self.width() && self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set_bit(&mut self, i: usize, v: bool) {
        assert!(i < self.width());
        let m = 1u64 << (i % 64);
        if v {
            self.words[i / 64] |= m;
        } else {
            self.words[i / 64] &= !m;
        }
    }

    pub fn toggle_bit(&mut self, i: usize) {
        assert!(i < self.width());
        self.words[i / 64] ^= 1u64 << (i % 64);
    }

    /// Copy with the oldest bit toggled.
    pub fn with_msb_flipped(&self) -> Self {
        let mut s = *self;
        s.toggle_bit(self.width() - 1);
        s
    }

    pub fn xor(&self, other: &BhrState) -> BhrState {
        assert_eq!(self.width, other.width);
        let mut s = *self;
        for (a, b) in s.words.iter_mut().zip(other.words.iter()) {
            *a ^= b;
        }
        s
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Little-endian byte `i` of the history (bits 8i..8i+8).
    #[inline]
    pub fn byte(&self, i: usize) -> u8 {
        (self.words[i / 8] >> (8 * (i % 8))) as u8
    }

    /// Builds a state from little-endian words; excess bits are dropped.
    pub fn from_words(width: usize, words: &[u64]) -> Self {
        let mut s = Self::zero(width);
        for (d, w) in s.words.iter_mut().zip(words) {
            *d = *w;
        }
        s.trim();
        s
    }
}

impl fmt::Debug for BhrState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BhrState({}:{self})", self.width)
    }
}

impl fmt::Display for BhrState {
    /// Hex digits, most significant first.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let digits = self.width().div_ceil(4);
        for d in (0..digits).rev() {
            let nib = (self.words[d / 16] >> (4 * (d % 16))) & 0xf;
            write!(f, "{nib:x}")?;
        }
        Ok(())
    }
}
