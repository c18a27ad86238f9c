use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bhr::BhrState;

use super::{AltUpdate, HashFamily, SecurityContext, TageConfig, TageError, MAX_TABLES};

#[derive(Debug, Clone, Copy, Default)]
struct Entry {
    tag: u32,
    sec: u32,
    /// Entry is live only when this equals the predictor's epoch.
    epoch: u32,
    ctr: u8,
    useful: u8,
}

#[derive(Debug, Clone, Copy, Default)]
struct BaseEntry {
    ctr: u8,
    sec: u32,
    epoch: u32,
}

/// Outcome of a lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prediction {
    pub taken: bool,
    /// 0 for the base predictor, 1..=T for tagged tables.
    pub provider: usize,
    pub alt_taken: bool,
    pub alt_provider: usize,
}

/// Everything an update needs from the matching predict.
#[derive(Debug, Clone, Copy)]
pub struct Lookup {
    pc: u64,
    bhr: BhrState,
    ctx: SecurityContext,
    sec: u32,
    sets: [u32; MAX_TABLES + 1],
    tags: [u32; MAX_TABLES + 1],
    base: u32,
    provider_slot: usize,
    alt_slot: usize,
    pub prediction: Prediction,
}

/// What an update changed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdateInfo {
    pub mispredicted: bool,
    /// Table that received a new entry, if any.
    pub allocated: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct TagePredictor {
    cfg: TageConfig,
    hash: HashFamily,
    /// `tables[t]` holds `sets * ways` entries of table `t + 1`.
    tables: Vec<Vec<Entry>>,
    base: Vec<BaseEntry>,
    epoch: u32,
    updates: u64,
    rng: ChaCha8Rng,
    pending: Option<Lookup>,
}

impl TagePredictor {
    pub fn new(cfg: TageConfig, seed: u64) -> Result<Self, TageError> {
        cfg.validate()?;
        let n = cfg.sets() * cfg.ways();
        Ok(TagePredictor {
            hash: HashFamily::new(&cfg),
            tables: vec![vec![Entry::default(); n]; cfg.num_tables],
            base: vec![BaseEntry::default(); 1 << cfg.base_log],
            epoch: 1,
            updates: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pending: None,
            cfg,
        })
    }

    pub fn config(&self) -> &TageConfig {
        &self.cfg
    }

    pub fn num_tables(&self) -> usize {
        self.cfg.num_tables
    }

    /// Fails unless `width` matches the longest history length.
    pub fn check_width(&self, width: usize) -> Result<(), TageError> {
        let want = self.cfg.history_width();
        if width != want {
            return Err(TageError::WidthMismatch { got: width, want });
        }
        Ok(())
    }

    /// Clears every entry and the decay clock in O(1).
    pub fn reset(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            for t in &mut self.tables {
                t.fill(Entry::default());
            }
            self.base.fill(BaseEntry::default());
            self.epoch = 1;
        }
        self.updates = 0;
        self.pending = None;
    }

    pub fn component_hash(&self, i: usize, pc: u64, bhr: &BhrState) -> Result<(u32, u32), TageError> {
        self.check_table(i)?;
        Ok(self.hash.index_tag(i - 1, pc, bhr))
    }

    fn check_table(&self, i: usize) -> Result<(), TageError> {
        if i == 0 || i > self.cfg.num_tables {
            return Err(TageError::TableIndex(i, self.cfg.num_tables));
        }
        Ok(())
    }

    #[inline]
    fn base_index(&self, pc: u64) -> u32 {
        (pc >> 2) as u32 & ((1u32 << self.cfg.base_log) - 1)
    }

    #[inline]
    fn weak_base(&self) -> u8 {
        (1u8 << (self.cfg.base_counter_bits - 1)) - 1
    }

    #[inline]
    fn base_ctr(&self, idx: u32, sec: u32) -> u8 {
        let e = self.base[idx as usize];
        if e.epoch == self.epoch && e.sec == sec {
            e.ctr
        } else {
            self.weak_base()
        }
    }

    #[inline]
    fn base_taken(&self, idx: u32, sec: u32) -> bool {
        self.base_ctr(idx, sec) >> (self.cfg.base_counter_bits - 1) & 1 == 1
    }

    #[inline]
    fn taken(&self, ctr: u8) -> bool {
        ctr >> (self.cfg.counter_bits - 1) & 1 == 1
    }

    #[inline]
    fn live(&self, e: &Entry) -> bool {
        e.epoch == self.epoch
    }

    #[inline]
    fn matches(&self, e: &Entry, tag: u32, sec: u32) -> bool {
        self.live(e) && e.tag == tag && e.sec == sec
    }

    /// Read-only lookup of `(pc, bhr)` under `ctx`.
    pub fn lookup(&self, pc: u64, bhr: &BhrState, ctx: SecurityContext) -> Lookup {
        debug_assert_eq!(bhr.width(), self.cfg.history_width());
        let t_max = self.cfg.num_tables;
        let ways = self.cfg.ways();
        let sec = ctx.tag(self.cfg.isolation);
        let mut sets = [0u32; MAX_TABLES + 1];
        let mut tags = [0u32; MAX_TABLES + 1];
        for i in 1..=t_max {
            let (s, t) = self.hash.index_tag(i - 1, pc, bhr);
            sets[i] = s;
            tags[i] = t;
        }
        let base = self.base_index(pc);
        let mut hits = [(0usize, 0usize); 2];
        let mut found = 0;
        'tables: for i in (1..=t_max).rev() {
            let row = sets[i] as usize * ways;
            for w in 0..ways {
                if self.matches(&self.tables[i - 1][row + w], tags[i], sec) {
                    hits[found] = (i, row + w);
                    found += 1;
                    if found == 2 {
                        break 'tables;
                    }
                    continue 'tables;
                }
            }
        }
        let dir = |(i, slot): (usize, usize)| {
            if i == 0 {
                self.base_taken(base, sec)
            } else {
                self.taken(self.tables[i - 1][slot].ctr)
            }
        };
        let (prov, alt) = match found {
            0 => ((0, 0), (0, 0)),
            1 => (hits[0], (0, 0)),
            _ => (hits[0], hits[1]),
        };
        let prediction = Prediction { taken: dir(prov), provider: prov.0, alt_taken: dir(alt), alt_provider: alt.0 };
        Lookup { pc, bhr: *bhr, ctx, sec, sets, tags, base, provider_slot: prov.1, alt_slot: alt.1, prediction }
    }

    /// Predicts and remembers the lookup for the following `update`.
    pub fn predict(&mut self, pc: u64, bhr: &BhrState, ctx: SecurityContext) -> Prediction {
        let l = self.lookup(pc, bhr, ctx);
        self.pending = Some(l);
        l.prediction
    }

    pub fn provider_of(&self, pc: u64, bhr: &BhrState, ctx: SecurityContext) -> usize {
        self.lookup(pc, bhr, ctx).prediction.provider
    }

    /// Trains on `outcome` for the branch passed to the last `predict`.
    pub fn update(
        &mut self,
        pc: u64,
        bhr: &BhrState,
        outcome: bool,
        ctx: SecurityContext,
    ) -> Result<UpdateInfo, TageError> {
        match self.pending.take() {
            Some(l) if l.pc == pc && l.bhr == *bhr && l.ctx == ctx => Ok(self.apply(&l, outcome)),
            _ => Err(TageError::UpdateWithoutPredict),
        }
    }

    /// Predict followed by update.
    #[inline]
    pub fn execute(&mut self, pc: u64, bhr: &BhrState, outcome: bool, ctx: SecurityContext) -> Prediction {
        let l = self.lookup(pc, bhr, ctx);
        self.apply(&l, outcome);
        l.prediction
    }

    fn bump(ctr: u8, up: bool, max: u8) -> u8 {
        if up {
            ctr.saturating_add(1).min(max)
        } else {
            ctr.saturating_sub(1)
        }
    }

    /// A base counter owned by another security domain reads as initial
    /// and is taken over by the update.
    fn train_component(&mut self, i: usize, slot: usize, l: &Lookup, outcome: bool) {
        if i == 0 {
            let max = ((1u32 << self.cfg.base_counter_bits) - 1) as u8;
            let ctr = Self::bump(self.base_ctr(l.base, l.sec), outcome, max);
            self.base[l.base as usize] = BaseEntry { ctr, sec: l.sec, epoch: self.epoch };
        } else {
            let max = self.cfg.max_counter();
            let e = &mut self.tables[i - 1][slot];
            e.ctr = Self::bump(e.ctr, outcome, max);
        }
    }

    fn apply(&mut self, l: &Lookup, outcome: bool) -> UpdateInfo {
        let p = l.prediction;
        let t_max = self.cfg.num_tables;
        if p.provider > 0 {
            let provider_useful = self.tables[p.provider - 1][l.provider_slot].useful;
            if self.cfg.alt_update == AltUpdate::WhenProviderNotUseful && provider_useful == 0 {
                self.train_component(p.alt_provider, l.alt_slot, l, outcome);
            }
        }
        self.train_component(p.provider, l.provider_slot, l, outcome);
        if p.provider > 0 && p.taken != p.alt_taken {
            let max = self.cfg.max_useful();
            let e = &mut self.tables[p.provider - 1][l.provider_slot];
            e.useful = if p.taken == outcome { (e.useful + 1).min(max) } else { e.useful.saturating_sub(1) };
        }
        let mispredicted = p.taken != outcome;
        let mut allocated = None;
        if mispredicted && p.provider < t_max {
            let mut rng = self.rng.clone();
            let choice = self.choose(p.provider, l, &mut rng);
            self.rng = rng;
            match choice {
                Some((j, slot)) => {
                    let half = 1u8 << (self.cfg.counter_bits - 1);
                    self.tables[j - 1][slot] = Entry {
                        tag: l.tags[j],
                        sec: l.sec,
                        epoch: self.epoch,
                        ctr: if outcome { half } else { half - 1 },
                        useful: 0,
                    };
                    allocated = Some(j);
                }
                None => self.age_above(p.provider, l),
            }
        }
        self.updates += 1;
        if self.updates % self.cfg.decay_period == 0 {
            self.decay();
        }
        UpdateInfo { mispredicted, allocated }
    }

    /// First allocatable way of table `j`'s indexed set.
    fn free_way(&self, j: usize, l: &Lookup) -> Option<usize> {
        let ways = self.cfg.ways();
        let row = l.sets[j] as usize * ways;
        (row..row + ways).find(|&s| {
            let e = &self.tables[j - 1][s];
            !self.live(e) || e.useful == 0
        })
    }

    /// Weighted choice among eligible tables above `provider`.
    fn choose<R: rand::RngCore + ?Sized>(&self, provider: usize, l: &Lookup, rng: &mut R) -> Option<(usize, usize)> {
        let t_max = self.cfg.num_tables;
        let ratio = self.cfg.alloc_ratio as u64;
        let mut cands = [(0usize, 0usize, 0u64); MAX_TABLES];
        let mut n = 0;
        let mut total = 0u64;
        for j in provider + 1..=t_max {
            if let Some(slot) = self.free_way(j, l) {
                let w = ratio.pow((t_max - j) as u32);
                cands[n] = (j, slot, w);
                total += w;
                n += 1;
            }
        }
        if n == 0 {
            return None;
        }
        let mut r = rng.gen_range(0..total);
        for &(j, slot, w) in &cands[..n] {
            if r < w {
                return Some((j, slot));
            }
            r -= w;
        }
        unreachable!("weights sum to total")
    }

    /// Table an allocation after a misprediction at `provider` would pick,
    /// drawn with `rng`. The predictor is not modified.
    pub fn allocate_higher(
        &self,
        provider: usize,
        pc: u64,
        bhr: &BhrState,
        ctx: SecurityContext,
        rng: &mut dyn rand::RngCore,
    ) -> Option<usize> {
        assert!(provider < self.cfg.num_tables, "provider must be below the last table");
        let l = self.lookup(pc, bhr, ctx);
        self.choose(provider, &l, rng).map(|(j, _)| j)
    }

    fn age_above(&mut self, provider: usize, l: &Lookup) {
        let ways = self.cfg.ways();
        for j in provider + 1..=self.cfg.num_tables {
            let row = l.sets[j] as usize * ways;
            for s in row..row + ways {
                let e = &mut self.tables[j - 1][s];
                e.useful = e.useful.saturating_sub(1);
            }
        }
    }

    fn decay(&mut self) {
        for t in &mut self.tables {
            for e in t.iter_mut() {
                e.useful >>= 1;
            }
        }
    }

    /// Writes a strong entry for `(pc, bhr)` into table `i`.
    pub fn install_entry(
        &mut self,
        i: usize,
        pc: u64,
        bhr: &BhrState,
        taken: bool,
        ctx: SecurityContext,
    ) -> Result<(), TageError> {
        self.check_table(i)?;
        let (set, tag) = self.hash.index_tag(i - 1, pc, bhr);
        let sec = ctx.tag(self.cfg.isolation);
        let ways = self.cfg.ways();
        let row = set as usize * ways;
        let t = &self.tables[i - 1];
        let slot = (row..row + ways)
            .find(|&s| self.matches(&t[s], tag, sec))
            .or_else(|| (row..row + ways).find(|&s| !self.live(&t[s]) || t[s].useful == 0))
            .unwrap_or(row);
        let ctr = if taken { self.cfg.max_counter() } else { 0 };
        self.tables[i - 1][slot] = Entry { tag, sec, epoch: self.epoch, ctr, useful: self.cfg.max_useful() };
        self.pending = None;
        Ok(())
    }

    /// Drops entries matching `(pc, bhr, ctx)` in every table except `i`
    /// and returns the base counter for `pc` to its initial state.
    pub fn clear_except(&mut self, i: usize, pc: u64, bhr: &BhrState, ctx: SecurityContext) {
        let sec = ctx.tag(self.cfg.isolation);
        let ways = self.cfg.ways();
        for j in (1..=self.cfg.num_tables).filter(|&j| j != i) {
            let (set, tag) = self.hash.index_tag(j - 1, pc, bhr);
            let row = set as usize * ways;
            for s in row..row + ways {
                if self.matches(&self.tables[j - 1][s], tag, sec) {
                    self.tables[j - 1][s].epoch = 0;
                }
            }
        }
        let base = self.base_index(pc);
        self.base[base as usize].epoch = 0;
        self.pending = None;
    }

    /// Counter and useful values of the entry matching `(pc, bhr)` in table `i`.
    pub fn entry_state(&self, i: usize, pc: u64, bhr: &BhrState, ctx: SecurityContext) -> Option<(u8, u8)> {
        if i == 0 || i > self.cfg.num_tables {
            return None;
        }
        let (set, tag) = self.hash.index_tag(i - 1, pc, bhr);
        let sec = ctx.tag(self.cfg.isolation);
        let ways = self.cfg.ways();
        let row = set as usize * ways;
        (row..row + ways).map(|s| &self.tables[i - 1][s]).find(|e| self.matches(e, tag, sec)).map(|e| (e.ctr, e.useful))
    }

    /// Live entries per tagged table.
    pub fn occupancy(&self) -> Vec<usize> {
        self.tables.iter().map(|t| t.iter().filter(|e| self.live(e)).count()).collect()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// One CSV row per live tagged entry.
    pub fn dump_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["table", "set", "way", "tag", "counter", "useful", "sec_tag"])?;
        let ways = self.cfg.ways();
        for (t, entries) in self.tables.iter().enumerate() {
            for (slot, e) in entries.iter().enumerate() {
                if self.live(e) {
                    w.write_record(&[
                        (t + 1).to_string(),
                        (slot / ways).to_string(),
                        (slot % ways).to_string(),
                        e.tag.to_string(),
                        e.ctr.to_string(),
                        e.useful.to_string(),
                        e.sec.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}
