//! Mistraining procedures run against a predictor instance.

mod alias;
mod core;
mod search;
mod slides;
mod train;

pub use self::core::{Core, SlideTraffic};
pub use alias::{aliasing_detect, AliasClass, AliasConfig, AliasReport, BranchPair};
pub use search::{run_search, trial, ResetPolicy, SearchMode, SearchReport, TrialConfig, TrialOutcome};
pub use slides::{random_slide, slide_with_history};
pub use train::{lpc_primitive, setup_victim, train_mistrain, VictimSpec};

use thiserror::Error;

use crate::bhr::BhrError;
use crate::tage::TageError;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HarnessError {
    #[error(transparent)]
    Bhr(#[from] BhrError),
    #[error(transparent)]
    Tage(#[from] TageError),
    #[error("victim setup failed: provider {got}, expected {want}")]
    VictimSetup { got: usize, want: usize },
    #[error("invalid trial config: {0}")]
    InvalidTrial(String),
}

/// Child seed for stream `index` of `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
