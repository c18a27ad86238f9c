//! TAGE conditional direction predictor.

mod config;
mod hash;
mod predictor;

pub use config::{geometric_lengths, AltUpdate, Isolation, TageConfig, MAX_TABLES};
pub use hash::HashFamily;
pub use predictor::{Lookup, Prediction, TagePredictor, UpdateInfo};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TageError {
    #[error("invalid TAGE config: {0}")]
    InvalidConfig(String),
    #[error("table index {0} outside 1..={1}")]
    TableIndex(usize, usize),
    #[error("update without a preceding predict on the same branch and history")]
    UpdateWithoutPredict,
    #[error("history width {got} does not match the last history length {want}")]
    WidthMismatch { got: usize, want: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Privilege {
    #[default]
    El0,
    El1,
}

/// Execution context used for security tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct SecurityContext {
    pub privilege: Privilege,
    pub process_id: u32,
}

impl SecurityContext {
    pub const fn new(privilege: Privilege, process_id: u32) -> Self {
        SecurityContext { privilege, process_id }
    }

    pub const fn user(process_id: u32) -> Self {
        Self::new(Privilege::El0, process_id)
    }

    pub const fn kernel() -> Self {
        Self::new(Privilege::El1, 0)
    }

    /// Tag value stored in entries under the given isolation mode.
    pub fn tag(&self, isolation: Isolation) -> u32 {
        let el = match self.privilege {
            Privilege::El0 => 0,
            Privilege::El1 => 1,
        };
        match isolation {
            Isolation::Off => 0,
            Isolation::PrivilegeTag => el,
            Isolation::ProcessTag => self.process_id.wrapping_shl(1) | el,
        }
    }
}
