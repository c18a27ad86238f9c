//! Reproduction scenarios: two-path attribute experiments, probes and
//! search campaigns. Each scenario yields a [`Table`] ready for CSV output.

mod campaign;
mod config;
mod probes;
mod table;
mod two_path;

pub use campaign::{
    campaign_victim, run_alias_detect, run_estimate, run_lpc_compare, run_search_campaign, AliasPairKind, CampaignRow,
    LpcCompareRow,
};
pub use config::{run_scenario, CustomArch, ScenarioConfig, ScenarioId, ScenarioOutput, TagePreset};
pub use probes::{run_counter_probe, run_isolation, CounterProbe, Crossing, IsolationRow};
pub use table::{fmt_sig6, Table};
pub use two_path::{
    expected_cancellation, expected_effect, rows_table, run_bit_effect, run_distance_sweep, run_outcome_effect,
    run_update_policy, Classification, DistanceSweep, PathSetup, ResultRow, TwoPathExperiment,
};

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bhr::{BhrError, BhrModel};
use crate::harness::HarnessError;
use crate::tage::{TageConfig, TageError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Bhr(#[from] BhrError),
    #[error(transparent)]
    Tage(#[from] TageError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Stats(#[from] crate::stats::StatsError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Firestorm,
    Icestorm,
    Custom,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Firestorm => "firestorm",
            Preset::Icestorm => "icestorm",
            Preset::Custom => "custom",
        }
    }
}

/// History model and predictor sizing of one core type.
#[derive(Debug, Clone)]
pub struct Microarch {
    pub name: String,
    pub model: Arc<BhrModel>,
    pub tage: TageConfig,
}

impl Microarch {
    pub fn new(name: &str, model: BhrModel, tage: TageConfig) -> Result<Self, ExperimentError> {
        tage.validate()?;
        if tage.history_width() != model.width() {
            return Err(TageError::WidthMismatch { got: model.width(), want: tage.history_width() }.into());
        }
        Ok(Microarch { name: name.to_string(), model: Arc::new(model), tage })
    }

    pub fn firestorm() -> Self {
        Self::new("firestorm", BhrModel::firestorm(), TageConfig::firestorm()).expect("valid preset")
    }

    pub fn icestorm() -> Self {
        Self::new("icestorm", BhrModel::icestorm(), TageConfig::icestorm()).expect("valid preset")
    }

    pub fn preset(p: Preset) -> Result<Self, ExperimentError> {
        match p {
            Preset::Firestorm => Ok(Self::firestorm()),
            Preset::Icestorm => Ok(Self::icestorm()),
            Preset::Custom => Err(ExperimentError::Invalid("custom preset needs explicit fields".into())),
        }
    }

    pub fn history_length(&self) -> usize {
        self.model.config().history_length
    }

    /// Same core with a different predictor sizing.
    pub fn with_tage(&self, tage: TageConfig) -> Result<Self, ExperimentError> {
        Self::new(&self.name, (*self.model).clone(), tage)
    }
}
