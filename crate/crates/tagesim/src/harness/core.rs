use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bhr::{BhrModel, BhrState, BranchEvent, BranchSlide};
use crate::tage::{SecurityContext, TagePredictor};

use super::HarnessError;

/// How slide branches before a terminal interact with the predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SlideTraffic {
    /// Slide branches only shape the history.
    #[default]
    HistoryOnly,
    /// Slide conditionals are also predicted and trained.
    Predicted,
}

/// A predictor plus the running history it sees.
#[derive(Debug, Clone)]
pub struct Core {
    pub tage: TagePredictor,
    pub model: Arc<BhrModel>,
    pub bhr: BhrState,
}

impl Core {
    pub fn new(tage: TagePredictor, model: Arc<BhrModel>) -> Result<Self, HarnessError> {
        tage.check_width(model.width())?;
        let bhr = model.zero_state();
        Ok(Core { tage, model, bhr })
    }

    /// Executes one branch. Conditionals return whether they mispredicted.
    #[inline]
    pub fn step(&mut self, e: &BranchEvent, ctx: SecurityContext) -> Option<bool> {
        let out = if e.kind.is_conditional() {
            let taken = e.kind == crate::bhr::BranchKind::ConditionalTaken;
            Some(self.tage.execute(e.pc, &self.bhr, taken, ctx).taken != taken)
        } else {
            None
        };
        self.model.apply(&mut self.bhr, e);
        out
    }

    /// Executes all events, returning the number of mispredictions.
    pub fn run(&mut self, events: &[BranchEvent], ctx: SecurityContext) -> usize {
        events.iter().filter_map(|e| self.step(e, ctx)).filter(|&m| m).count()
    }

    /// Brings the history to the slide's terminal context.
    pub fn enter_slide(&mut self, slide: &BranchSlide, cached: &BhrState, traffic: SlideTraffic, ctx: SecurityContext) {
        match traffic {
            SlideTraffic::HistoryOnly => self.bhr = *cached,
            SlideTraffic::Predicted => {
                self.run(slide.prefix(), ctx);
            }
        }
    }
}
