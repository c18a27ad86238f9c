use crate::bhr::{BhrState, BranchSlide};
use crate::tage::SecurityContext;

use super::{Core, HarnessError, SlideTraffic};

/// The branch being attacked and the table holding its prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VictimSpec {
    pub slide: BranchSlide,
    pub depth: usize,
    pub correct: bool,
}

impl VictimSpec {
    pub fn pc(&self) -> u64 {
        self.slide.terminal().pc
    }
}

/// Installs the victim's entry at its depth, drops every other entry and
/// base state the victim could read, then confirms the provider.
pub fn setup_victim(core: &mut Core, victim: &VictimSpec, ctx: SecurityContext) -> Result<(), HarnessError> {
    let h = core.model.bhr_of_slide(&victim.slide);
    setup_victim_at(core, victim.pc(), &h, victim.depth, victim.correct, ctx)
}

pub(crate) fn setup_victim_at(
    core: &mut Core,
    pc: u64,
    h: &BhrState,
    depth: usize,
    correct: bool,
    ctx: SecurityContext,
) -> Result<(), HarnessError> {
    core.tage.install_entry(depth, pc, h, correct, ctx)?;
    core.tage.clear_except(depth, pc, h, ctx);
    let l = core.tage.lookup(pc, h, ctx);
    if l.prediction.provider != depth || l.prediction.taken != correct {
        return Err(HarnessError::VictimSetup { got: l.prediction.provider, want: depth });
    }
    Ok(())
}

/// Runs the slide and its terminal with `desired` outcome, `rounds` times.
pub fn train_mistrain(
    core: &mut Core,
    slide: &BranchSlide,
    desired: bool,
    rounds: u32,
    ctx: SecurityContext,
    traffic: SlideTraffic,
) {
    let h = core.model.bhr_of_slide(slide);
    for _ in 0..rounds {
        train_once(core, slide, &h, desired, ctx, traffic);
    }
}

#[inline]
pub(crate) fn train_once(
    core: &mut Core,
    slide: &BranchSlide,
    h: &BhrState,
    desired: bool,
    ctx: SecurityContext,
    traffic: SlideTraffic,
) {
    core.enter_slide(slide, h, traffic, ctx);
    let t = slide.terminal().with_outcome(desired);
    core.step(&t, ctx);
}

/// Interleaves training of the slide toward `taken` with training of its
/// last-bit-flipped twin toward the opposite outcome.
pub fn lpc_primitive(
    core: &mut Core,
    slide: &BranchSlide,
    taken: bool,
    rounds: u32,
    ctx: SecurityContext,
    traffic: SlideTraffic,
) -> Result<(), HarnessError> {
    let flipped = core.model.flip_last_bhr_bit(slide)?;
    let h = core.model.bhr_of_slide(slide);
    let hf = core.model.bhr_of_slide(&flipped);
    debug_assert_eq!(hf, h.with_msb_flipped());
    lpc_rounds(core, slide, &flipped, &h, &hf, taken, rounds, ctx, traffic);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn lpc_rounds(
    core: &mut Core,
    slide: &BranchSlide,
    flipped: &BranchSlide,
    h: &BhrState,
    hf: &BhrState,
    taken: bool,
    rounds: u32,
    ctx: SecurityContext,
    traffic: SlideTraffic,
) {
    for _ in 0..rounds {
        train_once(core, slide, h, taken, ctx, traffic);
        train_once(core, flipped, hf, !taken, ctx, traffic);
    }
}
