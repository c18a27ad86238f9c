use rand::Rng;

use crate::bhr::{Attribute, BhrError, BhrModel, BhrState, BranchEvent, BranchSlide, ADDR_MASK};

fn random_addr<R: Rng + ?Sized>(rng: &mut R) -> u64 {
    rng.gen::<u64>() & ADDR_MASK & !3
}

fn random_imm<R: Rng + ?Sized>(rng: &mut R) -> i32 {
    rng.gen_range(BranchEvent::IMM_MIN..=BranchEvent::IMM_MAX)
}

/// `HL` interlinked taken branches followed by a taken conditional terminal.
/// The first branch is conditional; the rest are conditional or indirect
/// with equal probability. Each branch starts at its predecessor's target.
pub fn random_slide<R: Rng + ?Sized>(rng: &mut R, model: &BhrModel) -> BranchSlide {
    let hl = model.config().history_length;
    let mut events = Vec::with_capacity(hl + 1);
    let mut pc = random_addr(rng);
    for k in 0..hl {
        let e = if k == 0 || rng.gen_bool(0.5) {
            BranchEvent::conditional(pc, random_imm(rng), true)
        } else {
            BranchEvent::indirect(pc, random_addr(rng))
        }
        .expect("generated addresses are aligned 48-bit values");
        pc = e.target;
        events.push(e);
    }
    events.push(BranchEvent::conditional(pc, random_imm(rng), true).expect("aligned"));
    BranchSlide::new(events).expect("terminal is conditional")
}

/// A slide of `HL` taken conditionals that leaves exactly `target` in the
/// history, ending at a conditional at `terminal_pc`. Each branch adds
/// one bit through PC bit 2; branches sit at distinct addresses above bit 32.
pub fn slide_with_history(model: &BhrModel, target: &BhrState, terminal_pc: u64) -> Result<BranchSlide, BhrError> {
    if model.bit_word(Attribute::CondPc, 2) != 1 {
        return Err(BhrError::InvalidMasks("conditional PC bit 2 must land on history bit 0".into()));
    }
    let hl = model.config().history_length;
    if target.width() != model.width() {
        return Err(BhrError::InvalidConfig("target width differs from the model".into()));
    }
    let events = (0..hl)
        .map(|k| {
            let bit = target.bit(hl - 1 - k) as u64;
            BranchEvent::conditional(((k as u64 + 1) << 32) | bit << 2, 0, true)
        })
        .collect::<Result<Vec<_>, _>>()?;
    BranchSlide::with_terminal(events, BranchEvent::conditional(terminal_pc, 0, true)?)
}
