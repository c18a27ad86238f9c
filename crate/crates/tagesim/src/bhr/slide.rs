use super::{BhrError, BranchEvent};

/// Branch sequence whose last event is the terminal conditional branch.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BranchSlide {
    events: Vec<BranchEvent>,
}

impl BranchSlide {
    pub fn new(events: Vec<BranchEvent>) -> Result<Self, BhrError> {
        let last = events.last().ok_or(BhrError::EmptySlide)?;
        if !last.kind.is_conditional() {
            return Err(BhrError::TerminalNotConditional);
        }
        for e in &events {
            e.validate()?;
        }
        Ok(BranchSlide { events })
    }

    /// Slide with `prefix` followed by `terminal`.
    pub fn with_terminal(mut prefix: Vec<BranchEvent>, terminal: BranchEvent) -> Result<Self, BhrError> {
        prefix.push(terminal);
        Self::new(prefix)
    }

    pub fn events(&self) -> &[BranchEvent] {
        &self.events
    }

    /// Events before the terminal branch.
    pub fn prefix(&self) -> &[BranchEvent] {
        &self.events[..self.events.len() - 1]
    }

    pub fn terminal(&self) -> &BranchEvent {
        self.events.last().expect("slides are nonempty")
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Same slide with the terminal's outcome replaced.
    pub fn with_terminal_outcome(&self, taken: bool) -> Self {
        let mut events = self.events.clone();
        let t = events.last_mut().expect("nonempty");
        *t = t.with_outcome(taken);
        BranchSlide { events }
    }
}
