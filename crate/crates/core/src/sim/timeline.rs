use std::fmt;

use crate::types::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TimelineKind {
    /// Packet released by the pacer; value is the sequence number.
    Send,
    /// Packet reached the receiver; value is the sequence number.
    Deliver,
    /// CE mark applied at the bottleneck; value is the sequence number.
    Mark,
    /// Packet discarded at the bottleneck; value is the sequence number.
    Drop,
    /// Controller target changed; value in bits per second.
    Rate,
    /// Playback halted; value is the missing frame.
    Stall,
    /// Playback resumed; value is the stall length in microseconds.
    Resume,
}

impl TimelineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TimelineKind::Send => "send",
            TimelineKind::Deliver => "deliver",
            TimelineKind::Mark => "mark",
            TimelineKind::Drop => "drop",
            TimelineKind::Rate => "rate",
            TimelineKind::Stall => "stall",
            TimelineKind::Resume => "resume",
        }
    }
}

impl fmt::Display for TimelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimelineEvent {
    pub t: SimTime,
    pub kind: TimelineKind,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Timeline {
    pub events: Vec<TimelineEvent>,
}

impl Timeline {
    pub fn push(&mut self, t: SimTime, kind: TimelineKind, value: f64) {
        self.events.push(TimelineEvent { t, kind, value });
    }

    pub fn count(&self, kind: TimelineKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }
}
