//! Shared domain types: virtual time, ECN codepoints, packets and the
//! receiver-to-sender feedback report.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Microseconds since the start of a simulation.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct SimTime(pub u64);

/// A non-negative span of virtual time in microseconds.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct SimDuration(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub fn from_secs_f64(s: f64) -> Self {
        SimTime((s * 1e6).round() as u64)
    }

    pub fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e3
    }

    /// Elapsed time since `earlier`, saturating at zero.
    pub fn saturating_since(self, earlier: SimTime) -> SimDuration {
        SimDuration(self.0.saturating_sub(earlier.0))
    }
}

impl SimDuration {
    pub const ZERO: SimDuration = SimDuration(0);

    pub fn from_micros(us: u64) -> Self {
        SimDuration(us)
    }

    pub fn from_millis(ms: u64) -> Self {
        SimDuration(ms * 1_000)
    }

    pub fn from_secs(s: u64) -> Self {
        SimDuration(s * 1_000_000)
    }

    pub fn from_secs_f64(s: f64) -> Self {
        SimDuration((s * 1e6).round() as u64)
    }

    pub fn from_millis_f64(ms: f64) -> Self {
        SimDuration((ms * 1e3).round() as u64)
    }

    pub fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e3
    }
}

impl Add<SimDuration> for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimDuration) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign<SimDuration> for SimTime {
    fn add_assign(&mut self, rhs: SimDuration) {
        self.0 += rhs.0;
    }
}

impl Sub<SimTime> for SimTime {
    type Output = SimDuration;
    /// Panics if `rhs` is later than `self`; use [`SimTime::saturating_since`]
    /// when ordering is not guaranteed.
    fn sub(self, rhs: SimTime) -> SimDuration {
        SimDuration(
            self.0
                .checked_sub(rhs.0)
                .expect("time subtraction would go negative"),
        )
    }
}

impl Add for SimDuration {
    type Output = SimDuration;
    fn add(self, rhs: SimDuration) -> SimDuration {
        SimDuration(self.0 + rhs.0)
    }
}

impl AddAssign for SimDuration {
    fn add_assign(&mut self, rhs: SimDuration) {
        self.0 += rhs.0;
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.as_secs_f64())
    }
}

/// The two ECN bits of the IP header.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EcnCodepoint {
    /// `00`
    NotEct,
    /// `10`
    Ect0,
    /// `01`, identifies an L4S sender.
    Ect1,
    /// `11`, congestion experienced.
    Ce,
}

impl EcnCodepoint {
    pub fn bits(self) -> u8 {
        match self {
            EcnCodepoint::NotEct => 0b00,
            EcnCodepoint::Ect0 => 0b10,
            EcnCodepoint::Ect1 => 0b01,
            EcnCodepoint::Ce => 0b11,
        }
    }

    /// Decodes the low two bits of `bits`.
    pub fn from_bits(bits: u8) -> Self {
        match bits & 0b11 {
            0b00 => EcnCodepoint::NotEct,
            0b10 => EcnCodepoint::Ect0,
            0b01 => EcnCodepoint::Ect1,
            _ => EcnCodepoint::Ce,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlowClass {
    L4s,
    Classic,
}

/// Maps a codepoint to the queue class it belongs to.
///
/// CE is treated as L4S: classic traffic is never CE-marked here, so a CE
/// packet can only have started life as ECT(1).
pub fn classify_flow(ecn: EcnCodepoint) -> FlowClass {
    match ecn {
        EcnCodepoint::Ect1 | EcnCodepoint::Ce => FlowClass::L4s,
        EcnCodepoint::NotEct | EcnCodepoint::Ect0 => FlowClass::Classic,
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MarkError {
    #[error("cannot CE-mark a packet carrying {0:?}; only ECT(1) packets are marked")]
    NotMarkable(EcnCodepoint),
}

/// Sets CE on an ECT(1) packet. Every other field is left untouched.
pub fn apply_ce_mark(mut packet: Packet) -> Result<Packet, MarkError> {
    if packet.ecn != EcnCodepoint::Ect1 {
        return Err(MarkError::NotMarkable(packet.ecn));
    }
    packet.ecn = EcnCodepoint::Ce;
    Ok(packet)
}

/// Position of a packet inside a media frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FramePart {
    pub frame_id: u64,
    /// Index of this packet within the frame, `0..count`.
    pub index: u32,
    /// Number of packets the frame was split into.
    pub count: u32,
    /// Total media bytes of the whole frame.
    pub frame_bytes: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Packet {
    pub seq: u64,
    pub flow_id: u32,
    pub size_bytes: u32,
    pub ecn: EcnCodepoint,
    pub frame: Option<FramePart>,
    pub sent_at: SimTime,
    pub is_retransmit: bool,
}

impl Packet {
    pub fn frame_id(&self) -> Option<u64> {
        self.frame.map(|f| f.frame_id)
    }
}

/// One received packet as seen by the feedback report.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArrivalSample {
    pub seq: u64,
    pub sent_at: SimTime,
    pub arrived_at: SimTime,
    pub size_bytes: u32,
}

/// Periodic report from the receiver, carrying loss, arrival timing and the
/// ECT(1)/CE counts for the interval.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeedbackReport {
    pub interval_start: SimTime,
    pub interval_end: SimTime,
    pub received_count: u64,
    pub lost_seqs: Vec<u64>,
    pub ect1_count: u64,
    pub ce_count: u64,
    /// Ordered by sequence number. Retransmissions are left out because their
    /// send times would distort the delay-gradient groups.
    pub arrival_samples: Vec<ArrivalSample>,
    /// Most recent round-trip estimate; filled in by the sender on receipt.
    pub rtt_sample_us: Option<u64>,
}

impl FeedbackReport {
    pub fn empty(interval_start: SimTime, interval_end: SimTime) -> Self {
        FeedbackReport {
            interval_start,
            interval_end,
            ..Default::default()
        }
    }

    pub fn loss_rate(&self) -> f64 {
        let lost = self.lost_seqs.len() as f64;
        let total = lost + self.received_count as f64;
        if total == 0.0 {
            0.0
        } else {
            lost / total
        }
    }
}
