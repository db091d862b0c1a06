//! Bottleneck queue disciplines.

mod droptail;
mod dualpi2;

pub use droptail::{DropTail, DropTailConfig};
pub use dualpi2::{pi2_step, DualPi2, DualPi2Config, Probabilities};

use serde::{Deserialize, Serialize};

use crate::rng::StreamRng;
use crate::types::{Packet, SimTime};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnqueueOutcome {
    Queued,
    /// The destination queue had no byte budget left; the packet is gone.
    Overflow,
}

/// Which physical queue a packet sat in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QueueId {
    L4s,
    Classic,
}

/// What a single dequeue call produced.
#[derive(Debug, Default)]
pub struct Dequeued {
    pub packet: Option<Packet>,
    pub from: Option<QueueId>,
    /// The packet left with a CE mark applied by this call.
    pub marked: bool,
    /// Packets discarded by the AQM during this call.
    pub dropped: Vec<Packet>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct QueueCounters {
    pub enqueued: u64,
    pub dequeued: u64,
    pub dropped_overflow: u64,
    pub dropped_aqm: u64,
    pub marked: u64,
    pub in_queue: u64,
}

impl QueueCounters {
    pub fn dropped(&self) -> u64 {
        self.dropped_overflow + self.dropped_aqm
    }

    /// `enqueued` counts every arrival, including the ones refused on
    /// overflow.
    pub fn is_conserved(&self) -> bool {
        self.enqueued == self.dequeued + self.dropped() + self.in_queue
    }
}

pub trait QueueDiscipline {
    fn enqueue(&mut self, packet: Packet, now: SimTime) -> EnqueueOutcome;

    fn dequeue(&mut self, now: SimTime, rng: &mut StreamRng) -> Dequeued;

    fn is_empty(&self) -> bool;

    /// Period of the discipline's control loop, if it has one.
    fn update_interval(&self) -> Option<crate::types::SimDuration> {
        None
    }

    fn periodic_update(&mut self, _now: SimTime) {}

    /// Counters for the L4S queue (if any) and the classic queue.
    fn counters(&self) -> Vec<(QueueId, QueueCounters)>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AqmConfig {
    #[serde(rename = "dualpi2")]
    DualPi2(DualPi2Config),
    DropTail(DropTailConfig),
}

impl Default for AqmConfig {
    fn default() -> Self {
        AqmConfig::DualPi2(DualPi2Config::default())
    }
}

impl AqmConfig {
    pub fn validate(&self, max_packet_bytes: u32) -> Result<(), crate::error::ConfigError> {
        match self {
            AqmConfig::DualPi2(c) => c.validate(max_packet_bytes),
            AqmConfig::DropTail(c) => c.validate(max_packet_bytes),
        }
    }

    pub fn build(&self) -> Box<dyn QueueDiscipline> {
        match self {
            AqmConfig::DualPi2(c) => Box::new(DualPi2::new(c.clone())),
            AqmConfig::DropTail(c) => Box::new(DropTail::new(c.clone())),
        }
    }
}
