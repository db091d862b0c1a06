//! Single FIFO with a byte cap and no active management.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{Dequeued, EnqueueOutcome, QueueCounters, QueueDiscipline, QueueId};
use crate::error::{ensure, ConfigError};
use crate::rng::StreamRng;
use crate::types::{Packet, SimTime};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DropTailConfig {
    pub queue_limit_bytes: u64,
}

impl Default for DropTailConfig {
    fn default() -> Self {
        DropTailConfig {
            queue_limit_bytes: 375_000,
        }
    }
}

impl DropTailConfig {
    pub fn validate(&self, max_packet_bytes: u32) -> Result<(), ConfigError> {
        ensure(
            self.queue_limit_bytes > max_packet_bytes as u64,
            "queue_limit_bytes",
            "must exceed the largest packet size",
        )
    }
}

#[derive(Debug)]
pub struct DropTail {
    cfg: DropTailConfig,
    queue: VecDeque<Packet>,
    bytes: u64,
    counters: QueueCounters,
}

impl DropTail {
    pub fn new(cfg: DropTailConfig) -> Self {
        DropTail {
            cfg,
            queue: VecDeque::new(),
            bytes: 0,
            counters: QueueCounters::default(),
        }
    }
}

impl QueueDiscipline for DropTail {
    fn enqueue(&mut self, packet: Packet, _now: SimTime) -> EnqueueOutcome {
        self.counters.enqueued += 1;
        if self.bytes + packet.size_bytes as u64 > self.cfg.queue_limit_bytes {
            self.counters.dropped_overflow += 1;
            return EnqueueOutcome::Overflow;
        }
        self.bytes += packet.size_bytes as u64;
        self.counters.in_queue += 1;
        self.queue.push_back(packet);
        EnqueueOutcome::Queued
    }

    fn dequeue(&mut self, _now: SimTime, _rng: &mut StreamRng) -> Dequeued {
        let Some(packet) = self.queue.pop_front() else {
            return Dequeued::default();
        };
        self.bytes -= packet.size_bytes as u64;
        self.counters.in_queue -= 1;
        self.counters.dequeued += 1;
        Dequeued {
            packet: Some(packet),
            from: Some(QueueId::Classic),
            ..Default::default()
        }
    }

    fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    fn counters(&self) -> Vec<(QueueId, QueueCounters)> {
        vec![(QueueId::Classic, self.counters)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{named_stream, AQM_STREAM};
    use crate::types::EcnCodepoint;

    #[test]
    fn fifo_with_cap() {
        let mut q = DropTail::new(DropTailConfig {
            queue_limit_bytes: 2000,
        });
        let mut rng = named_stream(0, AQM_STREAM);
        let mk = |seq| Packet {
            seq,
            flow_id: 0,
            size_bytes: 1000,
            ecn: EcnCodepoint::Ect1,
            frame: None,
            sent_at: SimTime::ZERO,
            is_retransmit: false,
        };
        assert_eq!(q.enqueue(mk(0), SimTime(0)), EnqueueOutcome::Queued);
        assert_eq!(q.enqueue(mk(1), SimTime(0)), EnqueueOutcome::Queued);
        assert_eq!(q.enqueue(mk(2), SimTime(0)), EnqueueOutcome::Overflow);
        let d = q.dequeue(SimTime(10_000_000), &mut rng);
        // Never marks, even ECT(1) traffic with a long sojourn.
        assert_eq!(d.packet.unwrap().ecn, EcnCodepoint::Ect1);
        assert_eq!(q.dequeue(SimTime(0), &mut rng).packet.unwrap().seq, 1);
        assert!(q.is_empty());
        assert!(q.counters()[0].1.is_conserved());
    }
}
