//! DualPI2: a coupled dual-queue AQM.
//!
//! ECT(1)/CE traffic goes to a shallow L4S queue, everything else to the
//! classic queue. A PI controller on the classic queue's sojourn delay drives
//! a base probability `p`. Classic packets are dropped with `p²`; L4S packets
//! are CE-marked with `min(1, k·p)`, or unconditionally once their own sojourn
//! passes a small step threshold. Both decisions are taken at dequeue.
//!
//! The scheduler is a time-shifted FIFO: the L4S head wins unless the classic
//! head has been waiting longer than `time_shift` more than it.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dequeued, EnqueueOutcome, QueueCounters, QueueDiscipline, QueueId};
use crate::error::{ensure, ConfigError};
use crate::rng::StreamRng;
use crate::types::{apply_ce_mark, classify_flow, FlowClass, Packet, SimDuration, SimTime};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualPi2Config {
    pub target_delay_ms: f64,
    pub t_update_ms: f64,
    /// Integral gain, Hz.
    pub alpha: f64,
    /// Proportional gain, Hz.
    pub beta: f64,
    pub coupling_k: f64,
    pub l4s_step_threshold_ms: f64,
    pub queue_limit_bytes: u64,
    pub time_shift_ms: f64,
}

impl Default for DualPi2Config {
    fn default() -> Self {
        DualPi2Config {
            target_delay_ms: 15.0,
            t_update_ms: 16.0,
            alpha: 0.16,
            beta: 3.2,
            coupling_k: 2.0,
            l4s_step_threshold_ms: 1.0,
            queue_limit_bytes: 375_000,
            time_shift_ms: 50.0,
        }
    }
}

impl DualPi2Config {
    pub fn validate(&self, max_packet_bytes: u32) -> Result<(), ConfigError> {
        ensure(self.target_delay_ms > 0.0, "target_delay_ms", "must be > 0")?;
        ensure(self.t_update_ms > 0.0, "t_update_ms", "must be > 0")?;
        ensure(self.alpha >= 0.0, "alpha", "must be >= 0")?;
        ensure(self.beta >= 0.0, "beta", "must be >= 0")?;
        ensure(self.coupling_k >= 1.0, "coupling_k", "must be >= 1")?;
        ensure(
            self.l4s_step_threshold_ms > 0.0,
            "l4s_step_threshold_ms",
            "must be > 0",
        )?;
        ensure(self.time_shift_ms > 0.0, "time_shift_ms", "must be > 0")?;
        ensure(
            self.queue_limit_bytes > max_packet_bytes as u64,
            "queue_limit_bytes",
            "must exceed the largest packet size",
        )
    }
}

/// One step of the PI recurrence. Delays in seconds; result clamped to [0, 1].
pub fn pi2_step(p_base: f64, c_delay_s: f64, prev_c_delay_s: f64, cfg: &DualPi2Config) -> f64 {
    let t_update_s = cfg.t_update_ms / 1e3;
    let target_s = cfg.target_delay_ms / 1e3;
    let delta = cfg.alpha * (c_delay_s - target_s) + cfg.beta * (c_delay_s - prev_c_delay_s);
    (p_base + delta * t_update_s).clamp(0.0, 1.0)
}

/// Probabilities derived from the base probability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Probabilities {
    pub base: f64,
    /// Drop probability applied to the classic queue.
    pub classic: f64,
    /// Coupled mark probability applied to the L4S queue.
    pub l4s_coupled: f64,
}

impl Probabilities {
    pub fn from_base(base: f64, coupling_k: f64) -> Self {
        Probabilities {
            base,
            classic: base * base,
            l4s_coupled: (coupling_k * base).min(1.0),
        }
    }
}

#[derive(Debug)]
struct Entry {
    packet: Packet,
    enqueued_at: SimTime,
}

#[derive(Debug, Default)]
struct Lane {
    entries: VecDeque<Entry>,
    bytes: u64,
    counters: QueueCounters,
}

impl Lane {
    fn push(&mut self, packet: Packet, now: SimTime, limit: u64) -> EnqueueOutcome {
        self.counters.enqueued += 1;
        if self.bytes + packet.size_bytes as u64 > limit {
            self.counters.dropped_overflow += 1;
            return EnqueueOutcome::Overflow;
        }
        self.bytes += packet.size_bytes as u64;
        self.counters.in_queue += 1;
        self.entries.push_back(Entry {
            packet,
            enqueued_at: now,
        });
        EnqueueOutcome::Queued
    }

    fn pop(&mut self) -> Option<Entry> {
        let e = self.entries.pop_front()?;
        self.bytes -= e.packet.size_bytes as u64;
        self.counters.in_queue -= 1;
        Some(e)
    }

    fn head_time(&self) -> Option<SimTime> {
        self.entries.front().map(|e| e.enqueued_at)
    }
}

#[derive(Debug)]
pub struct DualPi2 {
    cfg: DualPi2Config,
    l_queue: Lane,
    c_queue: Lane,
    p_base: f64,
    prev_c_delay: SimDuration,
    last_update: SimTime,
    step_threshold: SimDuration,
    time_shift: SimDuration,
}

impl DualPi2 {
    pub fn new(cfg: DualPi2Config) -> Self {
        let step_threshold = SimDuration::from_millis_f64(cfg.l4s_step_threshold_ms);
        let time_shift = SimDuration::from_millis_f64(cfg.time_shift_ms);
        DualPi2 {
            cfg,
            l_queue: Lane::default(),
            c_queue: Lane::default(),
            p_base: 0.0,
            prev_c_delay: SimDuration::ZERO,
            last_update: SimTime::ZERO,
            step_threshold,
            time_shift,
        }
    }

    pub fn config(&self) -> &DualPi2Config {
        &self.cfg
    }

    pub fn probabilities(&self) -> Probabilities {
        Probabilities::from_base(self.p_base, self.cfg.coupling_k)
    }

    pub fn p_base(&self) -> f64 {
        self.p_base
    }

    /// Overrides the base probability; for driving the queue from tests.
    pub fn set_p_base(&mut self, p: f64) {
        self.p_base = p.clamp(0.0, 1.0);
    }

    pub fn queue_bytes(&self, id: QueueId) -> u64 {
        match id {
            QueueId::L4s => self.l_queue.bytes,
            QueueId::Classic => self.c_queue.bytes,
        }
    }

    /// Head-of-line sojourn time of the classic queue, zero when empty.
    pub fn classic_delay(&self, now: SimTime) -> SimDuration {
        self.c_queue
            .head_time()
            .map_or(SimDuration::ZERO, |t| now.saturating_since(t))
    }

    /// Runs one PI update. Callers are expected to invoke this every
    /// `t_update`; the recurrence itself uses the configured period.
    pub fn pi2_update(&mut self, now: SimTime) {
        let c_delay = self.classic_delay(now);
        self.p_base = pi2_step(
            self.p_base,
            c_delay.as_secs_f64(),
            self.prev_c_delay.as_secs_f64(),
            &self.cfg,
        );
        self.prev_c_delay = c_delay;
        self.last_update = now;
    }

    pub fn last_update(&self) -> SimTime {
        self.last_update
    }

    fn pick(&self) -> Option<QueueId> {
        match (self.l_queue.head_time(), self.c_queue.head_time()) {
            (None, None) => None,
            (Some(_), None) => Some(QueueId::L4s),
            (None, Some(_)) => Some(QueueId::Classic),
            (Some(l), Some(c)) => {
                let shifted = l.0 as i128 - self.time_shift.0 as i128;
                if shifted <= c.0 as i128 {
                    Some(QueueId::L4s)
                } else {
                    Some(QueueId::Classic)
                }
            }
        }
    }
}

impl QueueDiscipline for DualPi2 {
    fn enqueue(&mut self, packet: Packet, now: SimTime) -> EnqueueOutcome {
        let limit = self.cfg.queue_limit_bytes;
        match classify_flow(packet.ecn) {
            FlowClass::L4s => self.l_queue.push(packet, now, limit),
            FlowClass::Classic => self.c_queue.push(packet, now, limit),
        }
    }

    fn dequeue(&mut self, now: SimTime, rng: &mut StreamRng) -> Dequeued {
        let mut out = Dequeued::default();
        let probs = self.probabilities();
        loop {
            let Some(which) = self.pick() else {
                return out;
            };
            match which {
                QueueId::L4s => {
                    let entry = self.l_queue.pop().expect("picked a non-empty queue");
                    self.l_queue.counters.dequeued += 1;
                    let sojourn = now.saturating_since(entry.enqueued_at);
                    let mut packet = entry.packet;
                    let mark = if sojourn > self.step_threshold {
                        true
                    } else {
                        probs.l4s_coupled > 0.0 && rng.gen::<f64>() < probs.l4s_coupled
                    };
                    // Already-CE packets pass through untouched.
                    if mark {
                        if let Ok(marked) = apply_ce_mark(packet.clone()) {
                            packet = marked;
                            out.marked = true;
                            self.l_queue.counters.marked += 1;
                        }
                    }
                    out.packet = Some(packet);
                    out.from = Some(QueueId::L4s);
                    return out;
                }
                QueueId::Classic => {
                    let entry = self.c_queue.pop().expect("picked a non-empty queue");
                    // At most one AQM drop per emitted packet.
                    let drop = out.dropped.is_empty()
                        && probs.classic > 0.0
                        && rng.gen::<f64>() < probs.classic;
                    if drop {
                        self.c_queue.counters.dropped_aqm += 1;
                        out.dropped.push(entry.packet);
                        continue;
                    }
                    self.c_queue.counters.dequeued += 1;
                    out.packet = Some(entry.packet);
                    out.from = Some(QueueId::Classic);
                    return out;
                }
            }
        }
    }

    fn is_empty(&self) -> bool {
        self.l_queue.entries.is_empty() && self.c_queue.entries.is_empty()
    }

    fn update_interval(&self) -> Option<SimDuration> {
        Some(SimDuration::from_millis_f64(self.cfg.t_update_ms))
    }

    fn periodic_update(&mut self, now: SimTime) {
        self.pi2_update(now);
    }

    fn counters(&self) -> Vec<(QueueId, QueueCounters)> {
        vec![
            (QueueId::L4s, self.l_queue.counters),
            (QueueId::Classic, self.c_queue.counters),
        ]
    }
}
