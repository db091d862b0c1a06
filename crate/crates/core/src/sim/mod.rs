//! Discrete-event engine: sender → bottleneck queue → link → receiver, with
//! feedback returning over a fixed-delay reverse path.

mod scenario;
mod timeline;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

pub use scenario::Scenario;
pub use timeline::{Timeline, TimelineEvent, TimelineKind};

use crate::aqm::{QueueCounters, QueueDiscipline, QueueId};
use crate::cc::Controller;
use crate::error::ConfigError;
use crate::media::{MediaSender, PlayoutStep, ReceiverState};
use crate::netem::BottleneckLink;
use crate::rng::{named_stream, StreamRng, AQM_STREAM, JITTER_STREAM};
use crate::types::{FeedbackReport, Packet, SimDuration, SimTime};

#[derive(Clone, Debug)]
pub enum EventKind {
    EncodeTick,
    /// The pacer hands its next packet to the bottleneck queue.
    PacketArriveAtQueue,
    /// The link finished serializing and can take the next packet.
    LinkIdle,
    LinkDeliver(Packet),
    PlayoutTick,
    FeedbackDue,
    /// A report reaches the sender after the reverse-path delay.
    FeedbackArrive(FeedbackReport),
    Pi2Update,
}

#[derive(Debug)]
pub struct Event {
    pub due: SimTime,
    pub seq_no: u64,
    pub kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.due, self.seq_no) == (other.due, other.seq_no)
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so the max-heap pops the earliest (due, seq_no) first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.due, other.seq_no).cmp(&(self.due, self.seq_no))
    }
}

/// Pending events in `(due, seq_no)` order. `seq_no` is the insertion count,
/// so simultaneous events run in the order they were scheduled.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
}

impl EventQueue {
    pub fn schedule(&mut self, due: SimTime, kind: EventKind) {
        let seq_no = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { due, seq_no, kind });
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop()
    }

    pub fn peek_due(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.due)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Event> {
        self.heap.iter()
    }
}

/// Raw counters collected by a run, from which metrics are computed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunStats {
    pub duration: SimDuration,
    pub rtt_count: u64,
    pub rtt_min_us: u64,
    pub rtt_max_us: u64,
    pub rtt_sum_us: u64,
    pub stalled_time: SimDuration,
    pub stall_count: u64,
    pub played_bytes: u64,
    pub played_frames: u64,
    /// Time-average forward capacity over the run, bits per second.
    pub average_capacity_bps: f64,
    pub marks: u64,
    pub drops: u64,
    pub packets_sent: u64,
    pub packets_delivered: u64,
    pub in_queue_at_end: u64,
    pub in_flight_at_end: u64,
    pub retransmissions: u64,
    pub bytes_encoded: u64,
    pub feedback_reports: u64,
    pub queues: Vec<(QueueId, QueueCounters)>,
    pub events_processed: u64,
}

impl RunStats {
    /// `sent = delivered + dropped + in queue + on the wire` end to end, and
    /// every queue balances its own books.
    pub fn is_conserved(&self) -> bool {
        let e2e = self.packets_sent
            == self.packets_delivered + self.drops + self.in_queue_at_end + self.in_flight_at_end;
        let enqueued: u64 = self.queues.iter().map(|(_, c)| c.enqueued).sum();
        let in_queue: u64 = self.queues.iter().map(|(_, c)| c.in_queue).sum();
        e2e && enqueued == self.packets_sent
            && in_queue == self.in_queue_at_end
            && self.queues.iter().all(|(_, c)| c.is_conserved())
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub stats: RunStats,
    pub timeline: Option<Timeline>,
}

struct Engine<'a> {
    sc: &'a Scenario,
    end: SimTime,
    events: EventQueue,
    sender: MediaSender,
    receiver: ReceiverState,
    controller: Controller,
    queue: Box<dyn QueueDiscipline>,
    link: BottleneckLink,
    link_busy: bool,
    playout_pending: bool,
    aqm_rng: StreamRng,
    jitter_rng: StreamRng,
    reverse_delay: SimDuration,
    stats: RunStats,
    timeline: Option<Timeline>,
}

/// Runs a scenario to completion. The scenario is validated first; nothing
/// executes if it is invalid.
pub fn run_scenario(sc: &Scenario) -> Result<RunOutput, ConfigError> {
    sc.validate()?;
    let mut source = sc.source.clone();
    source.ecn_mode = Some(sc.ecn_codepoint());
    let start_bps = source.start_bitrate_bps;
    let mut engine = Engine {
        sc,
        end: SimTime::ZERO + sc.duration(),
        events: EventQueue::default(),
        receiver: ReceiverState::new(source.fps, &sc.playout),
        sender: MediaSender::new(source, 1),
        controller: sc.controller.build(sc.rate_bounds(), start_bps),
        queue: sc.aqm.build(),
        link: BottleneckLink::new(sc.link.clone()),
        link_busy: false,
        playout_pending: false,
        aqm_rng: named_stream(sc.seed, AQM_STREAM),
        jitter_rng: named_stream(sc.seed, JITTER_STREAM),
        reverse_delay: sc.link.reverse_delay(),
        stats: RunStats::default(),
        timeline: sc.timeline.then(Timeline::default),
    };
    engine.run();
    Ok(engine.finish())
}

impl Engine<'_> {
    fn log(&mut self, t: SimTime, kind: TimelineKind, value: f64) {
        if let Some(tl) = &mut self.timeline {
            tl.push(t, kind, value);
        }
    }

    fn run(&mut self) {
        self.events.schedule(SimTime::ZERO, EventKind::EncodeTick);
        self.events.schedule(
            SimTime::ZERO + self.sc.feedback_interval(),
            EventKind::FeedbackDue,
        );
        if let Some(iv) = self.queue.update_interval() {
            self.events
                .schedule(SimTime::ZERO + iv, EventKind::Pi2Update);
        }
        let mut now = SimTime::ZERO;
        while let Some(due) = self.events.peek_due() {
            if due >= self.end {
                break;
            }
            let ev = self.events.pop().expect("peeked");
            debug_assert!(ev.due >= now, "event scheduled in the past");
            now = ev.due;
            self.stats.events_processed += 1;
            self.handle(now, ev.kind);
        }
    }

    fn handle(&mut self, now: SimTime, kind: EventKind) {
        match kind {
            EventKind::EncodeTick => {
                let src = self.sender.config();
                let target = if src.adaptive {
                    self.controller
                        .target_bps()
                        .clamp(src.min_bitrate_bps, src.max_bitrate_bps)
                } else {
                    src.start_bitrate_bps
                };
                let next = SimTime::ZERO + src.frame_offset(self.sender.frames_encoded() + 1);
                if self.sender.encode(target, now) {
                    self.events.schedule(now, EventKind::PacketArriveAtQueue);
                }
                self.events.schedule(next, EventKind::EncodeTick);
            }
            EventKind::PacketArriveAtQueue => {
                let Some((packet, next)) = self.sender.release(now) else {
                    return;
                };
                self.stats.packets_sent += 1;
                self.log(now, TimelineKind::Send, packet.seq as f64);
                let seq = packet.seq;
                if self.queue.enqueue(packet, now) == crate::aqm::EnqueueOutcome::Overflow {
                    self.stats.drops += 1;
                    self.log(now, TimelineKind::Drop, seq as f64);
                }
                if let Some(t) = next {
                    self.events.schedule(t, EventKind::PacketArriveAtQueue);
                }
                if !self.link_busy {
                    self.start_transmission(now);
                }
            }
            EventKind::LinkIdle => {
                self.link_busy = false;
                self.start_transmission(now);
            }
            EventKind::LinkDeliver(packet) => self.on_deliver(packet, now),
            EventKind::PlayoutTick => {
                self.playout_pending = false;
                if self.receiver.next_deadline() != Some(now) {
                    self.schedule_playout(now);
                    return;
                }
                match self.receiver.playout_tick(now) {
                    PlayoutStep::Played(_) => self.schedule_playout(now),
                    PlayoutStep::Stalled(f) => self.log(now, TimelineKind::Stall, f as f64),
                }
            }
            EventKind::FeedbackDue => {
                let report = self.receiver.build_feedback(now);
                self.events
                    .schedule(now + self.reverse_delay, EventKind::FeedbackArrive(report));
                self.events
                    .schedule(now + self.sc.feedback_interval(), EventKind::FeedbackDue);
            }
            EventKind::FeedbackArrive(report) => {
                self.stats.feedback_reports += 1;
                if self.sender.config().adaptive {
                    let before = self.controller.target_bps();
                    let after = self.controller.on_feedback(&report, now);
                    if after != before {
                        self.log(now, TimelineKind::Rate, after as f64);
                    }
                }
                if self.sender.on_loss_report(&report) {
                    self.events.schedule(now, EventKind::PacketArriveAtQueue);
                }
            }
            EventKind::Pi2Update => {
                self.queue.periodic_update(now);
                if let Some(iv) = self.queue.update_interval() {
                    self.events.schedule(now + iv, EventKind::Pi2Update);
                }
            }
        }
    }

    fn start_transmission(&mut self, now: SimTime) {
        while !self.queue.is_empty() {
            let out = self.queue.dequeue(now, &mut self.aqm_rng);
            for d in &out.dropped {
                self.stats.drops += 1;
                self.log(now, TimelineKind::Drop, d.seq as f64);
            }
            let Some(packet) = out.packet else {
                continue;
            };
            if out.marked {
                self.stats.marks += 1;
                self.log(now, TimelineKind::Mark, packet.seq as f64);
            }
            let d = self.link.deliver(&packet, now, &mut self.jitter_rng);
            self.link_busy = true;
            self.events.schedule(d.link_free_at, EventKind::LinkIdle);
            self.events
                .schedule(d.delivered_at, EventKind::LinkDeliver(packet));
            return;
        }
    }

    fn on_deliver(&mut self, packet: Packet, now: SimTime) {
        self.stats.packets_delivered += 1;
        self.log(now, TimelineKind::Deliver, packet.seq as f64);
        let rtt = (now.saturating_since(packet.sent_at) + self.reverse_delay).as_micros();
        if self.stats.rtt_count == 0 {
            self.stats.rtt_min_us = rtt;
            self.stats.rtt_max_us = rtt;
        } else {
            self.stats.rtt_min_us = self.stats.rtt_min_us.min(rtt);
            self.stats.rtt_max_us = self.stats.rtt_max_us.max(rtt);
        }
        self.stats.rtt_count += 1;
        self.stats.rtt_sum_us += rtt;

        let outcome = self.receiver.receiver_on_packet(&packet, now);
        if outcome.completed_frame.is_some() {
            if let Some(stalled) = self.receiver.try_resume(now) {
                self.log(now, TimelineKind::Resume, stalled.as_micros() as f64);
            }
            self.schedule_playout(now);
        }
    }

    fn schedule_playout(&mut self, now: SimTime) {
        if self.playout_pending {
            return;
        }
        if let Some(d) = self.receiver.next_deadline() {
            self.playout_pending = true;
            self.events.schedule(d.max(now), EventKind::PlayoutTick);
        }
    }

    fn finish(mut self) -> RunOutput {
        self.receiver.finish(self.end);
        let s = &mut self.stats;
        s.duration = self.sc.duration();
        s.stalled_time = self.receiver.stalled_time_total();
        s.stall_count = self.receiver.stall_count();
        s.played_bytes = self.receiver.played_bytes();
        s.played_frames = self.receiver.played_frames();
        s.average_capacity_bps = self.sc.link.capacity.average_capacity(s.duration);
        s.retransmissions = self.sender.retransmissions;
        s.bytes_encoded = self.sender.bytes_encoded;
        s.queues = self.queue.counters();
        s.in_queue_at_end = s.queues.iter().map(|(_, c)| c.in_queue).sum();
        s.in_flight_at_end = self
            .events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::LinkDeliver(_)))
            .count() as u64;
        RunOutput {
            stats: self.stats,
            timeline: self.timeline,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cc::ControllerKind;
    use crate::netem::{CapacityPattern, DelayModel};

    #[test]
    fn event_order_is_due_then_insertion() {
        let mut q = EventQueue::default();
        q.schedule(SimTime(5), EventKind::FeedbackDue);
        q.schedule(SimTime(1), EventKind::EncodeTick);
        q.schedule(SimTime(5), EventKind::Pi2Update);
        q.schedule(SimTime(1), EventKind::LinkIdle);
        let order: Vec<_> = std::iter::from_fn(|| q.pop())
            .map(|e| (e.due.0, e.seq_no))
            .collect();
        assert_eq!(order, vec![(1, 1), (1, 3), (5, 0), (5, 2)]);
    }

    fn quiet(duration_s: f64) -> Scenario {
        let mut s = Scenario::new("quiet", ControllerKind::Gcc);
        s.duration_s = duration_s;
        s.source.adaptive = false;
        s.source.start_bitrate_bps = 1_000_000;
        s.link.capacity = CapacityPattern::Constant { mbps: 5.0 };
        s.link.forward_delay = DelayModel::Fixed { delay_ms: 6.0 };
        s
    }

    #[test]
    fn uncongested_path_is_clean() {
        let out = run_scenario(&quiet(5.0)).unwrap();
        let s = out.stats;
        assert_eq!((s.drops, s.marks, s.stall_count), (0, 0, 0));
        assert!(s.is_conserved());
        // 1200-byte packet at 5 Mbps takes 1920 us on the wire.
        assert_eq!(s.rtt_max_us, 12_000 + 1_920);
    }

    #[test]
    fn single_packet_timeline() {
        let mut s = quiet(0.02);
        s.source.min_bitrate_bps = 150_000;
        s.source.start_bitrate_bps = 150_000;
        s.timeline = true;
        let tl = run_scenario(&s).unwrap().timeline.unwrap();
        assert_eq!(tl.events.len(), 2);
        assert_eq!(tl.count(TimelineKind::Send), 1);
        assert_eq!(tl.count(TimelineKind::Deliver), 1);
    }

    #[test]
    fn invalid_scenario_is_rejected() {
        let mut s = quiet(1.0);
        s.feedback_interval_ms = 0.0;
        assert_eq!(run_scenario(&s).unwrap_err().path, "feedback_interval_ms");
    }
}
