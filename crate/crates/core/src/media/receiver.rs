use serde::{Deserialize, Serialize};

use crate::error::{ensure, ConfigError};
use crate::types::{ArrivalSample, EcnCodepoint, FeedbackReport, Packet, SimDuration, SimTime};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlayoutConfig {
    /// Delay between the first completed frame and the start of playback.
    pub dejitter_offset_ms: f64,
}

impl Default for PlayoutConfig {
    fn default() -> Self {
        PlayoutConfig {
            dejitter_offset_ms: 200.0,
        }
    }
}

impl PlayoutConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        ensure(
            self.dejitter_offset_ms >= 0.0,
            "dejitter_offset_ms",
            "must be >= 0",
        )
    }
}

#[derive(Clone, Debug, Default)]
struct FrameProgress {
    parts: Vec<bool>,
    received: u32,
    bytes: u32,
    completed_at: Option<SimTime>,
}

impl FrameProgress {
    fn is_complete(&self) -> bool {
        self.completed_at.is_some()
    }
}

/// Per-frame playout outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlayoutRecord {
    pub frame_id: u64,
    pub deadline: SimTime,
    pub completed_at: Option<SimTime>,
    pub played_at: SimTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlayoutStep {
    /// Frame was complete and has been shown.
    Played(u64),
    /// Frame was missing at its deadline; playback is halted.
    Stalled(u64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PacketOutcome {
    pub duplicate: bool,
    pub completed_frame: Option<u64>,
    /// Number of sequence numbers newly declared lost by this arrival.
    pub newly_lost: usize,
}

#[derive(Debug, Default)]
struct Interval {
    start: SimTime,
    received: u64,
    ect1: u64,
    ce: u64,
    samples: Vec<ArrivalSample>,
    lost: Vec<u64>,
}

/// Receiver endpoint: loss detection, ECN counting, frame reassembly and the
/// playout clock with stall accounting.
///
/// Playback starts `dejitter_offset` after the first frame completes. Frame
/// `f` is due at `start + f/fps + shift`. A frame missing at its deadline
/// halts playback until it completes, and the stall length is added to
/// `shift` for all later frames.
#[derive(Debug)]
pub struct ReceiverState {
    fps: u32,
    dejitter_offset: SimDuration,
    highest_seq_seen: Option<u64>,
    seen: Vec<bool>,
    frames: Vec<FrameProgress>,
    interval: Interval,

    playout_start: Option<SimTime>,
    next_play: u64,
    shift: SimDuration,
    stalled_since: Option<SimTime>,
    stalled_time_total: SimDuration,
    played_bytes: u64,
    played_frames: u64,
    stall_count: u64,
    records: Vec<PlayoutRecord>,

    pub total_received: u64,
    pub total_lost_reported: u64,
    pub duplicates: u64,
}

impl ReceiverState {
    pub fn new(fps: u32, playout: &PlayoutConfig) -> Self {
        ReceiverState {
            fps,
            dejitter_offset: SimDuration::from_millis_f64(playout.dejitter_offset_ms),
            highest_seq_seen: None,
            seen: Vec::new(),
            frames: Vec::new(),
            interval: Interval::default(),
            playout_start: None,
            next_play: 0,
            shift: SimDuration::ZERO,
            stalled_since: None,
            stalled_time_total: SimDuration::ZERO,
            played_bytes: 0,
            played_frames: 0,
            stall_count: 0,
            records: Vec::new(),
            total_received: 0,
            total_lost_reported: 0,
            duplicates: 0,
        }
    }

    pub fn receiver_on_packet(&mut self, packet: &Packet, now: SimTime) -> PacketOutcome {
        let seq = packet.seq as usize;
        if self.seen.len() <= seq {
            self.seen.resize(seq + 1, false);
        }
        if self.seen[seq] {
            self.duplicates += 1;
            return PacketOutcome {
                duplicate: true,
                ..Default::default()
            };
        }
        self.seen[seq] = true;
        let mut outcome = PacketOutcome::default();

        // In-order links: anything skipped over is lost, reported once.
        match self.highest_seq_seen {
            Some(h) if packet.seq > h => {
                for missing in h + 1..packet.seq {
                    self.interval.lost.push(missing);
                    outcome.newly_lost += 1;
                }
                self.highest_seq_seen = Some(packet.seq);
            }
            None => {
                for missing in 0..packet.seq {
                    self.interval.lost.push(missing);
                    outcome.newly_lost += 1;
                }
                self.highest_seq_seen = Some(packet.seq);
            }
            _ => {}
        }
        self.total_lost_reported += outcome.newly_lost as u64;

        self.total_received += 1;
        self.interval.received += 1;
        match packet.ecn {
            EcnCodepoint::Ect1 => self.interval.ect1 += 1,
            EcnCodepoint::Ce => self.interval.ce += 1,
            _ => {}
        }
        if !packet.is_retransmit {
            self.interval.samples.push(ArrivalSample {
                seq: packet.seq,
                sent_at: packet.sent_at,
                arrived_at: now,
                size_bytes: packet.size_bytes,
            });
        }

        if let Some(part) = packet.frame {
            let idx = part.frame_id as usize;
            if self.frames.len() <= idx {
                self.frames.resize(idx + 1, FrameProgress::default());
            }
            let f = &mut self.frames[idx];
            if f.parts.is_empty() {
                f.parts = vec![false; part.count as usize];
                f.bytes = part.frame_bytes;
            }
            let i = part.index as usize;
            if !f.parts[i] {
                f.parts[i] = true;
                f.received += 1;
                if f.received == part.count {
                    f.completed_at = Some(now);
                    outcome.completed_frame = Some(part.frame_id);
                    if self.playout_start.is_none() {
                        self.playout_start = Some(now + self.dejitter_offset);
                    }
                }
            }
        }
        outcome
    }

    pub fn frame_complete(&self, frame_id: u64) -> bool {
        self.frames
            .get(frame_id as usize)
            .is_some_and(FrameProgress::is_complete)
    }

    /// Deadline of frame `f` under the current shift.
    pub fn deadline(&self, frame_id: u64) -> Option<SimTime> {
        let start = self.playout_start?;
        Some(start + SimDuration(frame_id * 1_000_000 / self.fps as u64) + self.shift)
    }

    /// When the next playout tick is due, or `None` if playback has not
    /// started or is stalled.
    pub fn next_deadline(&self) -> Option<SimTime> {
        if self.stalled_since.is_some() {
            return None;
        }
        self.deadline(self.next_play)
    }

    pub fn is_stalled(&self) -> bool {
        self.stalled_since.is_some()
    }

    /// Handles the deadline of the next frame.
    pub fn playout_tick(&mut self, now: SimTime) -> PlayoutStep {
        let f = self.next_play;
        if self.frame_complete(f) {
            self.play(f, now);
            PlayoutStep::Played(f)
        } else {
            self.stalled_since = Some(now);
            self.stall_count += 1;
            PlayoutStep::Stalled(f)
        }
    }

    /// Ends a stall if the frame it is waiting on is now complete. Returns the
    /// stall length.
    pub fn try_resume(&mut self, now: SimTime) -> Option<SimDuration> {
        let since = self.stalled_since?;
        if !self.frame_complete(self.next_play) {
            return None;
        }
        let stalled = now.saturating_since(since);
        self.stalled_time_total += stalled;
        self.shift += stalled;
        self.stalled_since = None;
        self.play(self.next_play, now);
        Some(stalled)
    }

    fn play(&mut self, f: u64, now: SimTime) {
        let deadline = self.deadline(f).expect("playout started");
        let fp = &self.frames[f as usize];
        self.played_bytes += fp.bytes as u64;
        self.played_frames += 1;
        self.records.push(PlayoutRecord {
            frame_id: f,
            deadline,
            completed_at: fp.completed_at,
            played_at: now,
        });
        self.next_play += 1;
    }

    /// Closes an open stall at the end of the session.
    pub fn finish(&mut self, end: SimTime) {
        if let Some(since) = self.stalled_since.take() {
            self.stalled_time_total += end.saturating_since(since);
        }
    }

    pub fn build_feedback(&mut self, now: SimTime) -> FeedbackReport {
        let mut iv = std::mem::take(&mut self.interval);
        iv.samples.sort_by_key(|s| s.seq);
        self.interval.start = now;
        FeedbackReport {
            interval_start: iv.start,
            interval_end: now,
            received_count: iv.received,
            lost_seqs: iv.lost,
            ect1_count: iv.ect1,
            ce_count: iv.ce,
            arrival_samples: iv.samples,
            rtt_sample_us: None,
        }
    }

    pub fn stalled_time_total(&self) -> SimDuration {
        self.stalled_time_total
    }

    pub fn stall_count(&self) -> u64 {
        self.stall_count
    }

    pub fn played_bytes(&self) -> u64 {
        self.played_bytes
    }

    pub fn played_frames(&self) -> u64 {
        self.played_frames
    }

    pub fn playout_records(&self) -> &[PlayoutRecord] {
        &self.records
    }

    pub fn highest_seq_seen(&self) -> Option<u64> {
        self.highest_seq_seen
    }
}

/// Fraction of the session spent stalled.
pub fn stalling_rate(stalled: SimDuration, session: SimDuration) -> f64 {
    if session.as_micros() == 0 {
        return 0.0;
    }
    (stalled.as_micros() as f64 / session.as_micros() as f64).clamp(0.0, 1.0)
}
