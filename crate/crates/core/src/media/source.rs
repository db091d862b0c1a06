use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, ConfigError};
use crate::types::{EcnCodepoint, FeedbackReport, FramePart, Packet, SimDuration, SimTime};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    pub fps: u32,
    pub min_bitrate_bps: u64,
    pub max_bitrate_bps: u64,
    pub start_bitrate_bps: u64,
    pub mtu_bytes: u32,
    /// Codepoint stamped on media packets. Left unset, the simulation picks
    /// ect1 for ECN-driven controllers and not_ect otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ecn_mode: Option<EcnCodepoint>,
    /// When false the source ignores the controller and sends at
    /// `start_bitrate_bps` for the whole run.
    pub adaptive: bool,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            fps: 30,
            min_bitrate_bps: 150_000,
            max_bitrate_bps: 5_000_000,
            start_bitrate_bps: 1_000_000,
            mtu_bytes: 1200,
            ecn_mode: None,
            adaptive: true,
        }
    }
}

impl SourceConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        ensure(self.fps > 0, "fps", "must be > 0")?;
        ensure(self.mtu_bytes > 0, "mtu_bytes", "must be > 0")?;
        ensure(self.min_bitrate_bps > 0, "min_bitrate_bps", "must be > 0")?;
        ensure(
            self.min_bitrate_bps <= self.start_bitrate_bps,
            "start_bitrate_bps",
            "must be >= min_bitrate_bps",
        )?;
        ensure(
            self.start_bitrate_bps <= self.max_bitrate_bps,
            "start_bitrate_bps",
            "must be <= max_bitrate_bps",
        )?;
        ensure(
            matches!(
                self.ecn_mode,
                None | Some(EcnCodepoint::Ect1 | EcnCodepoint::NotEct)
            ),
            "ecn_mode",
            "must be ect1 or not_ect",
        )
    }

    pub fn frame_interval(&self) -> SimDuration {
        SimDuration(1_000_000 / self.fps as u64)
    }

    /// Capture time of frame `f`, exact in integer microseconds.
    pub fn frame_offset(&self, frame_id: u64) -> SimDuration {
        SimDuration(frame_id * 1_000_000 / self.fps as u64)
    }
}

/// A packet produced by the encoder together with its pacing gap: the time
/// the pacer waits after releasing it.
#[derive(Clone, Debug, PartialEq)]
pub struct PacedPacket {
    pub packet: Packet,
    pub gap: SimDuration,
}

/// Frame size in bytes for a target rate: `round(bps / fps / 8)`.
pub fn frame_bytes(target_bps: u64, fps: u32) -> u32 {
    (target_bps as f64 / fps as f64 / 8.0).round().max(1.0) as u32
}

/// Produces one frame at `target_bps`, split into MTU-sized packets paced
/// evenly over the frame interval. Sequence numbers are assigned when the
/// pacer releases each packet, so they are left at zero here.
///
/// Panics if the target is outside the configured bitrate bounds; the
/// controller is responsible for clamping.
pub fn encode_tick(
    cfg: &SourceConfig,
    frame_id: u64,
    target_bps: u64,
    now: SimTime,
) -> Vec<PacedPacket> {
    assert!(
        (cfg.min_bitrate_bps..=cfg.max_bitrate_bps).contains(&target_bps),
        "target {target_bps} outside [{}, {}]",
        cfg.min_bitrate_bps,
        cfg.max_bitrate_bps
    );
    let size = frame_bytes(target_bps, cfg.fps);
    let count = size.div_ceil(cfg.mtu_bytes);
    let interval = cfg.frame_interval().as_micros();
    (0..count)
        .map(|index| {
            let payload = if index + 1 == count {
                size - cfg.mtu_bytes * (count - 1)
            } else {
                cfg.mtu_bytes
            };
            // Even spacing: packet i leaves at i·interval/count.
            let start = index as u64 * interval / count as u64;
            let end = (index as u64 + 1) * interval / count as u64;
            PacedPacket {
                packet: Packet {
                    seq: 0,
                    flow_id: 0,
                    size_bytes: payload,
                    ecn: cfg.ecn_mode.unwrap_or(EcnCodepoint::NotEct),
                    frame: Some(FramePart {
                        frame_id,
                        index,
                        count,
                        frame_bytes: size,
                    }),
                    sent_at: now,
                    is_retransmit: false,
                },
                gap: SimDuration(end - start),
            }
        })
        .collect()
}

/// Sender side of the media flow: encoder, pacer, sequence numbering and the
/// retransmission history.
#[derive(Debug)]
pub struct MediaSender {
    cfg: SourceConfig,
    flow_id: u32,
    next_frame: u64,
    next_seq: u64,
    pacer: VecDeque<PacedPacket>,
    pacer_busy: bool,
    history: BTreeMap<u64, Packet>,
    history_horizon: SimDuration,
    pub bytes_encoded: u64,
    pub packets_sent: u64,
    pub retransmissions: u64,
}

impl MediaSender {
    pub fn new(cfg: SourceConfig, flow_id: u32) -> Self {
        MediaSender {
            cfg,
            flow_id,
            next_frame: 0,
            next_seq: 0,
            pacer: VecDeque::new(),
            pacer_busy: false,
            history: BTreeMap::new(),
            history_horizon: SimDuration::from_secs(10),
            bytes_encoded: 0,
            packets_sent: 0,
            retransmissions: 0,
        }
    }

    pub fn config(&self) -> &SourceConfig {
        &self.cfg
    }

    pub fn frames_encoded(&self) -> u64 {
        self.next_frame
    }

    /// Encodes the next frame into the pacer. Returns true if the pacer was
    /// idle and needs a release scheduled now.
    pub fn encode(&mut self, target_bps: u64, now: SimTime) -> bool {
        let frame = encode_tick(&self.cfg, self.next_frame, target_bps, now);
        self.next_frame += 1;
        for mut p in frame {
            p.packet.flow_id = self.flow_id;
            self.bytes_encoded += p.packet.size_bytes as u64;
            self.pacer.push_back(p);
        }
        self.wake()
    }

    /// Queues a retransmission of every reported-lost sequence number that is
    /// still in the history, ahead of pending media. Each sequence number is
    /// repaired at most once. Returns true if the pacer needs waking.
    pub fn on_loss_report(&mut self, report: &FeedbackReport) -> bool {
        let mut repairs = Vec::new();
        for seq in &report.lost_seqs {
            if let Some(mut p) = self.history.remove(seq) {
                p.is_retransmit = true;
                repairs.push(PacedPacket {
                    packet: p,
                    gap: SimDuration::ZERO,
                });
            }
        }
        self.retransmissions += repairs.len() as u64;
        for r in repairs.into_iter().rev() {
            self.pacer.push_front(r);
        }
        self.wake()
    }

    fn wake(&mut self) -> bool {
        if !self.pacer_busy && !self.pacer.is_empty() {
            self.pacer_busy = true;
            true
        } else {
            false
        }
    }

    /// Releases the packet at the head of the pacer. Returns it together with
    /// the time of the next release, if more packets are waiting.
    pub fn release(&mut self, now: SimTime) -> Option<(Packet, Option<SimTime>)> {
        let Some(PacedPacket { mut packet, gap }) = self.pacer.pop_front() else {
            self.pacer_busy = false;
            return None;
        };
        packet.seq = self.next_seq;
        self.next_seq += 1;
        packet.sent_at = now;
        self.packets_sent += 1;
        self.history.insert(packet.seq, packet.clone());
        while let Some((&seq, p)) = self.history.first_key_value() {
            if now.saturating_since(p.sent_at) > self.history_horizon {
                self.history.remove(&seq);
            } else {
                break;
            }
        }
        let next = if self.pacer.is_empty() {
            self.pacer_busy = false;
            None
        } else {
            Some(now + gap)
        };
        Some((packet, next))
    }

    pub fn sent_packet(&self, seq: u64) -> Option<&Packet> {
        self.history.get(&seq)
    }

    pub fn pacer_len(&self) -> usize {
        self.pacer.len()
    }
}
