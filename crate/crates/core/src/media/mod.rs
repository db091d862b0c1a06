//! Real-time media endpoints: a rate-adaptive paced source and a receiver
//! with loss detection, ECN counting and playout/stall accounting.

mod receiver;
mod source;

pub use receiver::{
    stalling_rate, PacketOutcome, PlayoutConfig, PlayoutRecord, PlayoutStep, ReceiverState,
};
pub use source::{encode_tick, frame_bytes, MediaSender, PacedPacket, SourceConfig};
