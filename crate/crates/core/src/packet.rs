//! Simulated packet headers and wire sizes.

use serde::{Deserialize, Serialize};

use crate::topology::NodeId;

/// flow_id (4) + message_id (4) + N_seq (4) + data_len (2) + priority (1) + flags (1).
pub const HEADER_BYTES: u32 = 16;
/// Emulated UDP/IP overhead.
pub const IP_UDP_OVERHEAD_BYTES: u32 = 40;
pub const ACK_BYTES: u32 = 64;
/// Wire size of a data packet carrying no payload.
pub const MIN_DATA_BYTES: u32 = HEADER_BYTES + IP_UDP_OVERHEAD_BYTES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowId(pub u32);

impl FlowId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Switch treatment requested by the sender.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PriorityTag {
    Accurate,
    /// Approximate primary traffic, level 1 (highest) to 6.
    Approx(u8),
    Backup,
}

pub const APPROX_LEVELS: u8 = 6;

impl PriorityTag {
    pub fn approx(level: u8) -> Self {
        assert!(
            (1..=APPROX_LEVELS).contains(&level),
            "priority level {level} out of range"
        );
        PriorityTag::Approx(level)
    }

    pub fn is_accurate(self) -> bool {
        matches!(self, PriorityTag::Accurate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AckInfo {
    /// Scaled count of fully received messages.
    pub n_ack: u64,
    pub echo_seq: u32,
    pub echo_len: u16,
    pub echo_backup: bool,
    pub flow_done: bool,
    /// ECN echo for window-based baselines.
    pub ece: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketKind {
    Data,
    Ack(AckInfo),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    /// Unique per emission, for conservation accounting and traces.
    pub uid: u64,
    pub flow: FlowId,
    pub src: NodeId,
    pub dst: NodeId,
    pub message_id: u32,
    /// Packet index within the flow.
    pub seq: u32,
    pub data_len: u16,
    pub tag: PriorityTag,
    /// Set on packets of the backup sub-flow; echoed in the ACK.
    pub backup: bool,
    /// Congestion-experienced mark.
    pub ce: bool,
    pub kind: PacketKind,
}

impl Packet {
    pub fn wire_bytes(&self) -> u32 {
        match self.kind {
            PacketKind::Data => MIN_DATA_BYTES + self.data_len as u32,
            PacketKind::Ack(_) => ACK_BYTES,
        }
    }

    pub fn is_ack(&self) -> bool {
        matches!(self.kind, PacketKind::Ack(_))
    }
}
