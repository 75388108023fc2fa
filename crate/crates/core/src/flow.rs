//! Flow and message descriptions handed from the workload to endpoints.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::packet::FlowId;
use crate::sim::SimTime;

/// Payload bytes per full data packet.
pub const DEFAULT_PAYLOAD_BYTES: u32 = 1460;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AtpMode {
    /// Line-rate sending, no rate control, single priority.
    Base,
    /// Loss-driven rate control.
    Rc,
    /// Rate control plus rate-derived priorities.
    Pri,
    /// Priorities, backup sub-flow and message scheduling.
    Full,
}

impl AtpMode {
    pub fn rate_control(self) -> bool {
        !matches!(self, AtpMode::Base)
    }

    pub fn priorities(self) -> bool {
        matches!(self, AtpMode::Pri | AtpMode::Full)
    }

    pub fn backup(self) -> bool {
        matches!(self, AtpMode::Full)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Atp(AtpMode),
    /// Window-based reliable transport with ECN-driven backoff.
    Reliable,
    /// Drops messages at the sender with probability `mlr`, then sends the
    /// rest reliably.
    SenderDrop,
    /// Line-rate unreliable sending without feedback.
    Udp,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Atp(AtpMode::Base) => "atp-base",
            Protocol::Atp(AtpMode::Rc) => "atp-rc",
            Protocol::Atp(AtpMode::Pri) => "atp-pri",
            Protocol::Atp(AtpMode::Full) => "atp-full",
            Protocol::Reliable => "reliable",
            Protocol::SenderDrop => "sender-drop",
            Protocol::Udp => "udp",
        }
    }

    pub fn is_approximate(self) -> bool {
        matches!(self, Protocol::Atp(_))
    }
}

impl std::str::FromStr for Protocol {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "atp-base" => Protocol::Atp(AtpMode::Base),
            "atp-rc" => Protocol::Atp(AtpMode::Rc),
            "atp-pri" => Protocol::Atp(AtpMode::Pri),
            "atp-full" | "atp" => Protocol::Atp(AtpMode::Full),
            "reliable" | "dctcp" => Protocol::Reliable,
            "sender-drop" => Protocol::SenderDrop,
            "udp" => Protocol::Udp,
            other => return Err(ConfigError::Protocol(format!("unknown protocol {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MessageSpec {
    pub id: u32,
    pub size_bytes: u64,
    /// Offset from the flow start at which the application hands it over.
    pub arrival: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub id: FlowId,
    /// Host indices (positions in `Topology::hosts`).
    pub src: usize,
    pub dst: usize,
    pub start: SimTime,
    pub protocol: Protocol,
    /// Maximum tolerable fraction of messages lost.
    pub mlr: f64,
    pub messages: Vec<MessageSpec>,
}

impl FlowSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.messages.is_empty() {
            return Err(ConfigError::Workload(format!("flow {} has no messages", self.id.0)));
        }
        if !(0.0..1.0).contains(&self.mlr) {
            return Err(ConfigError::Workload(format!(
                "flow {} mlr {} outside [0, 1)",
                self.id.0, self.mlr
            )));
        }
        if self.src == self.dst {
            return Err(ConfigError::Workload(format!("flow {} sends to itself", self.id.0)));
        }
        if let Some(m) = self.messages.iter().find(|m| m.size_bytes == 0) {
            return Err(ConfigError::Workload(format!(
                "flow {} message {} is empty",
                self.id.0, m.id
            )));
        }
        Ok(())
    }

    pub fn total_bytes(&self) -> u64 {
        self.messages.iter().map(|m| m.size_bytes).sum()
    }
}

/// Packet layout of a flow: messages are split into payload-sized packets
/// numbered consecutively across the flow.
#[derive(Debug, Clone)]
pub struct PacketLayout {
    payload: u32,
    /// First flow-wide seq of each message, plus a final sentinel.
    first_seq: Vec<u32>,
    sizes: Vec<u64>,
}

impl PacketLayout {
    pub fn new(messages: &[MessageSpec], payload: u32) -> Self {
        assert!(payload > 0 && payload <= u16::MAX as u32);
        let mut first_seq = Vec::with_capacity(messages.len() + 1);
        let mut next = 0u32;
        for m in messages {
            first_seq.push(next);
            next += m.size_bytes.div_ceil(payload as u64).max(1) as u32;
        }
        first_seq.push(next);
        PacketLayout {
            payload,
            first_seq,
            sizes: messages.iter().map(|m| m.size_bytes).collect(),
        }
    }

    pub fn num_messages(&self) -> usize {
        self.sizes.len()
    }

    pub fn num_packets(&self) -> u32 {
        *self.first_seq.last().unwrap()
    }

    pub fn packets_in(&self, msg: usize) -> u32 {
        self.first_seq[msg + 1] - self.first_seq[msg]
    }

    pub fn first_seq(&self, msg: usize) -> u32 {
        self.first_seq[msg]
    }

    pub fn message_of(&self, seq: u32) -> usize {
        self.first_seq.partition_point(|&f| f <= seq) - 1
    }

    /// Payload bytes carried by `seq`.
    pub fn data_len(&self, seq: u32) -> u16 {
        let msg = self.message_of(seq);
        let idx = (seq - self.first_seq[msg]) as u64;
        let rem = self.sizes[msg] - idx * self.payload as u64;
        rem.min(self.payload as u64) as u16
    }

    pub fn message_bytes(&self, msg: usize) -> u64 {
        self.sizes[msg]
    }
}
