//! Receiver side: message completion tracking and scaled acknowledgements.

use crate::flow::{FlowSpec, PacketLayout};
use crate::packet::{AckInfo, Packet};

/// Floor that treats values within rounding error of an integer as that
/// integer, so `0.15 * 100` floors to 15.
fn robust_floor(x: f64) -> u64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r as u64
    } else {
        x.floor() as u64
    }
}

/// Messages that must arrive for a flow of `total` messages to satisfy `mlr`.
pub fn required_messages(total: u64, mlr: f64) -> u64 {
    total - robust_floor(mlr * total as f64)
}

/// Completed-message count scaled by `1 / (1 - mlr)`.
pub fn scaled_ack(complete: u64, mlr: f64) -> u64 {
    if mlr == 0.0 {
        complete
    } else {
        robust_floor(complete as f64 / (1.0 - mlr))
    }
}

#[derive(Debug, Clone)]
pub struct ReceiverFlowState {
    layout: PacketLayout,
    mlr: f64,
    needed: u64,
    got: Vec<bool>,
    per_message: Vec<u32>,
    complete: u64,
    distinct_packets: u64,
    distinct_bytes: u64,
    duplicates: u64,
}

impl ReceiverFlowState {
    pub fn new(spec: &FlowSpec, payload: u32) -> Self {
        Self::with_layout(PacketLayout::new(&spec.messages, payload), spec.mlr)
    }

    pub fn with_layout(layout: PacketLayout, mlr: f64) -> Self {
        let n = layout.num_messages();
        ReceiverFlowState {
            needed: required_messages(n as u64, mlr),
            got: vec![false; layout.num_packets() as usize],
            per_message: vec![0; n],
            layout,
            mlr,
            complete: 0,
            distinct_packets: 0,
            distinct_bytes: 0,
            duplicates: 0,
        }
    }

    pub fn layout(&self) -> &PacketLayout {
        &self.layout
    }

    pub fn messages_complete(&self) -> u64 {
        self.complete
    }

    pub fn message_complete(&self, msg: usize) -> bool {
        self.per_message[msg] == self.layout.packets_in(msg)
    }

    pub fn needed(&self) -> u64 {
        self.needed
    }

    pub fn flow_done(&self) -> bool {
        self.complete >= self.needed
    }

    pub fn distinct_bytes(&self) -> u64 {
        self.distinct_bytes
    }

    pub fn distinct_packets(&self) -> u64 {
        self.distinct_packets
    }

    pub fn duplicates(&self) -> u64 {
        self.duplicates
    }

    /// Records a data packet and builds the ACK to return. Duplicates are
    /// acknowledged again without changing any count.
    pub fn on_packet(&mut self, packet: &Packet) -> AckInfo {
        let seq = packet.seq as usize;
        assert!(seq < self.got.len(), "seq {seq} outside flow");
        if self.got[seq] {
            self.duplicates += 1;
        } else {
            self.got[seq] = true;
            self.distinct_packets += 1;
            self.distinct_bytes += packet.data_len as u64;
            let msg = self.layout.message_of(packet.seq);
            self.per_message[msg] += 1;
            if self.per_message[msg] == self.layout.packets_in(msg) {
                self.complete += 1;
            }
        }
        AckInfo {
            n_ack: scaled_ack(self.complete, self.mlr),
            echo_seq: packet.seq,
            echo_len: packet.data_len,
            echo_backup: packet.backup,
            flow_done: self.flow_done(),
            ece: packet.ce,
        }
    }
}
