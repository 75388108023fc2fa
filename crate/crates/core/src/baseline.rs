//! Comparison transports: an ECN-reactive reliable window protocol, a
//! sender-side message dropper layered on it, and unpaced UDP.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::flow::{FlowSpec, PacketLayout};
use crate::packet::{AckInfo, FlowId, Packet, PacketKind, PriorityTag, MIN_DATA_BYTES};
use crate::retx::RetxTracker;
use crate::sim::SimTime;
use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DctcpParams {
    pub init_cwnd: f64,
    /// EWMA gain for the marked fraction.
    pub g: f64,
    pub rto: SimTime,
    /// Cap on exponential timeout backoff, as a power of two.
    pub max_backoff: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DctcpConfig {
    pub init_cwnd: f64,
    pub g: f64,
    pub rto_rtts: f64,
    /// Lower bound on the retransmission timeout.
    pub rto_min_us: u64,
    pub max_backoff: u32,
}

impl Default for DctcpConfig {
    fn default() -> Self {
        DctcpConfig {
            init_cwnd: 10.0,
            g: 1.0 / 16.0,
            rto_rtts: 10.0,
            rto_min_us: 1000,
            max_backoff: 6,
        }
    }
}

impl DctcpConfig {
    pub fn resolve(&self, base_rtt: SimTime) -> Result<DctcpParams, ConfigError> {
        if !(self.init_cwnd >= 1.0 && self.g > 0.0 && self.g <= 1.0 && self.rto_rtts > 0.0) {
            return Err(ConfigError::Protocol(format!(
                "reliable settings need init_cwnd >= 1, g in (0, 1], rto_rtts > 0: {self:?}"
            )));
        }
        Ok(DctcpParams {
            init_cwnd: self.init_cwnd,
            g: self.g,
            rto: base_rtt
                .mul_f64(self.rto_rtts)
                .max(SimTime::from_micros(self.rto_min_us)),
            max_backoff: self.max_backoff,
        })
    }
}

/// Window state of the reliable baseline. A round ends after as many ACKs
/// as the window held when the round began.
#[derive(Debug, Clone, PartialEq)]
pub struct DctcpState {
    pub cwnd: f64,
    pub alpha: f64,
    g: f64,
    round: u64,
    round_target: u32,
    acks_in_round: u32,
    marks_in_round: u32,
    last_loss_round: Option<u64>,
}

impl DctcpState {
    pub fn new(init_cwnd: f64, g: f64) -> Self {
        DctcpState {
            cwnd: init_cwnd.max(1.0),
            alpha: 1.0,
            g,
            round: 0,
            round_target: init_cwnd.max(1.0) as u32,
            acks_in_round: 0,
            marks_in_round: 0,
            last_loss_round: None,
        }
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    fn start_round(&mut self) {
        self.round += 1;
        self.acks_in_round = 0;
        self.marks_in_round = 0;
        self.round_target = (self.cwnd as u32).max(1);
    }

    /// Counts one ACK. Returns true when it closes a round.
    pub fn on_ack(&mut self, ecn_marked: bool) -> bool {
        self.acks_in_round += 1;
        if ecn_marked {
            self.marks_in_round += 1;
        }
        if self.acks_in_round < self.round_target {
            return false;
        }
        let frac = self.marks_in_round as f64 / self.acks_in_round as f64;
        self.alpha = (1.0 - self.g) * self.alpha + self.g * frac;
        if self.marks_in_round > 0 {
            self.cwnd = (self.cwnd * (1.0 - self.alpha / 2.0)).max(1.0);
        } else {
            self.cwnd += 1.0;
        }
        self.start_round();
        true
    }

    /// Halves the window at most once per round.
    pub fn on_loss(&mut self) {
        if self.last_loss_round == Some(self.round) {
            return;
        }
        self.last_loss_round = Some(self.round);
        self.cwnd = (self.cwnd / 2.0).max(1.0);
    }

    pub fn on_timeout(&mut self) {
        self.cwnd = 1.0;
        self.start_round();
        self.last_loss_round = Some(self.round);
    }
}

/// Drops each message independently with probability `spec.mlr`. Message
/// ids are kept so survivors can be matched to the original flow.
pub fn sender_drop_filter(spec: &FlowSpec, rng: &mut impl RngCore) -> FlowSpec {
    let mut out = spec.clone();
    if spec.mlr > 0.0 {
        out.messages.retain(|_| rng.random::<f64>() >= spec.mlr);
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BaselineStats {
    pub data_packets: u64,
    pub payload_bytes: u64,
    pub wire_bytes: u64,
    pub timeouts: u64,
}

fn data_packet(flow: FlowId, src: NodeId, dst: NodeId, layout: &PacketLayout, seq: u32) -> Packet {
    Packet {
        uid: 0,
        flow,
        src,
        dst,
        message_id: layout.message_of(seq) as u32,
        seq,
        data_len: layout.data_len(seq),
        tag: PriorityTag::Accurate,
        backup: false,
        ce: false,
        kind: PacketKind::Data,
    }
}

fn count_send(stats: &mut BaselineStats, p: &Packet) {
    stats.data_packets += 1;
    stats.payload_bytes += p.data_len as u64;
    stats.wire_bytes += p.wire_bytes() as u64;
}

#[derive(Debug, Clone)]
pub struct ReliableSender {
    flow: FlowId,
    src: NodeId,
    dst: NodeId,
    layout: PacketLayout,
    retx: RetxTracker,
    next_unsent: u32,
    /// Packets below this seq belong to messages the application released.
    available: u32,
    acked: u32,
    cc: DctcpState,
    params: DctcpParams,
    backoff: u32,
    last_progress: SimTime,
    done_at: Option<SimTime>,
    stats: BaselineStats,
}

impl ReliableSender {
    /// `spec` lists only the messages that will actually be sent.
    pub fn new(spec: &FlowSpec, params: DctcpParams, payload: u32, src: NodeId, dst: NodeId) -> Self {
        let layout = PacketLayout::new(&spec.messages, payload);
        let done_at = (layout.num_packets() == 0).then_some(spec.start);
        ReliableSender {
            flow: spec.id,
            src,
            dst,
            retx: RetxTracker::new(layout.num_packets() as usize),
            available: layout.num_packets(),
            layout,
            next_unsent: 0,
            acked: 0,
            cc: DctcpState::new(params.init_cwnd, params.g),
            params,
            backoff: 0,
            last_progress: spec.start,
            done_at,
            stats: BaselineStats::default(),
        }
    }

    pub fn flow(&self) -> FlowId {
        self.flow
    }

    pub fn done_at(&self) -> Option<SimTime> {
        self.done_at
    }

    pub fn is_done(&self) -> bool {
        self.done_at.is_some()
    }

    pub fn cc(&self) -> &DctcpState {
        &self.cc
    }

    pub fn stats(&self) -> &BaselineStats {
        &self.stats
    }

    pub fn retransmissions(&self) -> u64 {
        self.retx.retransmissions()
    }

    pub fn layout(&self) -> &PacketLayout {
        &self.layout
    }

    /// Limits new data to messages `0..count`. All messages are released
    /// at construction.
    pub fn release_messages(&mut self, count: usize) {
        self.available = self.layout.first_seq(count.min(self.layout.num_messages()));
    }

    /// Next packet allowed by the window: lost packets first, then new data.
    pub fn select(&self) -> Option<u32> {
        if self.is_done() || self.retx.in_flight() >= self.cc.cwnd as usize {
            return None;
        }
        self.retx
            .first_lost()
            .or_else(|| (self.next_unsent < self.available).then_some(self.next_unsent))
    }

    pub fn wire_bytes_of(&self, seq: u32) -> u32 {
        MIN_DATA_BYTES + self.layout.data_len(seq) as u32
    }

    pub fn emit(&mut self, seq: u32, now: SimTime) -> Packet {
        if seq == self.next_unsent {
            self.next_unsent += 1;
        }
        if self.retx.outstanding() == 0 {
            self.last_progress = now;
        }
        self.retx.on_send(seq, now);
        let p = data_packet(self.flow, self.src, self.dst, &self.layout, seq);
        count_send(&mut self.stats, &p);
        p
    }

    pub fn on_ack(&mut self, ack: &AckInfo, now: SimTime) {
        if self.is_done() {
            return;
        }
        let out = self.retx.on_ack(ack.echo_seq);
        if out.newly_acked {
            self.acked += 1;
            self.last_progress = now;
            self.backoff = 0;
            self.cc.on_ack(ack.ece);
        }
        if !out.lost.is_empty() {
            self.cc.on_loss();
        }
        if self.acked == self.layout.num_packets() {
            self.done_at = Some(now);
        }
    }

    fn current_rto(&self) -> SimTime {
        self.params.rto * (1u64 << self.backoff.min(self.params.max_backoff))
    }

    /// Timeout handling; returns the time of the next check.
    pub fn on_timeout_check(&mut self, now: SimTime) -> Option<SimTime> {
        if self.is_done() {
            return None;
        }
        let deadline = self.last_progress + self.current_rto();
        if now < deadline {
            return Some(deadline);
        }
        if self.retx.in_flight() > 0 {
            self.retx.mark_all_lost();
            self.cc.on_timeout();
            self.backoff += 1;
            self.stats.timeouts += 1;
        }
        self.last_progress = now;
        Some(now + self.current_rto())
    }
}

/// Sends every packet once at line rate, without feedback.
#[derive(Debug, Clone)]
pub struct UdpSender {
    flow: FlowId,
    src: NodeId,
    dst: NodeId,
    layout: PacketLayout,
    next: u32,
    available: u32,
    done_at: Option<SimTime>,
    stats: BaselineStats,
}

impl UdpSender {
    pub fn new(spec: &FlowSpec, payload: u32, src: NodeId, dst: NodeId) -> Self {
        let layout = PacketLayout::new(&spec.messages, payload);
        UdpSender {
            available: layout.num_packets(),
            flow: spec.id,
            src,
            dst,
            layout,
            next: 0,
            done_at: None,
            stats: BaselineStats::default(),
        }
    }

    pub fn flow(&self) -> FlowId {
        self.flow
    }

    pub fn release_messages(&mut self, count: usize) {
        self.available = self.layout.first_seq(count.min(self.layout.num_messages()));
    }

    pub fn select(&self) -> Option<u32> {
        (self.next < self.available).then_some(self.next)
    }

    pub fn wire_bytes_of(&self, seq: u32) -> u32 {
        MIN_DATA_BYTES + self.layout.data_len(seq) as u32
    }

    /// Emits `seq`; `tx_done` is when it finishes leaving the sender, which
    /// completes the flow for the last packet.
    pub fn emit(&mut self, seq: u32, tx_done: SimTime) -> Packet {
        debug_assert_eq!(seq, self.next);
        self.next += 1;
        if self.next == self.layout.num_packets() {
            self.done_at = Some(tx_done);
        }
        let p = data_packet(self.flow, self.src, self.dst, &self.layout, seq);
        count_send(&mut self.stats, &p);
        p
    }

    pub fn done_at(&self) -> Option<SimTime> {
        self.done_at
    }

    pub fn is_done(&self) -> bool {
        self.done_at.is_some()
    }

    pub fn stats(&self) -> &BaselineStats {
        &self.stats
    }
}
