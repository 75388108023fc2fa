//! ATP sender: paced primary stream, optional backup sub-flow, message
//! scheduling and loss recovery driven by scaled acknowledgements.

use std::collections::{BTreeSet, VecDeque};

use crate::flow::{AtpMode, FlowSpec, PacketLayout};
use crate::packet::{AckInfo, FlowId, Packet, PacketKind, PriorityTag, MIN_DATA_BYTES};
use crate::retx::RetxTracker;
use crate::sim::SimTime;
use crate::topology::NodeId;

use super::mrdf::{BinScheme, MrdfBins};
use super::rate::{assign_priority, RateController, RateParams, WindowOutcome};

/// Per-run sender parameters, already resolved against the topology.
#[derive(Debug, Clone, PartialEq)]
pub struct AtpParams {
    pub rate: RateParams,
    pub alphas: [f64; 5],
    pub window: SimTime,
    pub rto: SimTime,
    /// In-flight packets older than this become backup candidates.
    pub stale_after: SimTime,
    /// Message scheduling for the full mode; `None` sends in arrival order.
    pub mrdf: Option<BinScheme>,
    pub payload: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SenderStats {
    pub data_packets: u64,
    pub payload_bytes: u64,
    pub wire_bytes: u64,
    pub backup_packets: u64,
    pub windows: u64,
    pub window_loss_sum: f64,
    pub window_loss_count: u64,
}

#[derive(Debug, Clone, Default)]
struct MsgTx {
    arrived: bool,
    rank: u64,
    next_unsent: u32,
    acked: u32,
    lost: BTreeSet<u32>,
}

#[derive(Debug, Clone)]
pub struct AtpSender {
    flow: FlowId,
    src: NodeId,
    dst: NodeId,
    mode: AtpMode,
    params: AtpParams,
    layout: PacketLayout,
    msgs: Vec<MsgTx>,
    retx: RetxTracker,
    /// Rate window of each packet's latest primary send.
    sent_epoch: Vec<u64>,
    /// Arrived messages with unsent packets, in arrival order.
    fifo_new: VecDeque<u32>,
    mrdf: Option<MrdfBins>,
    rc: RateController,
    priority: u8,
    highest_n_ack: u64,
    messages_started: u64,
    next_rank: u64,
    start: SimTime,
    done_at: Option<SimTime>,
    next_primary_at: SimTime,
    next_backup_at: SimTime,
    last_progress: SimTime,
    stats: SenderStats,
}

/// Windows at the start of a flow excluded from steady-state loss samples.
pub const WARMUP_WINDOWS: u64 = 4;

impl AtpSender {
    pub fn new(spec: &FlowSpec, mode: AtpMode, params: AtpParams, src: NodeId, dst: NodeId) -> Self {
        let layout = PacketLayout::new(&spec.messages, params.payload);
        let n = layout.num_messages();
        let mrdf = match (mode, params.mrdf) {
            (AtpMode::Full, Some(scheme)) => Some(MrdfBins::new(scheme, n)),
            _ => None,
        };
        let rc = if mode.rate_control() {
            RateController::new(params.rate)
        } else {
            RateController::with_rate(params.rate, params.rate.r_max_bps)
        };
        let priority = if mode.priorities() {
            assign_priority(rc.rate_bps(), &params.alphas)
        } else {
            1
        };
        AtpSender {
            flow: spec.id,
            src,
            dst,
            mode,
            retx: RetxTracker::new(layout.num_packets() as usize),
            sent_epoch: vec![u64::MAX; layout.num_packets() as usize],
            msgs: vec![MsgTx::default(); n],
            layout,
            fifo_new: VecDeque::new(),
            mrdf,
            rc,
            priority,
            highest_n_ack: 0,
            messages_started: 0,
            next_rank: 0,
            start: spec.start,
            done_at: None,
            next_primary_at: spec.start,
            next_backup_at: spec.start,
            last_progress: spec.start,
            params,
            stats: SenderStats::default(),
        }
    }

    pub fn flow(&self) -> FlowId {
        self.flow
    }

    pub fn mode(&self) -> AtpMode {
        self.mode
    }

    pub fn params(&self) -> &AtpParams {
        &self.params
    }

    pub fn rate_bps(&self) -> f64 {
        self.rc.rate_bps()
    }

    pub fn priority(&self) -> u8 {
        self.priority
    }

    pub fn done_at(&self) -> Option<SimTime> {
        self.done_at
    }

    pub fn is_done(&self) -> bool {
        self.done_at.is_some()
    }

    pub fn stats(&self) -> &SenderStats {
        &self.stats
    }

    pub fn retransmissions(&self) -> u64 {
        self.retx.retransmissions()
    }

    pub fn highest_n_ack(&self) -> u64 {
        self.highest_n_ack
    }

    pub fn layout(&self) -> &PacketLayout {
        &self.layout
    }

    pub fn retx(&self) -> &RetxTracker {
        &self.retx
    }

    /// Unacknowledged packets of `msg`.
    pub fn remaining_packets(&self, msg: usize) -> u32 {
        self.layout.packets_in(msg) - self.msgs[msg].acked
    }

    pub fn on_message_arrival(&mut self, msg: u32) {
        let m = &mut self.msgs[msg as usize];
        if m.arrived {
            return;
        }
        m.arrived = true;
        m.rank = self.next_rank;
        self.next_rank += 1;
        self.fifo_new.push_back(msg);
        self.refresh_mrdf(msg as usize);
    }

    fn has_unsent(&self, msg: usize) -> bool {
        self.msgs[msg].next_unsent < self.layout.packets_in(msg)
    }

    fn refresh_mrdf(&mut self, msg: usize) {
        let pending = {
            let m = &self.msgs[msg];
            m.arrived && (self.has_unsent(msg) || !m.lost.is_empty())
        };
        let remaining = self.remaining_packets(msg);
        let rank = self.msgs[msg].rank;
        if let Some(bins) = self.mrdf.as_mut() {
            if pending {
                bins.upsert(msg as u32, rank, remaining);
            } else {
                bins.remove(msg as u32);
            }
        }
    }

    /// Retransmission is allowed once the arrived new data is out and the
    /// receiver still reports fewer settled messages than were started.
    fn retx_allowed(&self) -> bool {
        self.fifo_new.is_empty() && self.highest_n_ack < self.messages_started
    }

    /// Packet the primary stream would send next, ignoring pacing.
    pub fn select_primary(&self) -> Option<u32> {
        if self.is_done() {
            return None;
        }
        if let Some(bins) = &self.mrdf {
            let msg = bins.first()? as usize;
            let m = &self.msgs[msg];
            return Some(match m.lost.first() {
                Some(&seq) => seq,
                None => self.layout.first_seq(msg) + m.next_unsent,
            });
        }
        if let Some(&msg) = self.fifo_new.front() {
            let msg = msg as usize;
            return Some(self.layout.first_seq(msg) + self.msgs[msg].next_unsent);
        }
        if self.retx_allowed() {
            return self.retx.first_lost();
        }
        None
    }

    /// Primary packet ready to go at `now`, if any.
    pub fn primary_ready(&self, now: SimTime) -> Option<u32> {
        if now < self.next_primary_at {
            return None;
        }
        self.select_primary()
    }

    /// When the primary stream next becomes eligible, if it has data.
    pub fn primary_wake(&self) -> Option<SimTime> {
        self.select_primary().map(|_| self.next_primary_at)
    }

    pub fn wire_bytes_of(&self, seq: u32) -> u32 {
        MIN_DATA_BYTES + self.layout.data_len(seq) as u32
    }

    fn backup_rate(&self) -> f64 {
        let spare = self.params.rate.r_max_bps - self.rc.rate_bps();
        if spare > 0.01 * self.params.rate.r_max_bps {
            spare
        } else {
            0.0
        }
    }

    fn select_backup(&self, now: SimTime) -> Option<u32> {
        if !self.mode.backup() || self.is_done() || self.backup_rate() == 0.0 {
            return None;
        }
        self.retx.first_lost().or_else(|| {
            let cutoff = now.as_nanos().checked_sub(self.params.stale_after.as_nanos())?;
            self.retx.oldest_in_flight_before(SimTime(cutoff))
        })
    }

    pub fn backup_ready(&self, now: SimTime) -> Option<u32> {
        if now < self.next_backup_at {
            return None;
        }
        self.select_backup(now)
    }

    pub fn backup_wake(&self, now: SimTime) -> Option<SimTime> {
        self.select_backup(now.max(self.next_backup_at))
            .map(|_| self.next_backup_at)
    }

    fn make_packet(&self, seq: u32, tag: PriorityTag, backup: bool) -> Packet {
        Packet {
            uid: 0,
            flow: self.flow,
            src: self.src,
            dst: self.dst,
            message_id: self.layout.message_of(seq) as u32,
            seq,
            data_len: self.layout.data_len(seq),
            tag,
            backup,
            ce: false,
            kind: PacketKind::Data,
        }
    }

    fn record_send(&mut self, seq: u32, now: SimTime) {
        let msg = self.layout.message_of(seq);
        let idx = seq - self.layout.first_seq(msg);
        let m = &mut self.msgs[msg];
        m.lost.remove(&seq);
        if idx == m.next_unsent {
            if idx == 0 {
                self.messages_started += 1;
            }
            m.next_unsent += 1;
            if m.next_unsent == self.layout.packets_in(msg) {
                if let Some(pos) = self.fifo_new.iter().position(|&x| x as usize == msg) {
                    self.fifo_new.remove(pos);
                }
            }
        }
        self.retx.on_send(seq, now);
        self.refresh_mrdf(msg);
        let len = self.layout.data_len(seq) as u64;
        self.stats.data_packets += 1;
        self.stats.payload_bytes += len;
        self.stats.wire_bytes += MIN_DATA_BYTES as u64 + len;
        if self.last_progress < now && self.retx.outstanding() == 1 {
            self.last_progress = now;
        }
    }

    /// Emits `seq` on the primary stream and advances pacing.
    pub fn emit_primary(&mut self, seq: u32, now: SimTime) -> Packet {
        let tag = PriorityTag::approx(self.priority);
        let pkt = self.make_packet(seq, tag, false);
        self.record_send(seq, now);
        self.sent_epoch[seq as usize] = self.rc.on_sent();
        let bits = pkt.wire_bytes() as f64 * 8.0;
        self.next_primary_at = now + SimTime::from_secs_f64(bits / self.rc.rate_bps());
        pkt
    }

    pub fn emit_backup(&mut self, seq: u32, now: SimTime) -> Packet {
        let pkt = self.make_packet(seq, PriorityTag::Backup, true);
        self.record_send(seq, now);
        self.stats.backup_packets += 1;
        let bits = pkt.wire_bytes() as f64 * 8.0;
        self.next_backup_at = now + SimTime::from_secs_f64(bits / self.backup_rate().max(1.0));
        pkt
    }

    fn mark_lost(&mut self, seqs: &[u32]) {
        for &seq in seqs {
            let msg = self.layout.message_of(seq);
            self.msgs[msg].lost.insert(seq);
            self.refresh_mrdf(msg);
        }
    }

    pub fn on_ack(&mut self, ack: &AckInfo, now: SimTime) {
        if self.is_done() {
            return;
        }
        if !ack.echo_backup {
            if let Some(&e) = self.sent_epoch.get(ack.echo_seq as usize) {
                self.rc.on_received(e);
            }
        }
        self.highest_n_ack = self.highest_n_ack.max(ack.n_ack);
        let out = self.retx.on_ack(ack.echo_seq);
        if out.newly_acked {
            self.last_progress = now;
            let msg = self.layout.message_of(ack.echo_seq);
            self.msgs[msg].acked += 1;
            self.msgs[msg].lost.remove(&ack.echo_seq);
            self.refresh_mrdf(msg);
        }
        self.mark_lost(&out.lost);
        let total = self.layout.num_messages() as u64;
        if ack.flow_done || self.highest_n_ack >= total {
            self.done_at = Some(now);
        }
    }

    /// Ends a rate window. Returns `None` for modes without rate control.
    pub fn on_window_end(&mut self) -> Option<WindowOutcome> {
        if self.is_done() || !self.mode.rate_control() {
            return None;
        }
        let out = self.rc.window_update();
        self.stats.windows += 1;
        if let Some(l) = out.loss {
            if self.stats.windows > WARMUP_WINDOWS {
                self.stats.window_loss_sum += l;
                self.stats.window_loss_count += 1;
            }
        }
        if self.mode.priorities() {
            self.priority = assign_priority(self.rc.rate_bps(), &self.params.alphas);
        }
        Some(out)
    }

    /// Declares all in-flight packets lost if nothing was acknowledged for
    /// a full timeout. Returns the time of the next check.
    pub fn on_timeout_check(&mut self, now: SimTime) -> Option<SimTime> {
        if self.is_done() {
            return None;
        }
        let deadline = self.last_progress + self.params.rto;
        if now >= deadline {
            if self.retx.in_flight() > 0 {
                let lost = self.retx.mark_all_lost();
                self.mark_lost(&lost);
            }
            self.last_progress = now;
            return Some(now + self.params.rto);
        }
        Some(deadline)
    }

    pub fn start_time(&self) -> SimTime {
        self.start
    }
}
