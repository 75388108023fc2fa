//! Packet-level fabric simulation: hosts with pull-based NICs, switches with
//! per-port queue sets, and the event handler that connects endpoints.

use std::collections::VecDeque;

use crate::atp::{AtpConfig, AtpSender, ReceiverFlowState};
use crate::baseline::{sender_drop_filter, DctcpConfig, ReliableSender, UdpSender};
use crate::error::{ConfigError, SimError};
use crate::flow::{FlowSpec, Protocol};
use crate::metrics::FlowRecord;
use crate::packet::{Packet, PacketKind, PriorityTag, ACK_BYTES, MIN_DATA_BYTES};
use crate::sim::{
    serialization_time, streams, Engine, Event, EventKind, EventPayload, RngStream, SimTime, TraceSink,
};
use crate::switch::{
    classify, select_next_hop, Admit, ClassDrr, PortQueueSet, SwitchConfig, SwitchCounters, SwitchState,
    TrafficClass,
};
use crate::topology::{ChannelId, ChannelState, NodeId, RouteTable, Topology};

#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub switch: SwitchConfig,
    pub atp: AtpConfig,
    pub dctcp: DctcpConfig,
    pub payload: u32,
    /// DRR quantum between accurate and approximate flows at a host NIC.
    pub nic_quantum: u32,
    pub seed: u64,
    pub horizon: SimTime,
}

impl Default for NetParams {
    fn default() -> Self {
        NetParams {
            switch: SwitchConfig::default(),
            atp: AtpConfig::default(),
            dctcp: DctcpConfig::default(),
            payload: crate::flow::DEFAULT_PAYLOAD_BYTES,
            nic_quantum: 1500,
            seed: 1,
            horizon: SimTime::from_millis(1000),
        }
    }
}

#[derive(Debug, Clone)]
pub enum NetEvent {
    Arrive { node: NodeId, pkt: Packet },
    TxDone { ch: ChannelId },
    FlowStart { flow: u32 },
    MessageArrival { flow: u32, msg: u32 },
    Window { flow: u32 },
    Rto { flow: u32 },
    NicWake { host: u32 },
}

impl EventPayload for NetEvent {
    fn kind(&self) -> EventKind {
        match self {
            NetEvent::Arrive { .. } => EventKind::PacketArrival,
            NetEvent::TxDone { .. } => EventKind::TransmitComplete,
            NetEvent::FlowStart { .. } | NetEvent::MessageArrival { .. } => EventKind::AppMessageArrival,
            NetEvent::Window { .. } => EventKind::WindowTick,
            NetEvent::Rto { .. } | NetEvent::NicWake { .. } => EventKind::Timer,
        }
    }

    fn detail(&self) -> String {
        match self {
            NetEvent::Arrive { node, pkt } => {
                let what = match pkt.kind {
                    PacketKind::Data => "data",
                    PacketKind::Ack(_) => "ack",
                };
                format!(
                    "node={} uid={} flow={} seq={} {what} tag={:?}",
                    node.0, pkt.uid, pkt.flow.0, pkt.seq, pkt.tag
                )
            }
            NetEvent::TxDone { ch } => format!("ch={}", ch.0),
            NetEvent::FlowStart { flow } => format!("start flow={flow}"),
            NetEvent::MessageArrival { flow, msg } => format!("flow={flow} msg={msg}"),
            NetEvent::Window { flow } => format!("window flow={flow}"),
            NetEvent::Rto { flow } => format!("rto flow={flow}"),
            NetEvent::NicWake { host } => format!("wake host={host}"),
        }
    }
}

enum Sender {
    Atp(AtpSender),
    Reliable(ReliableSender),
    Udp(UdpSender),
}

impl Sender {
    fn done_at(&self) -> Option<SimTime> {
        match self {
            Sender::Atp(s) => s.done_at(),
            Sender::Reliable(s) => s.done_at(),
            Sender::Udp(s) => s.done_at(),
        }
    }

    fn is_accurate(&self) -> bool {
        !matches!(self, Sender::Atp(_))
    }
}

struct FlowRt {
    spec: FlowSpec,
    /// Messages actually handed to the sender (fewer under sender-drop).
    sent_spec: FlowSpec,
    src_host: usize,
    dst: NodeId,
    sender: Sender,
    receiver: ReceiverFlowState,
}

struct Nic {
    node: NodeId,
    control: VecDeque<Packet>,
    drr: ClassDrr,
    accurate: Vec<u32>,
    approx: Vec<u32>,
    rr_accurate: usize,
    rr_approx: usize,
    rr_backup: usize,
    wake_at: Option<SimTime>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Conservation {
    pub emitted: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub in_flight: u64,
}

impl Conservation {
    pub fn holds(&self) -> bool {
        self.emitted == self.delivered + self.dropped + self.in_flight
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub records: Vec<FlowRecord>,
    pub conservation: Conservation,
    /// Per switch, by node name.
    pub switches: Vec<(String, SwitchCounters)>,
    pub trace_hash: Option<String>,
    pub events: u64,
    pub end: SimTime,
    pub base_rtt: SimTime,
}

impl SimOutput {
    pub fn total_drops(&self) -> u64 {
        self.switches.iter().map(|(_, c)| c.drops()).sum()
    }
}

struct Network<'t> {
    topo: &'t Topology,
    routes: RouteTable,
    params: NetParams,
    channels: Vec<ChannelState>,
    busy: Vec<bool>,
    ports: Vec<Option<PortQueueSet>>,
    switch_state: Vec<Option<SwitchState>>,
    host_slot: Vec<Option<usize>>,
    nics: Vec<Nic>,
    flows: Vec<FlowRt>,
    spray_rng: RngStream,
    red_rng: RngStream,
    next_uid: u64,
    cons: Conservation,
    crossing: SimTime,
    base_rtt: SimTime,
}

/// Smallest unloaded round trip used to scale protocol timers: a minimum
/// size data packet out and an ACK back between the farthest hosts.
pub fn base_rtt(topo: &Topology, routes: &RouteTable) -> SimTime {
    topo.max_base_rtt(routes, MIN_DATA_BYTES, ACK_BYTES)
}

impl<'t> Network<'t> {
    fn new(topo: &'t Topology, flows: Vec<FlowSpec>, params: NetParams) -> Result<Self, ConfigError> {
        params.switch.validate()?;
        if params.payload == 0 || params.payload > u16::MAX as u32 {
            return Err(ConfigError::Protocol(format!("payload {} out of range", params.payload)));
        }
        if params.nic_quantum == 0 {
            return Err(ConfigError::Protocol("nic_quantum must be positive".into()));
        }
        let routes = topo.route_table()?;
        let rtt = base_rtt(topo, &routes);
        let nchan = topo.num_channels();
        let mut ports = Vec::with_capacity(nchan);
        for c in 0..nchan {
            let ch = topo.channel(ChannelId(c as u32));
            ports.push(if topo.node(ch.from).is_host() {
                None
            } else {
                Some(PortQueueSet::new(&params.switch)?)
            });
        }
        let switch_state = topo
            .nodes()
            .iter()
            .map(|n| (!n.is_host()).then(|| SwitchState::new(&params.switch)))
            .collect();
        let mut host_slot = vec![None; topo.nodes().len()];
        for (i, h) in topo.hosts().iter().enumerate() {
            host_slot[h.index()] = Some(i);
        }
        let nics = topo
            .hosts()
            .iter()
            .map(|&node| Nic {
                node,
                control: VecDeque::new(),
                drr: ClassDrr::new(params.nic_quantum),
                accurate: Vec::new(),
                approx: Vec::new(),
                rr_accurate: 0,
                rr_approx: 0,
                rr_backup: 0,
                wake_at: None,
            })
            .collect();

        let dctcp = params.dctcp.resolve(rtt)?;
        let mut drop_rng = RngStream::new(params.seed, streams::SENDER_DROP);
        let hosts = topo.hosts();
        let mut rts = Vec::with_capacity(flows.len());
        for (i, spec) in flows.into_iter().enumerate() {
            spec.validate()?;
            if spec.id.index() != i {
                return Err(ConfigError::Workload(format!(
                    "flow ids must be dense and ordered; position {i} has id {}",
                    spec.id.0
                )));
            }
            if spec.src >= hosts.len() || spec.dst >= hosts.len() {
                return Err(ConfigError::Workload(format!(
                    "flow {i} uses host index beyond {}",
                    hosts.len()
                )));
            }
            let (src, dst) = (hosts[spec.src], hosts[spec.dst]);
            let line_rate = topo.channel(topo.host_uplink(src)).bandwidth_bps as f64;
            let sent_spec = match spec.protocol {
                Protocol::SenderDrop => sender_drop_filter(&spec, &mut drop_rng),
                _ => spec.clone(),
            };
            let (sender, rx_mlr) = match spec.protocol {
                Protocol::Atp(mode) => {
                    let p = params.atp.resolve(rtt, line_rate, params.payload)?;
                    (Sender::Atp(AtpSender::new(&spec, mode, p, src, dst)), spec.mlr)
                }
                Protocol::Reliable | Protocol::SenderDrop => (
                    Sender::Reliable(ReliableSender::new(&sent_spec, dctcp, params.payload, src, dst)),
                    0.0,
                ),
                Protocol::Udp => (Sender::Udp(UdpSender::new(&spec, params.payload, src, dst)), 0.0),
            };
            let mut rx_spec = sent_spec.clone();
            rx_spec.mlr = rx_mlr;
            rts.push(FlowRt {
                receiver: ReceiverFlowState::new(&rx_spec, params.payload),
                src_host: spec.src,
                spec,
                sent_spec,
                dst,
                sender,
            });
        }

        Ok(Network {
            crossing: topo.host_crossing_delay(),
            topo,
            routes,
            spray_rng: RngStream::new(params.seed, streams::SPRAY),
            red_rng: RngStream::new(params.seed, streams::RED),
            params,
            channels: vec![ChannelState::default(); nchan],
            busy: vec![false; nchan],
            ports,
            switch_state,
            host_slot,
            nics,
            flows: rts,
            next_uid: 0,
            cons: Conservation::default(),
            base_rtt: rtt,
        })
    }

    fn transmit(&mut self, eng: &mut Engine<NetEvent>, ch: ChannelId, pkt: Packet) {
        let c = self.topo.channel(ch);
        let now = eng.now();
        let (done, mut arrival) = self.channels[ch.index()].transmit(&c, pkt.wire_bytes(), now);
        if self.topo.node(c.from).is_host() || self.topo.node(c.to).is_host() {
            arrival += self.crossing;
        }
        self.busy[ch.index()] = true;
        eng.schedule_in(done.saturating_sub(now), NetEvent::TxDone { ch });
        eng.schedule_in(arrival.saturating_sub(now), NetEvent::Arrive { node: c.to, pkt });
    }

    fn emit(&mut self, eng: &mut Engine<NetEvent>, host: usize, mut pkt: Packet) {
        pkt.uid = self.next_uid;
        self.next_uid += 1;
        self.cons.emitted += 1;
        let up = self.topo.host_uplink(self.nics[host].node);
        self.transmit(eng, up, pkt);
    }

    fn flow_ready(&self, f: u32, now: SimTime) -> Option<(u32, u32)> {
        match &self.flows[f as usize].sender {
            Sender::Atp(s) => s.primary_ready(now).map(|q| (q, s.wire_bytes_of(q))),
            Sender::Reliable(s) => s.select().map(|q| (q, s.wire_bytes_of(q))),
            Sender::Udp(s) => s.select().map(|q| (q, s.wire_bytes_of(q))),
        }
    }

    fn backup_ready(&self, f: u32, now: SimTime) -> Option<u32> {
        match &self.flows[f as usize].sender {
            Sender::Atp(s) => s.backup_ready(now),
            _ => None,
        }
    }

    fn round_robin(list: &[u32], start: usize, mut ready: impl FnMut(u32) -> Option<(u32, u32)>) -> Option<(usize, u32, u32, u32)> {
        let n = list.len();
        (0..n).find_map(|k| {
            let i = (start + k) % n;
            ready(list[i]).map(|(seq, bytes)| (i, list[i], seq, bytes))
        })
    }

    /// Puts the next packet on an idle host uplink: ACKs first, then DRR
    /// between accurate and approximate primaries, then backup traffic.
    fn nic_try_send(&mut self, eng: &mut Engine<NetEvent>, host: usize) {
        let now = eng.now();
        let up = self.topo.host_uplink(self.nics[host].node);
        if self.busy[up.index()] {
            return;
        }
        if let Some(p) = self.nics[host].control.pop_front() {
            self.emit(eng, host, p);
            return;
        }
        let nic = &self.nics[host];
        let acc = Self::round_robin(&nic.accurate, nic.rr_accurate, |f| self.flow_ready(f, now));
        let apx = Self::round_robin(&nic.approx, nic.rr_approx, |f| self.flow_ready(f, now));
        let class = self.nics[host]
            .drr
            .pick([acc.map(|a| a.3), apx.map(|a| a.3)]);
        let chosen = match class {
            Some(TrafficClass::Accurate) => {
                let a = acc.expect("picked class is backlogged");
                self.nics[host].rr_accurate = a.0 + 1;
                Some((a.1, a.2, false))
            }
            Some(TrafficClass::Approximate) => {
                let a = apx.expect("picked class is backlogged");
                self.nics[host].rr_approx = a.0 + 1;
                Some((a.1, a.2, false))
            }
            None => {
                let nic = &self.nics[host];
                Self::round_robin(&nic.approx, nic.rr_backup, |f| self.backup_ready(f, now).map(|q| (q, 0)))
                    .map(|b| {
                        self.nics[host].rr_backup = b.0 + 1;
                        (b.1, b.2, true)
                    })
            }
        };
        let Some((f, seq, backup)) = chosen else {
            self.schedule_wake(eng, host);
            return;
        };
        let bw = self.topo.channel(up).bandwidth_bps;
        let pkt = match &mut self.flows[f as usize].sender {
            Sender::Atp(s) if backup => s.emit_backup(seq, now),
            Sender::Atp(s) => s.emit_primary(seq, now),
            Sender::Reliable(s) => s.emit(seq, now),
            Sender::Udp(s) => {
                let done = now + serialization_time(s.wire_bytes_of(seq), bw);
                s.emit(seq, done)
            }
        };
        self.emit(eng, host, pkt);
        if self.flows[f as usize].sender.done_at().is_some() {
            self.retire(host, f);
        }
    }

    /// Schedules a wake-up for the earliest paced transmission at `host`.
    fn schedule_wake(&mut self, eng: &mut Engine<NetEvent>, host: usize) {
        let now = eng.now();
        let mut earliest: Option<SimTime> = None;
        for &f in &self.nics[host].approx {
            if let Sender::Atp(s) = &self.flows[f as usize].sender {
                for t in [s.primary_wake(), s.backup_wake(now)].into_iter().flatten() {
                    if t > now {
                        earliest = Some(earliest.map_or(t, |e: SimTime| e.min(t)));
                    }
                }
            }
        }
        let Some(t) = earliest else { return };
        let nic = &mut self.nics[host];
        if nic.wake_at.is_some_and(|w| w > now && w <= t) {
            return;
        }
        nic.wake_at = Some(t);
        eng.schedule_in(t.saturating_sub(now), NetEvent::NicWake { host: host as u32 });
    }

    fn retire(&mut self, host: usize, f: u32) {
        let nic = &mut self.nics[host];
        nic.accurate.retain(|&x| x != f);
        nic.approx.retain(|&x| x != f);
    }

    fn start_flow(&mut self, eng: &mut Engine<NetEvent>, f: u32) {
        let rt = &mut self.flows[f as usize];
        let host = rt.src_host;
        let immediate = rt.sent_spec.messages.iter().take_while(|m| m.arrival == SimTime::ZERO).count();
        let later: Vec<(u32, SimTime)> = rt.sent_spec.messages[immediate..]
            .iter()
            .enumerate()
            .map(|(k, m)| ((immediate + k) as u32, m.arrival))
            .collect();
        let mut timers = Vec::new();
        match &mut rt.sender {
            Sender::Atp(s) => {
                for m in 0..immediate {
                    s.on_message_arrival(m as u32);
                }
                if s.mode().rate_control() {
                    timers.push((s.params().window, NetEvent::Window { flow: f }));
                }
                timers.push((s.params().rto, NetEvent::Rto { flow: f }));
            }
            Sender::Reliable(s) => {
                s.release_messages(immediate);
                if s.is_done() {
                    return;
                }
                timers.push((SimTime::ZERO, NetEvent::Rto { flow: f }));
            }
            Sender::Udp(s) => s.release_messages(immediate),
        }
        let accurate = rt.sender.is_accurate();
        for (msg, at) in later {
            eng.schedule_in(at, NetEvent::MessageArrival { flow: f, msg });
        }
        for (delay, ev) in timers {
            eng.schedule_in(delay, ev);
        }
        let nic = &mut self.nics[host];
        if accurate {
            nic.accurate.push(f);
        } else {
            nic.approx.push(f);
        }
        self.nic_try_send(eng, host);
    }

    fn on_arrive(&mut self, eng: &mut Engine<NetEvent>, node: NodeId, pkt: Packet) -> Result<(), SimError> {
        if let Some(host) = self.host_slot[node.index()] {
            self.cons.delivered += 1;
            return self.deliver(eng, host, pkt);
        }
        let hops = self
            .routes
            .next_hops(node, pkt.dst)
            .map_err(|e| SimError::Invariant(e.to_string()))?;
        let ch = select_next_hop(hops, &pkt, &mut self.spray_rng);
        let sw = self.switch_state[node.index()]
            .as_mut()
            .expect("packet arrived at a switch");
        let port = self.ports[ch.index()].as_mut().expect("switch port");
        let qi = classify(pkt.tag);
        match port.enqueue(pkt, sw, &mut self.red_rng) {
            Admit::Dropped => self.cons.dropped += 1,
            Admit::Enqueued => {
                if qi > 0 && port.occupancy(qi) as u32 > port.red_config(qi).max_th {
                    return Err(SimError::Invariant(format!(
                        "approximate queue {qi} at node {} holds {} > max_th",
                        node.0,
                        port.occupancy(qi)
                    )));
                }
                if !self.busy[ch.index()] {
                    self.switch_send(eng, ch);
                }
            }
        }
        Ok(())
    }

    fn switch_send(&mut self, eng: &mut Engine<NetEvent>, ch: ChannelId) {
        let from = self.topo.channel(ch).from;
        let sw = self.switch_state[from.index()].as_mut().expect("switch");
        let port = self.ports[ch.index()].as_mut().expect("switch port");
        if let Some(p) = port.dequeue(sw) {
            self.transmit(eng, ch, p);
        }
    }

    fn deliver(&mut self, eng: &mut Engine<NetEvent>, host: usize, pkt: Packet) -> Result<(), SimError> {
        let f = pkt.flow.index();
        let now = eng.now();
        match pkt.kind {
            PacketKind::Data => {
                let rt = &mut self.flows[f];
                if pkt.dst != rt.dst {
                    return Err(SimError::Invariant(format!("flow {f} data reached wrong host")));
                }
                let info = rt.receiver.on_packet(&pkt);
                if matches!(rt.sender, Sender::Udp(_)) {
                    return Ok(());
                }
                let ack = Packet {
                    uid: 0,
                    flow: pkt.flow,
                    src: pkt.dst,
                    dst: pkt.src,
                    message_id: pkt.message_id,
                    seq: pkt.seq,
                    data_len: 0,
                    tag: PriorityTag::Accurate,
                    backup: false,
                    ce: false,
                    kind: PacketKind::Ack(info),
                };
                self.nics[host].control.push_back(ack);
                self.nic_try_send(eng, host);
            }
            PacketKind::Ack(info) => {
                let rt = &mut self.flows[f];
                let was_done = rt.sender.done_at().is_some();
                match &mut rt.sender {
                    Sender::Atp(s) => s.on_ack(&info, now),
                    Sender::Reliable(s) => s.on_ack(&info, now),
                    Sender::Udp(_) => return Err(SimError::Invariant("ACK for a UDP flow".into())),
                }
                let src_host = rt.src_host;
                if !was_done && rt.sender.done_at().is_some() {
                    self.retire(src_host, f as u32);
                }
                self.nic_try_send(eng, host);
            }
        }
        Ok(())
    }

    fn handle(&mut self, eng: &mut Engine<NetEvent>, ev: Event<NetEvent>) -> Result<bool, SimError> {
        match ev.payload {
            NetEvent::Arrive { node, pkt } => self.on_arrive(eng, node, pkt)?,
            NetEvent::TxDone { ch } => {
                self.busy[ch.index()] = false;
                let from = self.topo.channel(ch).from;
                match self.host_slot[from.index()] {
                    Some(host) => self.nic_try_send(eng, host),
                    None => self.switch_send(eng, ch),
                }
            }
            NetEvent::FlowStart { flow } => self.start_flow(eng, flow),
            NetEvent::MessageArrival { flow, msg } => {
                let rt = &mut self.flows[flow as usize];
                match &mut rt.sender {
                    Sender::Atp(s) => s.on_message_arrival(msg),
                    Sender::Reliable(s) => s.release_messages(msg as usize + 1),
                    Sender::Udp(s) => s.release_messages(msg as usize + 1),
                }
                let host = rt.src_host;
                self.nic_try_send(eng, host);
            }
            NetEvent::Window { flow } => {
                let rt = &mut self.flows[flow as usize];
                if let Sender::Atp(s) = &mut rt.sender {
                    if s.on_window_end().is_some() {
                        let w = s.params().window;
                        eng.schedule_in(w, NetEvent::Window { flow });
                    }
                }
                let host = rt.src_host;
                self.nic_try_send(eng, host);
            }
            NetEvent::Rto { flow } => {
                let now = eng.now();
                let rt = &mut self.flows[flow as usize];
                let next = match &mut rt.sender {
                    Sender::Atp(s) => s.on_timeout_check(now),
                    Sender::Reliable(s) => s.on_timeout_check(now),
                    Sender::Udp(_) => None,
                };
                if let Some(t) = next {
                    eng.schedule_in(t.saturating_sub(now), NetEvent::Rto { flow });
                }
                let host = rt.src_host;
                self.nic_try_send(eng, host);
            }
            NetEvent::NicWake { host } => {
                let nic = &mut self.nics[host as usize];
                if nic.wake_at == Some(eng.now()) {
                    nic.wake_at = None;
                }
                self.nic_try_send(eng, host as usize);
            }
        }
        Ok(true)
    }

    fn check_conservation(&mut self, eng: &Engine<NetEvent>) -> Result<(), SimError> {
        let on_wire = eng
            .pending()
            .filter(|e| matches!(e.payload, NetEvent::Arrive { .. }))
            .count() as u64;
        let queued: u64 = self.ports.iter().flatten().map(|p| p.len() as u64).sum();
        self.cons.in_flight = on_wire + queued;
        if !self.cons.holds() {
            return Err(SimError::Invariant(format!(
                "packet conservation: emitted {} != delivered {} + dropped {} + in flight {}",
                self.cons.emitted, self.cons.delivered, self.cons.dropped, self.cons.in_flight
            )));
        }
        for node in self.topo.switches() {
            let c = self.switch_state[node.id.index()].as_ref().expect("switch").counters;
            let held: u64 = self
                .topo
                .out_channels(node.id)
                .iter()
                .map(|ch| self.ports[ch.index()].as_ref().map_or(0, |p| p.len() as u64))
                .sum();
            if c.arrivals != c.departures + c.drops() + held {
                return Err(SimError::Invariant(format!(
                    "switch {} conservation: {} arrivals != {} departures + {} drops + {} queued",
                    node.name,
                    c.arrivals,
                    c.departures,
                    c.drops(),
                    held
                )));
            }
        }
        Ok(())
    }

    fn records(&self, end: SimTime) -> Vec<FlowRecord> {
        self.flows
            .iter()
            .map(|rt| {
                let done = rt.sender.done_at();
                let until = done.unwrap_or(end).max(rt.spec.start);
                let span = until.saturating_sub(rt.spec.start).as_secs_f64();
                let delivered_bytes = rt.receiver.distinct_bytes();
                let goodput = if span > 0.0 {
                    delivered_bytes as f64 * 8.0 / span
                } else {
                    0.0
                };
                let (bytes, wire, retx, backup, wl, ws, rate) = match &rt.sender {
                    Sender::Atp(s) => {
                        let st = s.stats();
                        let wl = (st.window_loss_count > 0)
                            .then(|| st.window_loss_sum / st.window_loss_count as f64);
                        (
                            st.payload_bytes,
                            st.wire_bytes,
                            s.retransmissions(),
                            st.backup_packets,
                            wl,
                            st.window_loss_count,
                            Some(s.rate_bps()),
                        )
                    }
                    Sender::Reliable(s) => {
                        let st = s.stats();
                        (st.payload_bytes, st.wire_bytes, s.retransmissions(), 0, None, 0, None)
                    }
                    Sender::Udp(s) => {
                        let st = s.stats();
                        (st.payload_bytes, st.wire_bytes, 0, 0, None, 0, None)
                    }
                };
                FlowRecord {
                    flow_id: rt.spec.id.0,
                    protocol: rt.spec.protocol,
                    mlr: rt.spec.mlr,
                    src: rt.spec.src,
                    dst: rt.spec.dst,
                    start: rt.spec.start,
                    end: done,
                    messages_total: rt.spec.messages.len() as u64,
                    messages_delivered: rt.receiver.messages_complete(),
                    bytes_sent: bytes,
                    wire_bytes_sent: wire,
                    delivered_bytes,
                    goodput_bps: goodput,
                    retransmissions: retx,
                    backup_packets: backup,
                    window_loss_mean: wl,
                    window_loss_samples: ws,
                    final_rate_bps: rate,
                }
            })
            .collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Runs `flows` over `topo` until the event queue drains or the horizon,
/// then checks packet conservation.
pub fn simulate(
    topo: &Topology,
    flows: Vec<FlowSpec>,
    params: &NetParams,
    trace: TraceSink,
) -> Result<SimOutput, RunError> {
    let mut net = Network::new(topo, flows, params.clone())?;
    let mut eng: Engine<NetEvent> = Engine::with_trace(trace);
    for (i, rt) in net.flows.iter().enumerate() {
        eng.schedule(rt.spec.start, NetEvent::FlowStart { flow: i as u32 })?;
    }
    let horizon = net.params.horizon;
    let summary = eng.run_until(horizon, |eng, ev| net.handle(eng, ev))?;
    net.check_conservation(&eng)?;
    let end = summary.clock;
    Ok(SimOutput {
        records: net.records(end),
        conservation: net.cons,
        switches: topo
            .switches()
            .map(|n| {
                let c = net.switch_state[n.id.index()].as_ref().expect("switch").counters;
                (n.name.clone(), c)
            })
            .collect(),
        trace_hash: eng.trace_hash(),
        events: eng.processed(),
        end,
        base_rtt: net.base_rtt,
    })
}
