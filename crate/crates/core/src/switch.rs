//! Output-port queueing: one accurate drop-tail queue and seven approximate
//! RED queues per port, DRR between the two traffic classes, strict priority
//! inside the approximate class, and next-hop selection (spray or ECMP).

use std::collections::VecDeque;
use std::hash::{DefaultHasher, Hash, Hasher};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::packet::{Packet, PriorityTag};
use crate::topology::ChannelId;

pub const NUM_APPROX_QUEUES: usize = 7;
pub const BACKUP_QUEUE: usize = 7;

/// Queue index for a priority tag: accurate → 0, `Approx(m)` → m, backup → 7.
pub fn classify(tag: PriorityTag) -> usize {
    match tag {
        PriorityTag::Accurate => 0,
        PriorityTag::Approx(m) => {
            debug_assert!((1..=6).contains(&m));
            m as usize
        }
        PriorityTag::Backup => BACKUP_QUEUE,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedConfig {
    pub min_th: u32,
    pub max_th: u32,
}

impl RedConfig {
    pub fn new(min_th: u32, max_th: u32) -> Result<Self, ConfigError> {
        if min_th == 0 || min_th > max_th {
            return Err(ConfigError::Switch(format!(
                "RED thresholds need 1 <= min ({min_th}) <= max ({max_th})"
            )));
        }
        Ok(RedConfig { min_th, max_th })
    }

    /// Drop probability for an arrival that sees `occupancy` queued packets.
    /// Linear ramp from `1/(max-min+1)` at `min_th` to certain drop at `max_th`.
    pub fn drop_probability(&self, occupancy: u32) -> f64 {
        if occupancy < self.min_th {
            0.0
        } else if occupancy >= self.max_th {
            1.0
        } else {
            (occupancy - self.min_th + 1) as f64 / (self.max_th - self.min_th + 1) as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admit {
    Enqueued,
    Dropped,
}

/// RED admission on instantaneous occupancy.
pub fn red_enqueue(
    q: &mut VecDeque<Packet>,
    cfg: &RedConfig,
    packet: Packet,
    rng: &mut impl RngCore,
) -> Admit {
    let occ = q.len() as u32;
    let p = cfg.drop_probability(occ);
    let drop = if p <= 0.0 {
        false
    } else if p >= 1.0 {
        true
    } else {
        rng.random::<f64>() < p
    };
    if drop {
        Admit::Dropped
    } else {
        q.push_back(packet);
        debug_assert!(q.len() as u32 <= cfg.max_th);
        Admit::Enqueued
    }
}

/// Uniform independent choice among equal-cost next hops.
pub fn spray_select(next_hops: &[ChannelId], rng: &mut impl RngCore) -> ChannelId {
    debug_assert!(!next_hops.is_empty());
    if next_hops.len() == 1 {
        return next_hops[0];
    }
    next_hops[rng.random_range(0..next_hops.len())]
}

/// Deterministic per-flow hash over the next-hop set.
pub fn ecmp_select(next_hops: &[ChannelId], packet: &Packet) -> ChannelId {
    debug_assert!(!next_hops.is_empty());
    if next_hops.len() == 1 {
        return next_hops[0];
    }
    let mut h = DefaultHasher::new();
    (packet.src, packet.dst, packet.flow).hash(&mut h);
    next_hops[(h.finish() % next_hops.len() as u64) as usize]
}

/// Approximate data (primary and backup) is sprayed; everything else,
/// including ACKs, follows its ECMP hash.
pub fn select_next_hop(next_hops: &[ChannelId], packet: &Packet, rng: &mut impl RngCore) -> ChannelId {
    if packet.tag.is_accurate() || packet.is_ack() {
        ecmp_select(next_hops, packet)
    } else {
        spray_select(next_hops, rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrafficClass {
    Accurate = 0,
    Approximate = 1,
}

/// Deficit round robin over the accurate and approximate classes.
#[derive(Debug, Clone)]
pub struct ClassDrr {
    quantum: u32,
    deficit: [u32; 2],
    turn: usize,
    granted: bool,
}

impl ClassDrr {
    pub fn new(quantum: u32) -> Self {
        assert!(quantum > 0);
        ClassDrr {
            quantum,
            deficit: [0; 2],
            turn: 0,
            granted: false,
        }
    }

    pub fn quantum(&self) -> u32 {
        self.quantum
    }

    /// Picks the class to serve given each class's head-of-line size
    /// (`None` when the class is empty). An empty class yields its round.
    pub fn pick(&mut self, heads: [Option<u32>; 2]) -> Option<TrafficClass> {
        if heads.iter().all(Option::is_none) {
            self.deficit = [0; 2];
            self.granted = false;
            return None;
        }
        loop {
            let c = self.turn;
            match heads[c] {
                None => {
                    self.deficit[c] = 0;
                    self.granted = false;
                    self.turn ^= 1;
                }
                Some(size) => {
                    if !self.granted {
                        self.deficit[c] += self.quantum;
                        self.granted = true;
                    }
                    if self.deficit[c] >= size {
                        self.deficit[c] -= size;
                        return Some(if c == 0 {
                            TrafficClass::Accurate
                        } else {
                            TrafficClass::Approximate
                        });
                    }
                    self.granted = false;
                    self.turn ^= 1;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwitchConfig {
    pub red_min: u32,
    pub red_max: u32,
    pub backup_red_min: u32,
    pub backup_red_max: u32,
    pub quantum_bytes: u32,
    /// Shared buffer per switch, in packets.
    pub buffer_packets: u32,
    /// Accurate arrivals seeing more than this many packets in queue 0 are
    /// CE-marked.
    pub ecn_threshold: u32,
}

impl Default for SwitchConfig {
    fn default() -> Self {
        SwitchConfig {
            red_min: 1,
            red_max: 5,
            backup_red_min: 1,
            backup_red_max: 1,
            quantum_bytes: 1500,
            buffer_packets: 1000,
            ecn_threshold: 65,
        }
    }
}

impl SwitchConfig {
    pub fn approx_red(&self) -> Result<RedConfig, ConfigError> {
        RedConfig::new(self.red_min, self.red_max)
    }

    pub fn backup_red(&self) -> Result<RedConfig, ConfigError> {
        RedConfig::new(self.backup_red_min, self.backup_red_max)
    }

    /// Packets set aside per switch for the approximate queues.
    pub fn approx_reservation(&self) -> u32 {
        6 * self.red_max + self.backup_red_max
    }

    /// Drop-tail capacity of the accurate class, shared across a switch's ports.
    pub fn accurate_capacity(&self) -> u32 {
        self.buffer_packets.saturating_sub(self.approx_reservation())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.approx_red()?;
        self.backup_red()?;
        if self.quantum_bytes == 0 {
            return Err(ConfigError::Switch("quantum_bytes must be > 0".into()));
        }
        if self.accurate_capacity() == 0 {
            return Err(ConfigError::Switch(format!(
                "buffer_packets ({}) leaves no room for accurate traffic after the {}-packet approximate reservation",
                self.buffer_packets,
                self.approx_reservation()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SwitchCounters {
    pub arrivals: u64,
    pub departures: u64,
    pub approx_drops: u64,
    pub backup_drops: u64,
    pub accurate_drops: u64,
    pub ecn_marks: u64,
    /// Highest occupancy seen in each queue index of any port.
    pub peak_occupancy: [u32; NUM_APPROX_QUEUES + 1],
}

impl SwitchCounters {
    pub fn drops(&self) -> u64 {
        self.approx_drops + self.backup_drops + self.accurate_drops
    }
}

/// Per-switch state shared by its ports.
#[derive(Debug, Clone)]
pub struct SwitchState {
    pub accurate_in_use: u32,
    pub accurate_capacity: u32,
    pub counters: SwitchCounters,
}

impl SwitchState {
    pub fn new(cfg: &SwitchConfig) -> Self {
        SwitchState {
            accurate_in_use: 0,
            accurate_capacity: cfg.accurate_capacity(),
            counters: SwitchCounters::default(),
        }
    }

    fn note_peak(&mut self, queue: usize, len: usize) {
        let p = &mut self.counters.peak_occupancy[queue];
        *p = (*p).max(len as u32);
    }
}

/// Queues behind one output port.
#[derive(Debug, Clone)]
pub struct PortQueueSet {
    accurate: VecDeque<Packet>,
    approx: [VecDeque<Packet>; NUM_APPROX_QUEUES],
    red: [RedConfig; NUM_APPROX_QUEUES],
    drr: ClassDrr,
    ecn_threshold: u32,
}

impl PortQueueSet {
    pub fn new(cfg: &SwitchConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let approx = cfg.approx_red()?;
        let backup = cfg.backup_red()?;
        let mut red = [approx; NUM_APPROX_QUEUES];
        red[BACKUP_QUEUE - 1] = backup;
        Ok(PortQueueSet {
            accurate: VecDeque::new(),
            approx: Default::default(),
            red,
            drr: ClassDrr::new(cfg.quantum_bytes),
            ecn_threshold: cfg.ecn_threshold,
        })
    }

    /// Occupancy of queue `i` (0 = accurate).
    pub fn occupancy(&self, i: usize) -> usize {
        if i == 0 {
            self.accurate.len()
        } else {
            self.approx[i - 1].len()
        }
    }

    pub fn red_config(&self, i: usize) -> RedConfig {
        self.red[i - 1]
    }

    pub fn len(&self) -> usize {
        self.accurate.len() + self.approx.iter().map(VecDeque::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn packets(&self) -> impl Iterator<Item = &Packet> {
        self.accurate.iter().chain(self.approx.iter().flatten())
    }

    /// Classifies and admits `packet` (RED for approximate queues, shared
    /// drop-tail for the accurate queue), updating switch counters.
    pub fn enqueue(&mut self, mut packet: Packet, sw: &mut SwitchState, rng: &mut impl RngCore) -> Admit {
        sw.counters.arrivals += 1;
        let qi = classify(packet.tag);
        if qi == 0 {
            if sw.accurate_in_use >= sw.accurate_capacity {
                sw.counters.accurate_drops += 1;
                return Admit::Dropped;
            }
            if self.accurate.len() as u32 > self.ecn_threshold && !packet.is_ack() {
                packet.ce = true;
                sw.counters.ecn_marks += 1;
            }
            self.accurate.push_back(packet);
            sw.accurate_in_use += 1;
            sw.note_peak(0, self.accurate.len());
            return Admit::Enqueued;
        }
        let outcome = red_enqueue(&mut self.approx[qi - 1], &self.red[qi - 1], packet, rng);
        sw.note_peak(qi, self.approx[qi - 1].len());
        if outcome == Admit::Dropped {
            if qi == BACKUP_QUEUE {
                sw.counters.backup_drops += 1;
            } else {
                sw.counters.approx_drops += 1;
            }
        }
        outcome
    }

    fn approx_head(&self) -> Option<(usize, &Packet)> {
        self.approx
            .iter()
            .enumerate()
            .find_map(|(i, q)| q.front().map(|p| (i, p)))
    }

    /// Next packet for the link: DRR between classes, then strict priority
    /// among approximate queues (lowest index first).
    pub fn dequeue(&mut self, sw: &mut SwitchState) -> Option<Packet> {
        let acc = self.accurate.front().map(Packet::wire_bytes);
        let apx = self.approx_head().map(|(_, p)| p.wire_bytes());
        let pkt = match self.drr.pick([acc, apx])? {
            TrafficClass::Accurate => {
                sw.accurate_in_use -= 1;
                self.accurate.pop_front()
            }
            TrafficClass::Approximate => {
                let (i, _) = self.approx_head().expect("class was backlogged");
                self.approx[i].pop_front()
            }
        };
        if pkt.is_some() {
            sw.counters.departures += 1;
        }
        pkt
    }
}
