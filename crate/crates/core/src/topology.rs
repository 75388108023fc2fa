//! Datacenter topologies (Fat-Tree, leaf-spine, dumbbell), link
//! transmission and equal-cost next-hop tables.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::sim::{serialization_time, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinkId(pub u32);

/// One direction of a link. Channel `2l` runs a→b and `2l+1` runs b→a.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChannelId(pub u32);

impl ChannelId {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn link(self) -> LinkId {
        LinkId(self.0 / 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tier {
    Host,
    Tor,
    Agg,
    Core,
    Leaf,
    Spine,
    Edge,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: NodeId,
    pub tier: Tier,
    pub name: String,
}

impl Node {
    pub fn is_host(&self) -> bool {
        self.tier == Tier::Host
    }
}

#[derive(Debug, Clone)]
pub struct Link {
    pub id: LinkId,
    pub a: NodeId,
    pub b: NodeId,
    pub bandwidth_bps: u64,
    pub prop_delay: SimTime,
}

/// Direction-resolved view of a link.
#[derive(Debug, Clone, Copy)]
pub struct Channel {
    pub id: ChannelId,
    pub from: NodeId,
    pub to: NodeId,
    pub bandwidth_bps: u64,
    pub prop_delay: SimTime,
}

/// Link and host latencies shared by all builders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delays {
    pub link: SimTime,
    /// Round-trip host processing latency; each of the four host crossings
    /// of a round trip (inject and deliver at both ends) accrues a quarter.
    pub host: SimTime,
}

impl Default for Delays {
    fn default() -> Self {
        Delays {
            link: SimTime::from_micros(1),
            host: SimTime::from_micros(10),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Topology {
    nodes: Vec<Node>,
    hosts: Vec<NodeId>,
    links: Vec<Link>,
    /// Outgoing channels per node, ascending by id.
    out: Vec<Vec<ChannelId>>,
    delays: Delays,
}

struct Builder {
    nodes: Vec<Node>,
    links: Vec<Link>,
    delays: Delays,
}

impl Builder {
    fn new(delays: Delays) -> Self {
        Builder {
            nodes: Vec::new(),
            links: Vec::new(),
            delays,
        }
    }

    fn node(&mut self, tier: Tier, name: String) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node { id, tier, name });
        id
    }

    fn link(&mut self, a: NodeId, b: NodeId, bw: u64) {
        let id = LinkId(self.links.len() as u32);
        self.links.push(Link {
            id,
            a,
            b,
            bandwidth_bps: bw,
            prop_delay: self.delays.link,
        });
    }

    fn finish(self) -> Result<Topology, ConfigError> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for l in &self.links {
            if l.bandwidth_bps == 0 {
                return Err(ConfigError::Topology("link bandwidth must be > 0".into()));
            }
            out[l.a.index()].push(ChannelId(l.id.0 * 2));
            out[l.b.index()].push(ChannelId(l.id.0 * 2 + 1));
        }
        let hosts = self
            .nodes
            .iter()
            .filter(|n| n.is_host())
            .map(|n| n.id)
            .collect();
        let topo = Topology {
            nodes: self.nodes,
            hosts,
            links: self.links,
            out,
            delays: self.delays,
        };
        for &h in &topo.hosts {
            let n = topo.out[h.index()].len();
            if n != 1 {
                return Err(ConfigError::Topology(format!(
                    "host {} has {n} links, expected exactly one",
                    topo.nodes[h.index()].name
                )));
            }
        }
        Ok(topo)
    }
}

fn require_positive(name: &str, v: usize) -> Result<(), ConfigError> {
    if v == 0 {
        Err(ConfigError::Topology(format!("{name} must be >= 1")))
    } else {
        Ok(())
    }
}

/// Three-tier Clos with explicit tier counts.
///
/// Each ToR takes `hosts / tors` hosts and `hosts_per_tor / oversub` uplinks,
/// one to every aggregation switch of its pod. Aggregation switch `j` of each
/// pod connects to the `j`-th group of `cores / uplinks` core switches.
pub fn build_fat_tree(
    cores: usize,
    aggs: usize,
    tors: usize,
    hosts: usize,
    link_bw: u64,
    oversub: usize,
    delays: Delays,
) -> Result<Topology, ConfigError> {
    for (n, v) in [
        ("cores", cores),
        ("aggs", aggs),
        ("tors", tors),
        ("hosts", hosts),
        ("oversub", oversub),
    ] {
        require_positive(n, v)?;
    }
    if !hosts.is_multiple_of(tors) {
        return Err(ConfigError::Topology(format!(
            "hosts ({hosts}) must be a multiple of tors ({tors})"
        )));
    }
    let per_tor = hosts / tors;
    if per_tor % oversub != 0 {
        return Err(ConfigError::Topology(format!(
            "hosts per ToR ({per_tor}) must be a multiple of the oversubscription ratio ({oversub})"
        )));
    }
    let uplinks = per_tor / oversub;
    if aggs % uplinks != 0 {
        return Err(ConfigError::Topology(format!(
            "aggs ({aggs}) must be a multiple of ToR uplinks ({uplinks})"
        )));
    }
    let pods = aggs / uplinks;
    if tors % pods != 0 {
        return Err(ConfigError::Topology(format!(
            "tors ({tors}) must be a multiple of pods ({pods})"
        )));
    }
    if cores % uplinks != 0 {
        return Err(ConfigError::Topology(format!(
            "cores ({cores}) must be a multiple of ToR uplinks ({uplinks})"
        )));
    }
    let tors_per_pod = tors / pods;
    let core_group = cores / uplinks;

    let mut b = Builder::new(delays);
    let host_ids: Vec<_> = (0..hosts)
        .map(|i| b.node(Tier::Host, format!("h{i}")))
        .collect();
    let tor_ids: Vec<_> = (0..tors)
        .map(|i| b.node(Tier::Tor, format!("tor{i}")))
        .collect();
    let agg_ids: Vec<_> = (0..aggs)
        .map(|i| b.node(Tier::Agg, format!("agg{i}")))
        .collect();
    let core_ids: Vec<_> = (0..cores)
        .map(|i| b.node(Tier::Core, format!("core{i}")))
        .collect();

    for (i, &h) in host_ids.iter().enumerate() {
        b.link(h, tor_ids[i / per_tor], link_bw);
    }
    for (t, &tor) in tor_ids.iter().enumerate() {
        let pod = t / tors_per_pod;
        for j in 0..uplinks {
            b.link(tor, agg_ids[pod * uplinks + j], link_bw);
        }
    }
    for (a, &agg) in agg_ids.iter().enumerate() {
        let j = a % uplinks;
        for c in 0..core_group {
            b.link(agg, core_ids[j * core_group + c], link_bw);
        }
    }
    b.finish()
}

/// Two-tier leaf-spine with every leaf wired to every spine.
pub fn build_leaf_spine(
    leaves: usize,
    spines: usize,
    hosts_per_leaf: usize,
    link_bw: u64,
    delays: Delays,
) -> Result<Topology, ConfigError> {
    require_positive("leaves", leaves)?;
    require_positive("spines", spines)?;
    require_positive("hosts_per_leaf", hosts_per_leaf)?;
    let mut b = Builder::new(delays);
    let host_ids: Vec<_> = (0..leaves * hosts_per_leaf)
        .map(|i| b.node(Tier::Host, format!("h{i}")))
        .collect();
    let leaf_ids: Vec<_> = (0..leaves)
        .map(|i| b.node(Tier::Leaf, format!("leaf{i}")))
        .collect();
    let spine_ids: Vec<_> = (0..spines)
        .map(|i| b.node(Tier::Spine, format!("spine{i}")))
        .collect();
    for (i, &h) in host_ids.iter().enumerate() {
        b.link(h, leaf_ids[i / hosts_per_leaf], link_bw);
    }
    for &l in &leaf_ids {
        for &s in &spine_ids {
            b.link(l, s, link_bw);
        }
    }
    b.finish()
}

/// Senders, left switch, bottleneck, right switch, receivers.
/// Hosts `0..senders` sit on the left, the rest on the right.
pub fn build_dumbbell(
    bottleneck_bw: u64,
    edge_bw: u64,
    senders: usize,
    receivers: usize,
    delays: Delays,
) -> Result<Topology, ConfigError> {
    require_positive("senders", senders)?;
    require_positive("receivers", receivers)?;
    let mut b = Builder::new(delays);
    let left_hosts: Vec<_> = (0..senders)
        .map(|i| b.node(Tier::Host, format!("h{i}")))
        .collect();
    let right_hosts: Vec<_> = (0..receivers)
        .map(|i| b.node(Tier::Host, format!("h{}", senders + i)))
        .collect();
    let left = b.node(Tier::Edge, "left".into());
    let right = b.node(Tier::Edge, "right".into());
    for &h in &left_hosts {
        b.link(h, left, edge_bw);
    }
    b.link(left, right, bottleneck_bw);
    for &h in &right_hosts {
        b.link(right, h, edge_bw);
    }
    b.finish()
}

impl Topology {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn hosts(&self) -> &[NodeId] {
        &self.hosts
    }

    pub fn switches(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| !n.is_host())
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn num_channels(&self) -> usize {
        self.links.len() * 2
    }

    pub fn delays(&self) -> Delays {
        self.delays
    }

    /// Latency added when a host hands a packet to its NIC, and again when a
    /// host accepts a packet off the wire.
    pub fn host_crossing_delay(&self) -> SimTime {
        SimTime(self.delays.host.0 / 4)
    }

    pub fn channel(&self, id: ChannelId) -> Channel {
        let link = &self.links[id.link().0 as usize];
        let (from, to) = if id.0 % 2 == 0 {
            (link.a, link.b)
        } else {
            (link.b, link.a)
        };
        Channel {
            id,
            from,
            to,
            bandwidth_bps: link.bandwidth_bps,
            prop_delay: link.prop_delay,
        }
    }

    pub fn out_channels(&self, node: NodeId) -> &[ChannelId] {
        &self.out[node.index()]
    }

    /// The single link from a host into the fabric.
    pub fn host_uplink(&self, host: NodeId) -> ChannelId {
        self.out[host.index()][0]
    }

    /// Hop distances from every node to `dst`, never transiting other hosts.
    pub fn hop_distances_to(&self, dst: NodeId) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.nodes.len()];
        dist[dst.index()] = Some(0);
        let mut queue = VecDeque::from([dst]);
        while let Some(n) = queue.pop_front() {
            if n != dst && self.nodes[n.index()].is_host() {
                continue;
            }
            let d = dist[n.index()].expect("queued nodes have a distance");
            for &ch in &self.out[n.index()] {
                let m = self.channel(ch).to;
                if dist[m.index()].is_none() {
                    dist[m.index()] = Some(d + 1);
                    queue.push_back(m);
                }
            }
        }
        dist
    }

    pub fn route_table(&self) -> Result<RouteTable, ConfigError> {
        RouteTable::build(self)
    }

    /// Edge list as `node_a,node_b,bw_bps,delay_ns` CSV with a header row.
    pub fn edge_csv(&self) -> String {
        let mut s = String::from("node_a,node_b,bw_bps,delay_ns\n");
        for l in &self.links {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                self.nodes[l.a.index()].name,
                self.nodes[l.b.index()].name,
                l.bandwidth_bps,
                l.prop_delay.0
            );
        }
        s
    }

    /// Unloaded round trip between the farthest host pair: a `fwd_bytes`
    /// packet out and a `rev_bytes` packet back, along first-choice routes.
    pub fn max_base_rtt(&self, routes: &RouteTable, fwd_bytes: u32, rev_bytes: u32) -> SimTime {
        let mut worst = SimTime::ZERO;
        for (si, &src) in self.hosts.iter().enumerate() {
            for (di, &dst) in self.hosts.iter().enumerate() {
                if si == di {
                    continue;
                }
                let rtt = self.one_way_delay(routes, src, dst, fwd_bytes)
                    + self.one_way_delay(routes, dst, src, rev_bytes);
                worst = worst.max(rtt);
            }
        }
        worst
    }

    /// Unloaded one-way latency including host crossings.
    pub fn one_way_delay(&self, routes: &RouteTable, src: NodeId, dst: NodeId, bytes: u32) -> SimTime {
        let mut t = self.host_crossing_delay() * 2;
        let mut node = src;
        while node != dst {
            let ch = routes.next_hops(node, dst).expect("validated route")[0];
            let c = self.channel(ch);
            t += serialization_time(bytes, c.bandwidth_bps) + c.prop_delay;
            node = c.to;
        }
        t
    }
}

/// Equal-cost minimal-hop next hops per (node, destination host).
#[derive(Debug, Clone)]
pub struct RouteTable {
    host_slot: Vec<Option<usize>>,
    /// `[node][dst_slot]` → outgoing channels, ascending by id.
    hops: Vec<Vec<Vec<ChannelId>>>,
}

impl RouteTable {
    pub fn build(topo: &Topology) -> Result<Self, ConfigError> {
        let n = topo.nodes.len();
        let mut host_slot = vec![None; n];
        for (i, h) in topo.hosts.iter().enumerate() {
            host_slot[h.index()] = Some(i);
        }
        let mut hops = vec![vec![Vec::new(); topo.hosts.len()]; n];
        for (slot, &dst) in topo.hosts.iter().enumerate() {
            let dist = topo.hop_distances_to(dst);
            for node in &topo.nodes {
                if node.id == dst {
                    continue;
                }
                let Some(d) = dist[node.id.index()] else {
                    return Err(ConfigError::Unreachable {
                        node: node.id.index(),
                        dst: dst.index(),
                    });
                };
                let next: Vec<ChannelId> = topo.out[node.id.index()]
                    .iter()
                    .copied()
                    .filter(|&ch| {
                        let to = topo.channel(ch).to;
                        let via_host = to != dst && topo.nodes[to.index()].is_host();
                        !via_host && dist[to.index()] == Some(d - 1)
                    })
                    .collect();
                debug_assert!(!next.is_empty());
                hops[node.id.index()][slot] = next;
            }
        }
        Ok(RouteTable { host_slot, hops })
    }

    pub fn next_hops(&self, node: NodeId, dst: NodeId) -> Result<&[ChannelId], ConfigError> {
        let slot = self.host_slot.get(dst.index()).copied().flatten().ok_or(
            ConfigError::Unreachable {
                node: node.index(),
                dst: dst.index(),
            },
        )?;
        let hops = &self.hops[node.index()][slot];
        if hops.is_empty() {
            return Err(ConfigError::Unreachable {
                node: node.index(),
                dst: dst.index(),
            });
        }
        Ok(hops)
    }
}

/// Per-direction serialization state of a link.
#[derive(Debug, Clone, Copy, Default)]
pub struct ChannelState {
    pub busy_until: SimTime,
    pub bytes_carried: u64,
    pub packets_carried: u64,
}

impl ChannelState {
    /// Store-and-forward transmission. Returns `(tx_done, arrival)` where
    /// `arrival = max(now, busy_until) + size/bandwidth + prop_delay`.
    pub fn transmit(&mut self, ch: &Channel, bytes: u32, now: SimTime) -> (SimTime, SimTime) {
        debug_assert!(bytes > 0);
        let start = now.max(self.busy_until);
        let done = start + serialization_time(bytes, ch.bandwidth_bps);
        debug_assert!(done >= self.busy_until);
        self.busy_until = done;
        self.bytes_carried += bytes as u64;
        self.packets_carried += 1;
        (done, done + ch.prop_delay)
    }
}
