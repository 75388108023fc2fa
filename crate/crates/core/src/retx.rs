//! Retransmission bookkeeping shared by ATP and the reliable baseline:
//! a FIFO of sent-and-unacknowledged packets in send order, dupAck loss
//! detection by send order, and timeout-driven loss marking.

use std::collections::{BTreeMap, BTreeSet};

use crate::sim::SimTime;

/// ACKs for later-sent packets needed to declare a packet lost.
pub const DUP_ACK_THRESHOLD: u8 = 3;

const NOT_SENT: u64 = u64::MAX;

#[derive(Debug, Clone, Copy)]
struct InFlight {
    dup_acks: u8,
    sent_at: SimTime,
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct AckOutcome {
    /// The echoed packet was outstanding and is now acknowledged.
    pub newly_acked: bool,
    /// Packets declared lost by this ACK, in send order.
    pub lost: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct RetxTracker {
    next_order: u64,
    /// Retransmission FIFO: send order → seq, sent-and-unacked packets only.
    queue: BTreeMap<u64, u32>,
    /// Latest send order per seq, `NOT_SENT` if never sent or already acked.
    order_of: Vec<u64>,
    acked: Vec<bool>,
    /// Outstanding packets not yet declared lost.
    suspects: BTreeMap<u64, InFlight>,
    /// Outstanding packets declared lost, awaiting retransmission.
    lost: BTreeSet<u64>,
    retransmissions: u64,
}

impl RetxTracker {
    pub fn new(num_packets: usize) -> Self {
        RetxTracker {
            next_order: 0,
            queue: BTreeMap::new(),
            order_of: vec![NOT_SENT; num_packets],
            acked: vec![false; num_packets],
            suspects: BTreeMap::new(),
            lost: BTreeSet::new(),
            retransmissions: 0,
        }
    }

    pub fn num_packets(&self) -> usize {
        self.acked.len()
    }

    pub fn is_acked(&self, seq: u32) -> bool {
        self.acked[seq as usize]
    }

    pub fn is_outstanding(&self, seq: u32) -> bool {
        self.order_of[seq as usize] != NOT_SENT
    }

    pub fn is_lost(&self, seq: u32) -> bool {
        let o = self.order_of[seq as usize];
        o != NOT_SENT && self.lost.contains(&o)
    }

    pub fn retransmissions(&self) -> u64 {
        self.retransmissions
    }

    /// Packets in flight (outstanding and not declared lost).
    pub fn in_flight(&self) -> usize {
        self.suspects.len()
    }

    pub fn outstanding(&self) -> usize {
        self.queue.len()
    }

    pub fn lost_count(&self) -> usize {
        self.lost.len()
    }

    /// Appends `seq` to the FIFO tail; called before the packet goes out.
    /// A packet already outstanding moves to the tail. Returns its new order.
    pub fn on_send(&mut self, seq: u32, now: SimTime) -> u64 {
        debug_assert!(!self.acked[seq as usize], "sending an acked packet");
        let prev = self.order_of[seq as usize];
        if prev != NOT_SENT {
            self.queue.remove(&prev);
            self.suspects.remove(&prev);
            if self.lost.remove(&prev) {
                self.retransmissions += 1;
            }
        }
        let order = self.next_order;
        self.next_order += 1;
        self.queue.insert(order, seq);
        self.order_of[seq as usize] = order;
        self.suspects.insert(
            order,
            InFlight {
                dup_acks: 0,
                sent_at: now,
            },
        );
        order
    }

    /// Removes the echoed packet and applies the dupAck rule to every
    /// in-flight packet sent before it. Unknown or stale echoes are ignored.
    pub fn on_ack(&mut self, seq: u32) -> AckOutcome {
        let mut out = AckOutcome::default();
        let Some(&order) = self.order_of.get(seq as usize) else {
            return out;
        };
        if order == NOT_SENT {
            return out;
        }
        self.queue.remove(&order);
        self.suspects.remove(&order);
        self.lost.remove(&order);
        self.order_of[seq as usize] = NOT_SENT;
        self.acked[seq as usize] = true;
        out.newly_acked = true;

        let mut newly_lost = Vec::new();
        for (&o, st) in self.suspects.range_mut(..order) {
            st.dup_acks += 1;
            if st.dup_acks >= DUP_ACK_THRESHOLD {
                newly_lost.push(o);
            }
        }
        for o in newly_lost {
            self.suspects.remove(&o);
            self.lost.insert(o);
            out.lost.push(self.queue[&o]);
        }
        out
    }

    /// Declares every in-flight packet lost. Returns them in send order.
    pub fn mark_all_lost(&mut self) -> Vec<u32> {
        let orders: Vec<u64> = self.suspects.keys().copied().collect();
        self.suspects.clear();
        orders
            .into_iter()
            .map(|o| {
                self.lost.insert(o);
                self.queue[&o]
            })
            .collect()
    }

    /// Earliest-sent lost packet: the retransmission FIFO head among losses.
    pub fn first_lost(&self) -> Option<u32> {
        self.lost.first().map(|o| self.queue[o])
    }

    /// Head of the retransmission FIFO.
    pub fn head(&self) -> Option<u32> {
        self.queue.first_key_value().map(|(_, &s)| s)
    }

    /// Oldest in-flight packet whose latest copy went out at or before `cutoff`.
    pub fn oldest_in_flight_before(&self, cutoff: SimTime) -> Option<u32> {
        self.suspects
            .iter()
            .find(|(_, st)| st.sent_at <= cutoff)
            .map(|(o, _)| self.queue[o])
    }

    /// Outstanding packets in FIFO (send) order.
    pub fn fifo(&self) -> impl Iterator<Item = u32> + '_ {
        self.queue.values().copied()
    }

    /// Latest send order of an outstanding packet.
    pub fn send_order(&self, seq: u32) -> Option<u64> {
        let o = self.order_of[seq as usize];
        (o != NOT_SENT).then_some(o)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(us: u64) -> SimTime {
        SimTime::from_micros(us)
    }

    #[test]
    fn ack_of_head_removes_it() {
        let mut r = RetxTracker::new(4);
        for s in 0..3 {
            r.on_send(s, t(s as u64));
        }
        assert_eq!(r.head(), Some(0));
        assert!(r.on_ack(0).newly_acked);
        assert_eq!(r.head(), Some(1));
        assert_eq!(r.outstanding(), 2);
    }

    #[test]
    fn three_later_acks_mark_loss() {
        let mut r = RetxTracker::new(5);
        for s in 0..5 {
            r.on_send(s, t(0));
        }
        assert!(r.on_ack(1).lost.is_empty());
        assert!(r.on_ack(2).lost.is_empty());
        let out = r.on_ack(3);
        assert_eq!(out.lost, vec![0]);
        assert!(r.is_lost(0));
        assert_eq!(r.first_lost(), Some(0));
        assert_eq!(r.in_flight(), 1);
    }

    #[test]
    fn reordered_acks_do_not_count_earlier_packets() {
        let mut r = RetxTracker::new(5);
        for s in 0..5 {
            r.on_send(s, t(0));
        }
        // ACKs for packets sent *before* 4 do not implicate 4.
        r.on_ack(0);
        r.on_ack(1);
        r.on_ack(2);
        assert!(!r.is_lost(4));
    }

    #[test]
    fn duplicate_and_unknown_acks_are_ignored() {
        let mut r = RetxTracker::new(3);
        r.on_send(0, t(0));
        assert!(r.on_ack(0).newly_acked);
        assert_eq!(r.on_ack(0), AckOutcome::default());
        assert_eq!(r.on_ack(2), AckOutcome::default());
        assert_eq!(r.on_ack(99), AckOutcome::default());
    }

    #[test]
    fn retransmission_moves_to_tail() {
        let mut r = RetxTracker::new(3);
        for s in 0..3 {
            r.on_send(s, t(0));
        }
        r.mark_all_lost();
        r.on_send(0, t(5));
        assert_eq!(r.fifo().collect::<Vec<_>>(), vec![1, 2, 0]);
        assert_eq!(r.retransmissions(), 1);
        assert_eq!(r.first_lost(), Some(1));
    }

    #[test]
    fn stale_lookup_respects_cutoff() {
        let mut r = RetxTracker::new(3);
        r.on_send(0, t(10));
        r.on_send(1, t(20));
        assert_eq!(r.oldest_in_flight_before(t(5)), None);
        assert_eq!(r.oldest_in_flight_before(t(15)), Some(0));
    }

    proptest! {
        // The FIFO always lists exactly the sent-and-unacked packets, in the
        // order of their latest transmission.
        #[test]
        fn fifo_matches_send_order(ops in prop::collection::vec((0u32..12, any::<bool>()), 1..200)) {
            let mut r = RetxTracker::new(12);
            let mut model: Vec<u32> = Vec::new();
            let mut acked = [false; 12];
            for (step, (seq, is_ack)) in ops.into_iter().enumerate() {
                if is_ack {
                    r.on_ack(seq);
                    if let Some(pos) = model.iter().position(|&s| s == seq) {
                        model.remove(pos);
                        acked[seq as usize] = true;
                    }
                } else if !acked[seq as usize] {
                    r.on_send(seq, SimTime(step as u64));
                    model.retain(|&s| s != seq);
                    model.push(seq);
                }
                prop_assert_eq!(r.fifo().collect::<Vec<_>>(), model.clone());
                prop_assert_eq!(r.in_flight() + r.lost_count(), r.outstanding());
            }
        }
    }
}
