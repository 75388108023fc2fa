//! Minimum-remaining-data-first message selection using coarse size bins.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BinScheme {
    /// Bin `i` holds messages with `2^i <= remaining < 2^(i+1)` packets.
    PowerOfTwo { bins: usize },
    /// Bin `i` holds remaining packet counts `i*width+1 ..= (i+1)*width`.
    Linear { width: u32, bins: usize },
}

impl Default for BinScheme {
    fn default() -> Self {
        BinScheme::PowerOfTwo { bins: 8 }
    }
}

impl BinScheme {
    pub fn num_bins(self) -> usize {
        match self {
            BinScheme::PowerOfTwo { bins } | BinScheme::Linear { bins, .. } => bins.max(1),
        }
    }

    /// Bin for a message with `remaining >= 1` packets left; the last bin
    /// collects everything larger.
    pub fn bin_of(self, remaining: u32) -> usize {
        let r = remaining.max(1);
        let b = match self {
            BinScheme::PowerOfTwo { .. } => r.ilog2() as usize,
            BinScheme::Linear { width, .. } => ((r - 1) / width.max(1)) as usize,
        };
        b.min(self.num_bins() - 1)
    }
}

/// Pending messages keyed by bin, FIFO by arrival rank within a bin.
#[derive(Debug, Clone)]
pub struct MrdfBins {
    scheme: BinScheme,
    bins: Vec<BTreeSet<(u64, u32)>>,
    /// Current (bin, rank) of each message that is queued.
    slot: Vec<Option<(usize, u64)>>,
}

impl MrdfBins {
    pub fn new(scheme: BinScheme, num_messages: usize) -> Self {
        MrdfBins {
            scheme,
            bins: vec![BTreeSet::new(); scheme.num_bins()],
            slot: vec![None; num_messages],
        }
    }

    pub fn scheme(&self) -> BinScheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.bins.iter().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.iter().all(BTreeSet::is_empty)
    }

    pub fn contains(&self, msg: u32) -> bool {
        self.slot[msg as usize].is_some()
    }

    /// Inserts `msg` or moves it to the bin matching `remaining`.
    pub fn upsert(&mut self, msg: u32, rank: u64, remaining: u32) {
        let bin = self.scheme.bin_of(remaining);
        if let Some((old, old_rank)) = self.slot[msg as usize] {
            if old == bin && old_rank == rank {
                return;
            }
            self.bins[old].remove(&(old_rank, msg));
        }
        self.bins[bin].insert((rank, msg));
        self.slot[msg as usize] = Some((bin, rank));
    }

    pub fn remove(&mut self, msg: u32) {
        if let Some((bin, rank)) = self.slot[msg as usize].take() {
            self.bins[bin].remove(&(rank, msg));
        }
    }

    /// Earliest-arrived message in the lowest non-empty bin.
    pub fn first(&self) -> Option<u32> {
        self.bins
            .iter()
            .find_map(|b| b.first().map(|&(_, msg)| msg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn power_of_two_bins() {
        let s = BinScheme::PowerOfTwo { bins: 8 };
        assert_eq!(s.bin_of(1), 0);
        assert_eq!(s.bin_of(2), 1);
        assert_eq!(s.bin_of(3), 1);
        assert_eq!(s.bin_of(4), 2);
        assert_eq!(s.bin_of(127), 6);
        assert_eq!(s.bin_of(128), 7);
        assert_eq!(s.bin_of(1_000_000), 7);
    }

    #[test]
    fn linear_bins() {
        let s = BinScheme::Linear { width: 1, bins: 4 };
        assert_eq!(s.bin_of(1), 0);
        assert_eq!(s.bin_of(3), 2);
        assert_eq!(s.bin_of(9), 3);
        let s = BinScheme::Linear { width: 10, bins: 4 };
        assert_eq!(s.bin_of(10), 0);
        assert_eq!(s.bin_of(11), 1);
    }

    #[test]
    fn smaller_bin_wins_then_arrival_order() {
        let mut b = MrdfBins::new(BinScheme::default(), 4);
        b.upsert(0, 0, 40);
        b.upsert(1, 1, 5);
        b.upsert(2, 2, 6);
        assert_eq!(b.first(), Some(1));
        b.upsert(1, 1, 8);
        // 8 remaining moves message 1 to bin 3, behind message 2 in bin 2.
        assert_eq!(b.first(), Some(2));
        b.remove(2);
        assert_eq!(b.first(), Some(1));
        b.remove(1);
        b.remove(1);
        assert_eq!(b.first(), Some(0));
        assert_eq!(b.len(), 1);
    }

    /// Exhaustive reference: smallest bin, then lowest arrival rank.
    fn oracle(pending: &[(u32, u64, u32)], scheme: BinScheme) -> Option<u32> {
        pending
            .iter()
            .min_by_key(|&&(msg, rank, rem)| (scheme.bin_of(rem), rank, msg))
            .map(|&(msg, _, _)| msg)
    }

    proptest! {
        #[test]
        fn matches_bruteforce(
            ops in prop::collection::vec((0u32..16, 1u32..300, any::<bool>()), 1..200),
            width in prop::option::of(1u32..20),
        ) {
            let scheme = match width {
                Some(w) => BinScheme::Linear { width: w, bins: 6 },
                None => BinScheme::PowerOfTwo { bins: 8 },
            };
            let mut bins = MrdfBins::new(scheme, 16);
            let mut model: Vec<(u32, u64, u32)> = Vec::new();
            for (msg, rem, remove) in ops {
                // Arrival rank is fixed per message.
                let rank = msg as u64 * 7 % 16;
                model.retain(|&(m, _, _)| m != msg);
                if remove {
                    bins.remove(msg);
                } else {
                    bins.upsert(msg, rank, rem);
                    model.push((msg, rank, rem));
                }
                prop_assert_eq!(bins.first(), oracle(&model, scheme));
                prop_assert_eq!(bins.len(), model.len());
            }
        }

        // With unit-width bins the choice is exactly the minimum remaining size.
        #[test]
        fn unit_bins_are_exact(rems in prop::collection::vec(1u32..50, 1..16)) {
            let scheme = BinScheme::Linear { width: 1, bins: 64 };
            let mut bins = MrdfBins::new(scheme, rems.len());
            for (i, &r) in rems.iter().enumerate() {
                bins.upsert(i as u32, i as u64, r);
            }
            let min = *rems.iter().min().unwrap();
            let chosen = bins.first().unwrap() as usize;
            prop_assert_eq!(rems[chosen], min);
            prop_assert_eq!(chosen, rems.iter().position(|&r| r == min).unwrap());
        }
    }
}
