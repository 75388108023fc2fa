//! Per-window sending-rate control and rate-to-priority mapping.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// How ACKs are matched to windows when measuring loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossAccounting {
    /// ACKs count toward the window in which their packet was sent; window
    /// `j` is judged when window `j+1` ends.
    #[default]
    SendWindow,
    /// ACKs count toward the window in which they arrive.
    Arrival,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateParams {
    pub r_max_bps: f64,
    pub r_floor_bps: f64,
    /// Tolerable loss rate.
    pub tlr: f64,
    /// Additive-increase weight toward `r_max_bps`.
    pub m: f64,
    /// Cut applied when a window sent packets but none were acknowledged.
    pub beta: f64,
    pub accounting: LossAccounting,
}

impl RateParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Protocol(msg));
        if !(self.r_max_bps > 0.0) {
            return bad(format!("r_max must be positive, got {}", self.r_max_bps));
        }
        if !(self.r_floor_bps > 0.0 && self.r_floor_bps <= self.r_max_bps) {
            return bad(format!(
                "rate floor {} must be in (0, r_max {}]",
                self.r_floor_bps, self.r_max_bps
            ));
        }
        for (name, v) in [("tlr", self.tlr), ("m", self.m), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must be in [0, 1], got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowOutcome {
    pub old_rate_bps: f64,
    pub new_rate_bps: f64,
    /// Measured loss for the window, `None` if nothing was sent.
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counts {
    sent: u64,
    rcv: u64,
}

#[derive(Debug, Clone)]
pub struct RateController {
    params: RateParams,
    rate_bps: f64,
    epoch: u64,
    cur: Counts,
    prev: Counts,
}

impl RateController {
    pub fn new(params: RateParams) -> Self {
        RateController {
            params,
            rate_bps: params.r_max_bps,
            epoch: 0,
            cur: Counts::default(),
            prev: Counts::default(),
        }
    }

    pub fn with_rate(params: RateParams, rate_bps: f64) -> Self {
        let mut rc = Self::new(params);
        rc.rate_bps = rate_bps.clamp(params.r_floor_bps, params.r_max_bps);
        rc
    }

    pub fn params(&self) -> &RateParams {
        &self.params
    }

    pub fn rate_bps(&self) -> f64 {
        self.rate_bps
    }

    /// Counts a primary packet; returns the window it belongs to.
    pub fn on_sent(&mut self) -> u64 {
        self.cur.sent += 1;
        self.epoch
    }

    /// Counts an ACK for a packet sent in window `sent_in`.
    pub fn on_received(&mut self, sent_in: u64) {
        match self.params.accounting {
            LossAccounting::Arrival => self.cur.rcv += 1,
            LossAccounting::SendWindow if sent_in == self.epoch => self.cur.rcv += 1,
            LossAccounting::SendWindow if sent_in + 1 == self.epoch => self.prev.rcv += 1,
            LossAccounting::SendWindow => {}
        }
    }

    /// Counts of the window that the next update will judge.
    pub fn window_counts(&self) -> (u64, u64) {
        let c = match self.params.accounting {
            LossAccounting::Arrival => self.cur,
            LossAccounting::SendWindow => self.prev,
        };
        (c.sent, c.rcv)
    }

    /// Ends the current window and adjusts the rate.
    pub fn window_update(&mut self) -> WindowOutcome {
        let (sent, rcv) = self.window_counts();
        self.prev = self.cur;
        self.cur = Counts::default();
        self.epoch += 1;
        self.apply(sent, rcv)
    }

    /// One rate step from a window's counts.
    pub fn apply(&mut self, sent: u64, rcv: u64) -> WindowOutcome {
        let old = self.rate_bps;
        let p = &self.params;
        if sent == 0 {
            return WindowOutcome {
                old_rate_bps: old,
                new_rate_bps: old,
                loss: None,
            };
        }
        let loss = (1.0 - rcv as f64 / sent as f64).clamp(0.0, 1.0);
        let next = if rcv == 0 {
            old * (1.0 - p.beta)
        } else if loss <= p.tlr {
            (1.0 - p.m) * old + p.m * p.r_max_bps
        } else {
            old * (1.0 - loss / 2.0)
        };
        self.rate_bps = next.clamp(p.r_floor_bps, p.r_max_bps);
        WindowOutcome {
            old_rate_bps: old,
            new_rate_bps: self.rate_bps,
            loss: Some(loss),
        }
    }
}

/// Maps a rate to an approximate priority level 1..=6 using ascending
/// thresholds: level `m` covers `alphas[m-2] <= rate < alphas[m-1]`.
pub fn assign_priority(rate_bps: f64, alphas: &[f64; 5]) -> u8 {
    debug_assert!(alphas.windows(2).all(|w| w[0] <= w[1]));
    1 + alphas.iter().filter(|&&a| a <= rate_bps).count() as u8
}

/// Thresholds at 2, 4, 8, 16 and 32 packets per window.
pub fn default_alphas(packet_bits: f64, window_secs: f64) -> [f64; 5] {
    std::array::from_fn(|i| (1u64 << (i + 1)) as f64 * packet_bits / window_secs)
}
