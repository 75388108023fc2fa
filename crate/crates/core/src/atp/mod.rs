//! Approximate transport endpoints.

pub mod mrdf;
pub mod rate;
pub mod receiver;
pub mod sender;

pub use mrdf::{BinScheme, MrdfBins};
pub use rate::{assign_priority, default_alphas, LossAccounting, RateController, RateParams, WindowOutcome};
pub use receiver::{required_messages, scaled_ack, ReceiverFlowState};
pub use sender::{AtpParams, AtpSender, SenderStats};

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::packet::MIN_DATA_BYTES;
use crate::sim::SimTime;

/// User-facing ATP settings; time and rate quantities are expressed in base
/// round trips and packets per window, and resolved per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AtpConfig {
    pub tlr: f64,
    pub m: f64,
    pub beta: f64,
    pub window_rtts: f64,
    /// Minimum rate, in packets per window.
    pub rate_floor_pkts: f64,
    /// Priority thresholds, in packets per window.
    pub alpha_pkts: [f64; 5],
    pub rto_rtts: f64,
    /// Age, in base round trips, after which the backup may resend a packet.
    pub stale_rtts: f64,
    pub mrdf: bool,
    pub mrdf_bins: usize,
    /// Linear bins of this many packets instead of power-of-two bins.
    pub mrdf_bin_width: Option<u32>,
    pub loss_accounting: LossAccounting,
}

impl Default for AtpConfig {
    fn default() -> Self {
        AtpConfig {
            tlr: 0.1,
            m: 0.03125,
            beta: 0.1,
            window_rtts: 4.0,
            rate_floor_pkts: 1.0,
            alpha_pkts: [2.0, 4.0, 8.0, 16.0, 32.0],
            rto_rtts: 10.0,
            stale_rtts: 2.0,
            mrdf: true,
            mrdf_bins: 8,
            mrdf_bin_width: None,
            loss_accounting: LossAccounting::SendWindow,
        }
    }
}

impl AtpConfig {
    pub fn bin_scheme(&self) -> Option<BinScheme> {
        self.mrdf.then(|| match self.mrdf_bin_width {
            Some(width) => BinScheme::Linear {
                width,
                bins: self.mrdf_bins,
            },
            None => BinScheme::PowerOfTwo {
                bins: self.mrdf_bins,
            },
        })
    }

    pub fn resolve(&self, base_rtt: SimTime, line_rate_bps: f64, payload: u32) -> Result<AtpParams, ConfigError> {
        if !(self.window_rtts > 0.0 && self.rto_rtts > 0.0 && self.stale_rtts >= 0.0) {
            return Err(ConfigError::Protocol(
                "window_rtts and rto_rtts must be positive, stale_rtts nonnegative".into(),
            ));
        }
        if self.alpha_pkts.windows(2).any(|w| w[0] > w[1]) {
            return Err(ConfigError::Protocol("alpha_pkts must be ascending".into()));
        }
        if self.mrdf_bins == 0 || self.mrdf_bin_width == Some(0) {
            return Err(ConfigError::Protocol("MRDF bins and bin width must be positive".into()));
        }
        let window = base_rtt.mul_f64(self.window_rtts);
        let per_window = (MIN_DATA_BYTES + payload) as f64 * 8.0 / window.as_secs_f64();
        let rate = RateParams {
            r_max_bps: line_rate_bps,
            r_floor_bps: (self.rate_floor_pkts * per_window).min(line_rate_bps),
            tlr: self.tlr,
            m: self.m,
            beta: self.beta,
            accounting: self.loss_accounting,
        };
        rate.validate()?;
        Ok(AtpParams {
            rate,
            alphas: self.alpha_pkts.map(|a| a * per_window),
            window,
            rto: base_rtt.mul_f64(self.rto_rtts),
            stale_after: base_rtt.mul_f64(self.stale_rtts),
            mrdf: self.bin_scheme(),
            payload,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolve_scales_by_rtt() {
        let p = AtpConfig::default()
            .resolve(SimTime::from_micros(25), 1e10, 1460)
            .unwrap();
        assert_eq!(p.window, SimTime::from_micros(100));
        assert_eq!(p.rto, SimTime::from_micros(250));
        // One 1516-byte packet per 100 us.
        assert!((p.rate.r_floor_bps - 121_280_000.0).abs() < 1.0);
        assert!((p.alphas[0] - 2.0 * 121_280_000.0).abs() < 1.0);
        assert_eq!(p.mrdf, Some(BinScheme::PowerOfTwo { bins: 8 }));
    }

    #[test]
    fn resolve_rejects_bad_values() {
        let mut c = AtpConfig::default();
        c.tlr = -0.1;
        assert!(c.resolve(SimTime::from_micros(25), 1e10, 1460).is_err());
        let mut c = AtpConfig::default();
        c.alpha_pkts = [4.0, 2.0, 8.0, 16.0, 32.0];
        assert!(c.resolve(SimTime::from_micros(25), 1e10, 1460).is_err());
    }
}
