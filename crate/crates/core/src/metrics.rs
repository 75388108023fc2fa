//! Per-flow records, summary statistics and CSV output.

use std::io::Write;

use serde::Serialize;

use crate::error::MetricsError;
use crate::flow::Protocol;
use crate::sim::SimTime;

/// Bumped whenever a CSV column changes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecord {
    pub flow_id: u32,
    pub protocol: Protocol,
    pub mlr: f64,
    pub src: usize,
    pub dst: usize,
    pub start: SimTime,
    /// When the sender learned the flow was done; `None` if it never did.
    pub end: Option<SimTime>,
    pub messages_total: u64,
    pub messages_delivered: u64,
    /// Payload bytes put on the wire, including retransmissions and backups.
    pub bytes_sent: u64,
    pub wire_bytes_sent: u64,
    /// Distinct payload bytes that reached the receiver.
    pub delivered_bytes: u64,
    /// Distinct delivered payload over the flow's lifetime (or the run, if
    /// unfinished).
    pub goodput_bps: f64,
    pub retransmissions: u64,
    pub backup_packets: u64,
    /// Mean per-window loss after warm-up, for rate-controlled flows.
    pub window_loss_mean: Option<f64>,
    pub window_loss_samples: u64,
    pub final_rate_bps: Option<f64>,
}

impl FlowRecord {
    pub fn completed(&self) -> bool {
        self.end.is_some()
    }

    pub fn jct(&self) -> Option<SimTime> {
        self.end.map(|e| e.saturating_sub(self.start))
    }

    pub fn messages_dropped(&self) -> u64 {
        self.messages_total - self.messages_delivered
    }

    pub fn measured_loss_rate(&self) -> f64 {
        1.0 - self.messages_delivered as f64 / self.messages_total as f64
    }
}

pub fn jain_index(values: &[f64]) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    let sum: f64 = values.iter().sum();
    let sq: f64 = values.iter().map(|v| v * v).sum();
    if sq == 0.0 {
        return Err(MetricsError::AllZero);
    }
    Ok(sum * sum / (values.len() as f64 * sq))
}

/// Nearest-rank percentile of an ascending slice: the value at rank
/// `ceil(p/100 * n)`, 1-based.
pub fn percentile_nearest_rank(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Summary of one sweep point; a pure function of its flow records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub point: String,
    pub protocol: String,
    pub flows: usize,
    pub completed: usize,
    pub mean_jct_us: Option<f64>,
    pub median_jct_us: Option<f64>,
    pub p99_jct_us: Option<f64>,
    pub mean_loss_rate: f64,
    pub mean_window_loss: Option<f64>,
    pub total_bytes_sent: u64,
    pub jain_goodput: Option<f64>,
}

pub fn aggregate(point: &str, records: &[FlowRecord]) -> Aggregate {
    let mut jcts: Vec<f64> = records
        .iter()
        .filter_map(|r| r.jct().map(|j| j.as_micros_f64()))
        .collect();
    jcts.sort_by(f64::total_cmp);
    let losses: Vec<f64> = records.iter().map(FlowRecord::measured_loss_rate).collect();
    let (wsum, wcount) = records
        .iter()
        .filter_map(|r| r.window_loss_mean.map(|m| (m * r.window_loss_samples as f64, r.window_loss_samples)))
        .fold((0.0, 0u64), |(s, c), (a, b)| (s + a, c + b));
    let goodputs: Vec<f64> = records.iter().map(|r| r.goodput_bps).collect();
    let mut protocols: Vec<&str> = records.iter().map(|r| r.protocol.name()).collect();
    protocols.sort_unstable();
    protocols.dedup();
    Aggregate {
        point: point.to_string(),
        protocol: protocols.join("+"),
        flows: records.len(),
        completed: jcts.len(),
        mean_jct_us: mean(&jcts),
        median_jct_us: percentile_nearest_rank(&jcts, 50.0),
        p99_jct_us: percentile_nearest_rank(&jcts, 99.0),
        mean_loss_rate: mean(&losses).unwrap_or(0.0),
        mean_window_loss: (wcount > 0).then(|| wsum / wcount as f64),
        total_bytes_sent: records.iter().map(|r| r.bytes_sent).sum(),
        jain_goodput: jain_index(&goodputs).ok(),
    }
}

#[derive(Serialize)]
struct FlowRow<'a> {
    point: &'a str,
    seed: u64,
    flow_id: u32,
    protocol: &'static str,
    mlr: f64,
    src: usize,
    dst: usize,
    start_ns: u64,
    end_ns: Option<u64>,
    jct_ns: Option<u64>,
    messages_total: u64,
    messages_delivered: u64,
    messages_dropped: u64,
    measured_loss_rate: f64,
    bytes_sent: u64,
    wire_bytes_sent: u64,
    delivered_bytes: u64,
    goodput_bps: f64,
    retransmissions: u64,
    backup_packets: u64,
    window_loss_mean: Option<f64>,
    final_rate_bps: Option<f64>,
}

fn schema_line(w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "# schema_version={SCHEMA_VERSION}")
}

fn csv_err(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

/// Streams flow rows; the header and schema line are written once.
pub struct FlowCsvWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> FlowCsvWriter<W> {
    pub fn new(mut w: W) -> std::io::Result<Self> {
        schema_line(&mut w)?;
        Ok(FlowCsvWriter {
            inner: csv::Writer::from_writer(w),
        })
    }

    pub fn write(&mut self, point: &str, seed: u64, records: &[FlowRecord]) -> std::io::Result<()> {
        for r in records {
            self.inner
                .serialize(FlowRow {
                    point,
                    seed,
                    flow_id: r.flow_id,
                    protocol: r.protocol.name(),
                    mlr: r.mlr,
                    src: r.src,
                    dst: r.dst,
                    start_ns: r.start.as_nanos(),
                    end_ns: r.end.map(SimTime::as_nanos),
                    jct_ns: r.jct().map(SimTime::as_nanos),
                    messages_total: r.messages_total,
                    messages_delivered: r.messages_delivered,
                    messages_dropped: r.messages_dropped(),
                    measured_loss_rate: r.measured_loss_rate(),
                    bytes_sent: r.bytes_sent,
                    wire_bytes_sent: r.wire_bytes_sent,
                    delivered_bytes: r.delivered_bytes,
                    goodput_bps: r.goodput_bps,
                    retransmissions: r.retransmissions,
                    backup_packets: r.backup_packets,
                    window_loss_mean: r.window_loss_mean,
                    final_rate_bps: r.final_rate_bps,
                })
                .map_err(csv_err)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| e.into_error())
    }
}

pub fn write_aggregate_csv(w: impl Write, rows: &[Aggregate]) -> std::io::Result<()> {
    let mut w = w;
    schema_line(&mut w)?;
    let mut c = csv::Writer::from_writer(w);
    for r in rows {
        c.serialize(r).map_err(csv_err)?;
    }
    c.flush()
}
