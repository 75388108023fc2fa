//! Flow generation: message sizes from piecewise-linear CDFs, Poisson or
//! replayed flow arrivals, and uniform sender/receiver placement.

use std::path::Path;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::flow::{FlowSpec, MessageSpec, Protocol};
use crate::packet::FlowId;
use crate::sim::{streams, RngStream, SimTime};

pub const FACEBOOK_CDF: &str = include_str!("../data/facebook.cdf");
pub const DATA_MINING_CDF: &str = include_str!("../data/dm.cdf");

#[derive(Debug, Clone, PartialEq)]
pub struct SizeCdf {
    points: Vec<(u64, f64)>,
}

impl SizeCdf {
    pub fn new(points: Vec<(u64, f64)>) -> Result<Self, ConfigError> {
        let text: String = points.iter().map(|(s, p)| format!("{s} {p}\n")).collect();
        parse_cdf(&text, "<inline>")
    }

    pub fn points(&self) -> &[(u64, f64)] {
        &self.points
    }

    pub fn min_size(&self) -> u64 {
        self.points[0].0
    }

    pub fn max_size(&self) -> u64 {
        self.points.last().unwrap().0
    }

    /// Cumulative probability at `size` under the interpolated model.
    pub fn cdf_at(&self, size: f64) -> f64 {
        if size < self.points[0].0 as f64 {
            return 0.0;
        }
        for w in self.points.windows(2) {
            let ((sa, pa), (sb, pb)) = (w[0], w[1]);
            if size < sb as f64 {
                return pa + (pb - pa) * (size - sa as f64) / (sb - sa) as f64;
            }
        }
        1.0
    }

    /// Inverse-CDF lookup: the first point carries its probability as a point
    /// mass; sizes in between are linearly interpolated.
    pub fn quantile(&self, u: f64) -> u64 {
        let (s0, p0) = self.points[0];
        if u <= p0 {
            return s0;
        }
        for w in self.points.windows(2) {
            let ((sa, pa), (sb, pb)) = (w[0], w[1]);
            if u <= pb {
                let x = sa as f64 + (u - pa) / (pb - pa) * (sb - sa) as f64;
                return (x.ceil() as u64).clamp(sa, sb);
            }
        }
        self.max_size()
    }

    pub fn sample(&self, rng: &mut impl RngCore) -> u64 {
        self.quantile(rng.random::<f64>())
    }
}

pub fn sample_size(cdf: &SizeCdf, rng: &mut impl RngCore) -> u64 {
    cdf.sample(rng)
}

/// Parses `size_bytes cumulative_prob` lines; `#` starts a comment.
pub fn parse_cdf(text: &str, origin: &str) -> Result<SizeCdf, ConfigError> {
    let err = |line: usize, msg: String| ConfigError::CdfParse {
        path: origin.into(),
        line,
        msg,
    };
    let mut points: Vec<(u64, f64)> = Vec::new();
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let body = raw.split('#').next().unwrap().trim();
        if body.is_empty() {
            continue;
        }
        last_line = line_no;
        let mut it = body.split_whitespace();
        let (Some(s), Some(p), None) = (it.next(), it.next(), it.next()) else {
            return Err(err(line_no, format!("expected two fields, got {body:?}")));
        };
        let size: u64 = s
            .parse()
            .map_err(|_| err(line_no, format!("bad size {s:?}")))?;
        let prob: f64 = p
            .parse()
            .map_err(|_| err(line_no, format!("bad probability {p:?}")))?;
        if size == 0 {
            return Err(err(line_no, "size must be positive".into()));
        }
        if !(prob > 0.0 && prob <= 1.0) {
            return Err(err(line_no, format!("probability {prob} outside (0, 1]")));
        }
        if let Some(&(ps, pp)) = points.last() {
            if size <= ps {
                return Err(err(line_no, format!("size {size} not above previous {ps}")));
            }
            if prob <= pp {
                return Err(err(line_no, format!("probability {prob} not above previous {pp}")));
            }
        }
        points.push((size, prob));
    }
    match points.last() {
        None => Err(err(0, "no data lines".into())),
        Some(&(_, p)) if (p - 1.0).abs() > 1e-9 => {
            Err(err(last_line, format!("final probability {p} is not 1.0")))
        }
        Some(_) => {
            points.last_mut().unwrap().1 = 1.0;
            Ok(SizeCdf { points })
        }
    }
}

pub fn load_cdf(path: &Path) -> Result<SizeCdf, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_cdf(&text, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CdfSource {
    Facebook,
    DataMining,
    File(std::path::PathBuf),
    /// Every message has this many bytes.
    Fixed(u64),
}

impl CdfSource {
    pub fn load(&self) -> Result<SizeCdf, ConfigError> {
        match self {
            CdfSource::Facebook => parse_cdf(FACEBOOK_CDF, "facebook.cdf"),
            CdfSource::DataMining => parse_cdf(DATA_MINING_CDF, "dm.cdf"),
            CdfSource::File(p) => load_cdf(p),
            CdfSource::Fixed(size) => SizeCdf::new(vec![(*size, 1.0)]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalKind {
    /// Flows per second per sending host.
    Poisson(f64),
    /// Inter-arrival gaps in nanoseconds, cycled.
    EmpiricalGaps(Vec<u64>),
    /// Every flow starts at time zero.
    Simultaneous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalProcess {
    pub kind: ArrivalKind,
    /// Divides inter-arrival times.
    pub load_scale: f64,
}

impl ArrivalProcess {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.load_scale >= 1.0) {
            return Err(ConfigError::Workload(format!(
                "load_scale must be >= 1, got {}",
                self.load_scale
            )));
        }
        match &self.kind {
            ArrivalKind::Poisson(r) if !(*r > 0.0) => {
                Err(ConfigError::Workload(format!("arrival rate must be positive, got {r}")))
            }
            ArrivalKind::EmpiricalGaps(g) if g.is_empty() => {
                Err(ConfigError::Workload("empty gap list".into()))
            }
            _ => Ok(()),
        }
    }

    /// Start times for `n` consecutive flows of one sender.
    fn starts(&self, n: usize, rng: &mut impl RngCore) -> Result<Vec<SimTime>, ConfigError> {
        let mut t = 0.0f64;
        let mut out = Vec::with_capacity(n);
        match &self.kind {
            ArrivalKind::Poisson(rate) => {
                let exp = Exp::new(*rate * self.load_scale)
                    .map_err(|e| ConfigError::Workload(format!("arrival rate: {e}")))?;
                for _ in 0..n {
                    t += exp.sample(rng);
                    out.push(SimTime::from_secs_f64(t));
                }
            }
            ArrivalKind::EmpiricalGaps(gaps) => {
                for i in 0..n {
                    t += gaps[i % gaps.len()] as f64 * 1e-9 / self.load_scale;
                    out.push(SimTime::from_secs_f64(t));
                }
            }
            ArrivalKind::Simultaneous => out.resize(n, SimTime::ZERO),
        }
        Ok(out)
    }
}

/// When messages of one flow become available to the sender.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageArrivals {
    AllAtStart,
    /// Messages per second, the first one at the flow start.
    ConstantRate(f64),
}

/// Which hosts send and which receive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// Every host sends to a uniformly chosen other host.
    Uniform,
    /// Hosts `0..senders` send to a uniformly chosen host among the rest.
    Split { senders: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub placement: Placement,
    pub total_messages: usize,
    pub messages_per_flow: usize,
    pub arrivals: ArrivalProcess,
    pub message_arrivals: MessageArrivals,
    pub protocol: Protocol,
    pub mlr: f64,
}

/// Spreads `total_messages` evenly over the sending hosts, batches them into
/// flows, and pairs each flow with a uniformly random receiver.
pub fn generate_flows(
    hosts: usize,
    spec: &WorkloadSpec,
    cdf: &SizeCdf,
    seed: u64,
) -> Result<Vec<FlowSpec>, ConfigError> {
    if hosts < 2 {
        return Err(ConfigError::Workload(format!("need at least 2 hosts, got {hosts}")));
    }
    if spec.messages_per_flow == 0 {
        return Err(ConfigError::Workload("messages_per_flow must be positive".into()));
    }
    spec.arrivals.validate()?;
    let mut sizes = RngStream::new(seed, streams::SIZES);
    let mut times = RngStream::new(seed, streams::ARRIVALS);
    let mut peers = RngStream::new(seed, streams::RECEIVERS);

    let gap = match spec.message_arrivals {
        MessageArrivals::AllAtStart => None,
        MessageArrivals::ConstantRate(r) if r > 0.0 => Some(1.0 / r),
        MessageArrivals::ConstantRate(r) => {
            return Err(ConfigError::Workload(format!("message rate must be positive, got {r}")))
        }
    };

    let senders = match spec.placement {
        Placement::Uniform => hosts,
        Placement::Split { senders } if senders > 0 && senders < hosts => senders,
        Placement::Split { senders } => {
            return Err(ConfigError::Workload(format!("{senders} senders among {hosts} hosts")))
        }
    };
    let mut flows = Vec::new();
    for src in 0..senders {
        let count = spec.total_messages / senders + usize::from(src < spec.total_messages % senders);
        let nflows = count.div_ceil(spec.messages_per_flow);
        let starts = spec.arrivals.starts(nflows, &mut times)?;
        let mut left = count;
        for start in starts {
            let n = left.min(spec.messages_per_flow);
            left -= n;
            let dst = match spec.placement {
                Placement::Uniform => {
                    let d = peers.random_range(0..hosts - 1);
                    d + usize::from(d >= src)
                }
                Placement::Split { .. } => peers.random_range(senders..hosts),
            };
            let messages = (0..n)
                .map(|i| MessageSpec {
                    id: i as u32,
                    size_bytes: cdf.sample(&mut sizes),
                    arrival: gap.map_or(SimTime::ZERO, |g| SimTime::from_secs_f64(g * i as f64)),
                })
                .collect();
            flows.push(FlowSpec {
                id: FlowId(0),
                src,
                dst,
                start,
                protocol: spec.protocol,
                mlr: spec.mlr,
                messages,
            });
        }
    }
    flows.sort_by_key(|f| (f.start, f.src));
    for (i, f) in flows.iter_mut().enumerate() {
        f.id = FlowId(i as u32);
    }
    Ok(flows)
}

/// Switches an evenly spread `fraction` of flows to `protocol` with no loss
/// tolerance.
pub fn assign_mix(flows: &mut [FlowSpec], protocol: Protocol, fraction: f64) {
    for (i, f) in flows.iter_mut().enumerate() {
        let picked = ((i + 1) as f64 * fraction).floor() > (i as f64 * fraction).floor();
        if picked {
            f.protocol = protocol;
            f.mlr = 0.0;
        }
    }
}
