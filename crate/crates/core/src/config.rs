//! TOML experiment description: topology, workload, protocol settings and
//! sweep axes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::atp::AtpConfig;
use crate::baseline::DctcpConfig;
use crate::error::ConfigError;
use crate::flow::{Protocol, DEFAULT_PAYLOAD_BYTES};
use crate::switch::SwitchConfig;
use crate::topology::{build_dumbbell, build_fat_tree, build_leaf_spine, Delays, Topology};
use crate::workload::{ArrivalKind, CdfSource, Placement};
use crate::sim::SimTime;

const GBPS: f64 = 1e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologyConfig {
    FatTree {
        cores: usize,
        aggs: usize,
        tors: usize,
        hosts: usize,
        link_gbps: f64,
        oversub: usize,
    },
    LeafSpine {
        leaves: usize,
        spines: usize,
        hosts_per_leaf: usize,
        link_gbps: f64,
    },
    Dumbbell {
        bottleneck_gbps: f64,
        edge_gbps: f64,
        senders: usize,
        receivers: usize,
    },
}

fn bps(gbps: f64) -> Result<u64, ConfigError> {
    if !(gbps > 0.0) {
        return Err(ConfigError::Topology(format!("bandwidth must be positive, got {gbps} Gbps")));
    }
    Ok((gbps * GBPS).round() as u64)
}

impl TopologyConfig {
    pub fn build(&self, delays: Delays) -> Result<Topology, ConfigError> {
        match *self {
            TopologyConfig::FatTree {
                cores,
                aggs,
                tors,
                hosts,
                link_gbps,
                oversub,
            } => build_fat_tree(cores, aggs, tors, hosts, bps(link_gbps)?, oversub, delays),
            TopologyConfig::LeafSpine {
                leaves,
                spines,
                hosts_per_leaf,
                link_gbps,
            } => build_leaf_spine(leaves, spines, hosts_per_leaf, bps(link_gbps)?, delays),
            TopologyConfig::Dumbbell {
                bottleneck_gbps,
                edge_gbps,
                senders,
                receivers,
            } => build_dumbbell(bps(bottleneck_gbps)?, bps(edge_gbps)?, senders, receivers, delays),
        }
    }

    /// On a dumbbell only the left side sends.
    pub fn placement(&self) -> Placement {
        match *self {
            TopologyConfig::Dumbbell { senders, .. } => Placement::Split { senders },
            _ => Placement::Uniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    /// `facebook`, `dm`, or a path to a CDF file.
    pub cdf: String,
    /// Overrides `cdf` with a constant message size.
    pub fixed_size: Option<u64>,
    pub total_messages: usize,
    pub messages_per_flow: usize,
    /// `poisson:<flows per second per host>`, `simultaneous`, or
    /// `gaps:<ns>,<ns>,...`.
    pub arrival: String,
    pub load_scale: f64,
    /// Messages per second within a flow; all at flow start when unset.
    pub message_rate: Option<f64>,
    /// Protocol for a share of flows running alongside the main protocol.
    pub co_protocol: Option<String>,
    pub co_fraction: f64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            cdf: "facebook".into(),
            fixed_size: None,
            total_messages: 1600,
            messages_per_flow: 1,
            arrival: "poisson:10000".into(),
            load_scale: 1.0,
            message_rate: None,
            co_protocol: None,
            co_fraction: 0.5,
        }
    }
}

impl WorkloadConfig {
    pub fn cdf_source(&self, base_dir: &Path) -> CdfSource {
        if let Some(s) = self.fixed_size {
            return CdfSource::Fixed(s);
        }
        match self.cdf.as_str() {
            "facebook" => CdfSource::Facebook,
            "dm" | "data_mining" => CdfSource::DataMining,
            path => CdfSource::File(base_dir.join(path)),
        }
    }

    pub fn arrival_kind(&self) -> Result<ArrivalKind, ConfigError> {
        let bad = || ConfigError::Workload(format!("unrecognized arrival {:?}", self.arrival));
        let (kind, arg) = self.arrival.split_once(':').unwrap_or((self.arrival.as_str(), ""));
        match kind.trim() {
            "poisson" => Ok(ArrivalKind::Poisson(arg.trim().parse().map_err(|_| bad())?)),
            "simultaneous" => Ok(ArrivalKind::Simultaneous),
            "gaps" => arg
                .split(',')
                .map(|g| g.trim().parse::<u64>().map_err(|_| bad()))
                .collect::<Result<Vec<_>, _>>()
                .map(ArrivalKind::EmpiricalGaps),
            _ => Err(bad()),
        }
    }

    pub fn co_protocol(&self) -> Result<Option<Protocol>, ConfigError> {
        self.co_protocol.as_deref().map(str::parse).transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub name: String,
    pub mlr: f64,
    pub atp: AtpConfig,
    pub reliable: DctcpConfig,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            name: "atp-full".into(),
            mlr: 0.1,
            atp: AtpConfig::default(),
            reliable: DctcpConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub protocol: Vec<String>,
    pub mlr: Vec<f64>,
    pub load_scale: Vec<f64>,
    pub tlr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_horizon")]
    pub horizon_ms: f64,
    #[serde(default = "default_payload")]
    pub payload_bytes: u32,
    #[serde(default = "default_link_delay")]
    pub link_delay_us: f64,
    #[serde(default = "default_host_delay")]
    pub host_delay_us: f64,
    #[serde(default = "default_quantum")]
    pub nic_quantum: u32,
    pub topology: TopologyConfig,
    #[serde(default)]
    pub workload: WorkloadConfig,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub switch: SwitchConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_name() -> String {
    "experiment".into()
}
fn default_seeds() -> Vec<u64> {
    vec![1]
}
fn default_horizon() -> f64 {
    1000.0
}
fn default_payload() -> u32 {
    DEFAULT_PAYLOAD_BYTES
}
fn default_link_delay() -> f64 {
    1.0
}
fn default_host_delay() -> f64 {
    10.0
}
fn default_quantum() -> u32 {
    1500
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn delays(&self) -> Delays {
        Delays {
            link: SimTime::from_secs_f64(self.link_delay_us * 1e-6),
            host: SimTime::from_secs_f64(self.host_delay_us * 1e-6),
        }
    }

    pub fn horizon(&self) -> SimTime {
        SimTime::from_secs_f64(self.horizon_ms * 1e-3)
    }

    pub fn protocols(&self) -> Result<Vec<Protocol>, ConfigError> {
        let names = if self.sweep.protocol.is_empty() {
            std::slice::from_ref(&self.protocol.name)
        } else {
            &self.sweep.protocol[..]
        };
        names.iter().map(|n| n.parse()).collect()
    }

    pub fn mlrs(&self) -> Vec<f64> {
        axis(&self.sweep.mlr, self.protocol.mlr)
    }

    pub fn load_scales(&self) -> Vec<f64> {
        axis(&self.sweep.load_scale, self.workload.load_scale)
    }

    pub fn tlrs(&self) -> Vec<f64> {
        axis(&self.sweep.tlr, self.protocol.atp.tlr)
    }

    /// Checks everything that can be checked without running: topology
    /// shape, routes, CDF, arrival syntax, protocol names and ranges.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seeds.is_empty() {
            return Err(ConfigError::Parse("seeds must not be empty".into()));
        }
        if !(self.horizon_ms > 0.0) {
            return Err(ConfigError::Parse("horizon_ms must be positive".into()));
        }
        if !(self.link_delay_us >= 0.0 && self.host_delay_us >= 0.0) {
            return Err(ConfigError::Parse("delays must be nonnegative".into()));
        }
        let topo = self.topology.build(self.delays())?;
        topo.route_table()?;
        self.switch.validate()?;
        self.workload.arrival_kind()?;
        self.workload.co_protocol()?;
        if !(0.0..=1.0).contains(&self.workload.co_fraction) {
            return Err(ConfigError::Workload("co_fraction must be in [0, 1]".into()));
        }
        if self.workload.messages_per_flow == 0 || self.workload.total_messages == 0 {
            return Err(ConfigError::Workload("message counts must be positive".into()));
        }
        self.protocols()?;
        for &m in &self.mlrs() {
            if !(0.0..1.0).contains(&m) {
                return Err(ConfigError::Protocol(format!("mlr {m} outside [0, 1)")));
            }
        }
        for &s in &self.load_scales() {
            if !(s >= 1.0) {
                return Err(ConfigError::Workload(format!("load_scale {s} below 1")));
            }
        }
        for &t in &self.tlrs() {
            let mut atp = self.protocol.atp.clone();
            atp.tlr = t;
            atp.resolve(SimTime::from_micros(10), 1e9, self.payload_bytes)?;
        }
        self.protocol.reliable.resolve(SimTime::from_micros(10))?;
        Ok(())
    }
}

fn axis(values: &[f64], default: f64) -> Vec<f64> {
    if values.is_empty() {
        vec![default]
    } else {
        values.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
name = "t"
seeds = [3, 4]

[topology]
kind = "fat_tree"
cores = 2
aggs = 4
tors = 8
hosts = 16
link_gbps = 10
oversub = 2

[workload]
total_messages = 160
arrival = "poisson:5000"

[protocol]
name = "atp-full"
mlr = 0.1

[protocol.atp]
tlr = 0.1

[sweep]
mlr = [0.0, 0.05, 0.15, 0.25]
"#;

    #[test]
    fn parses_and_expands_axes() {
        let cfg = ExperimentConfig::from_toml(BASIC).unwrap();
        assert_eq!(cfg.seeds, vec![3, 4]);
        assert_eq!(cfg.mlrs(), vec![0.0, 0.05, 0.15, 0.25]);
        assert_eq!(cfg.load_scales(), vec![1.0]);
        assert_eq!(cfg.protocols().unwrap().len(), 1);
        assert_eq!(cfg.workload.arrival_kind().unwrap(), ArrivalKind::Poisson(5000.0));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let bad = BASIC.replace("name = \"t\"", "name = \"t\"\nbogus = 1");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = BASIC.replace("mlr = [0.0, 0.05, 0.15, 0.25]", "mlr = [1.5]");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = BASIC.replace("name = \"atp-full\"", "name = \"quic\"");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = BASIC.replace("tors = 8", "tors = 7");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = BASIC.replace("poisson:5000", "weibull:3");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn arrival_forms() {
        let mut w = WorkloadConfig::default();
        w.arrival = "gaps:100, 200".into();
        assert_eq!(w.arrival_kind().unwrap(), ArrivalKind::EmpiricalGaps(vec![100, 200]));
        w.arrival = "simultaneous".into();
        assert_eq!(w.arrival_kind().unwrap(), ArrivalKind::Simultaneous);
    }

    #[test]
    fn cdf_paths_resolve_against_config_dir() {
        let mut w = WorkloadConfig::default();
        w.cdf = "sizes.cdf".into();
        assert_eq!(
            w.cdf_source(Path::new("/cfg")),
            CdfSource::File(PathBuf::from("/cfg/sizes.cdf"))
        );
        w.fixed_size = Some(4380);
        assert_eq!(w.cdf_source(Path::new("/cfg")), CdfSource::Fixed(4380));
    }
}
