//! Expands a config into sweep points, runs them in parallel and writes the
//! CSV outputs.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::ConfigError;
use crate::flow::{FlowSpec, Protocol};
use crate::metrics::{aggregate, write_aggregate_csv, Aggregate, FlowCsvWriter, FlowRecord};
use crate::network::{simulate, NetParams, RunError, SimOutput};
use crate::sim::TraceSink;
use crate::topology::Topology;
use crate::workload::{assign_mix, generate_flows, ArrivalProcess, MessageArrivals, SizeCdf, WorkloadSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub protocol: Protocol,
    pub mlr: f64,
    pub load_scale: f64,
    pub tlr: f64,
}

impl SweepPoint {
    pub fn label(&self) -> String {
        format!(
            "{}/mlr={}/load={}/tlr={}",
            self.protocol.name(),
            self.mlr,
            self.load_scale,
            self.tlr
        )
    }
}

/// Cartesian product of the sweep axes, protocol outermost.
pub fn sweep_points(cfg: &ExperimentConfig) -> Result<Vec<SweepPoint>, ConfigError> {
    let mut out = Vec::new();
    for protocol in cfg.protocols()? {
        for &mlr in &cfg.mlrs() {
            for &load_scale in &cfg.load_scales() {
                for &tlr in &cfg.tlrs() {
                    out.push(SweepPoint {
                        protocol,
                        mlr,
                        load_scale,
                        tlr,
                    });
                }
            }
        }
    }
    Ok(out)
}

pub fn net_params(cfg: &ExperimentConfig, point: &SweepPoint, seed: u64) -> NetParams {
    let mut atp = cfg.protocol.atp.clone();
    atp.tlr = point.tlr;
    NetParams {
        switch: cfg.switch,
        atp,
        dctcp: cfg.protocol.reliable.clone(),
        payload: cfg.payload_bytes,
        nic_quantum: cfg.nic_quantum,
        seed,
        horizon: cfg.horizon(),
    }
}

pub fn build_flows(
    cfg: &ExperimentConfig,
    topo: &Topology,
    cdf: &SizeCdf,
    point: &SweepPoint,
    seed: u64,
) -> Result<Vec<FlowSpec>, ConfigError> {
    let w = &cfg.workload;
    let spec = WorkloadSpec {
        placement: cfg.topology.placement(),
        total_messages: w.total_messages,
        messages_per_flow: w.messages_per_flow,
        arrivals: ArrivalProcess {
            kind: w.arrival_kind()?,
            load_scale: point.load_scale,
        },
        message_arrivals: w.message_rate.map_or(MessageArrivals::AllAtStart, MessageArrivals::ConstantRate),
        protocol: point.protocol,
        mlr: if point.protocol == Protocol::Reliable { 0.0 } else { point.mlr },
    };
    let mut flows = generate_flows(topo.hosts().len(), &spec, cdf, seed)?;
    if let Some(co) = w.co_protocol()? {
        assign_mix(&mut flows, co, w.co_fraction);
    }
    Ok(flows)
}

#[derive(Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub output: SimOutput,
}

#[derive(Debug)]
pub struct PointResult {
    pub point: SweepPoint,
    pub runs: Vec<SeedRun>,
    pub aggregate: Aggregate,
}

impl PointResult {
    pub fn records(&self) -> impl Iterator<Item = &FlowRecord> {
        self.runs.iter().flat_map(|r| r.output.records.iter())
    }
}

/// Where traces go, if anywhere.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceMode {
    Off,
    Hash,
    /// One TSV per (point, seed) under this directory.
    Files(PathBuf),
}

fn trace_path(dir: &Path, jobs: usize, point: usize, seed: u64) -> PathBuf {
    if jobs == 1 {
        dir.join("trace.tsv")
    } else {
        dir.join(format!("trace_p{point}_s{seed}.tsv"))
    }
}

/// Runs every (point, seed) pair. Results come back in sweep order no matter
/// how rayon schedules them.
pub fn run_experiment(cfg: &ExperimentConfig, trace: &TraceMode) -> Result<Vec<PointResult>, RunError> {
    cfg.validate()?;
    let topo = cfg.topology.build(cfg.delays())?;
    let cdf = cfg.workload.cdf_source(&cfg.base_dir).load()?;
    let points = sweep_points(cfg)?;
    let jobs: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|p| cfg.seeds.iter().map(move |&s| (p, s)))
        .collect();
    let njobs = jobs.len();
    let outputs = jobs
        .par_iter()
        .map(|&(p, seed)| {
            let point = &points[p];
            let flows = build_flows(cfg, &topo, &cdf, point, seed)?;
            let sink = match trace {
                TraceMode::Off => TraceSink::Off,
                TraceMode::Hash => TraceSink::Hash,
                TraceMode::Files(dir) => {
                    let path = trace_path(dir, njobs, p, seed);
                    let f = File::create(&path).map_err(crate::error::SimError::Io)?;
                    TraceSink::Writer(Box::new(BufWriter::new(f)))
                }
            };
            simulate(&topo, flows, &net_params(cfg, point, seed), sink)
        })
        .collect::<Result<Vec<_>, RunError>>()?;

    let mut outputs = outputs.into_iter();
    Ok(points
        .into_iter()
        .map(|point| {
            let runs: Vec<SeedRun> = cfg
                .seeds
                .iter()
                .map(|&seed| SeedRun {
                    seed,
                    output: outputs.next().expect("one output per job"),
                })
                .collect();
            let records: Vec<FlowRecord> = runs.iter().flat_map(|r| r.output.records.iter().cloned()).collect();
            let aggregate = aggregate(&point.label(), &records);
            PointResult { point, runs, aggregate }
        })
        .collect())
}

/// Writes `flows.csv` and `aggregate.csv` into `dir`.
pub fn write_outputs(dir: &Path, results: &[PointResult]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut flows = FlowCsvWriter::new(BufWriter::new(File::create(dir.join("flows.csv"))?))?;
    for r in results {
        let label = r.point.label();
        for run in &r.runs {
            flows.write(&label, run.seed, &run.output.records)?;
        }
    }
    flows.finish()?;
    let rows: Vec<Aggregate> = results.iter().map(|r| r.aggregate.clone()).collect();
    write_aggregate_csv(BufWriter::new(File::create(dir.join("aggregate.csv"))?), &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ExperimentConfig {
        ExperimentConfig::from_toml(
            r#"
seeds = [1, 2]
[topology]
kind = "leaf_spine"
leaves = 2
spines = 2
hosts_per_leaf = 2
link_gbps = 10
[workload]
total_messages = 16
arrival = "poisson:20000"
[protocol]
name = "atp-full"
[sweep]
protocol = ["atp-full", "reliable"]
mlr = [0.0, 0.2]
"#,
        )
        .unwrap()
    }

    #[test]
    fn points_are_the_product_of_axes() {
        let pts = sweep_points(&cfg()).unwrap();
        assert_eq!(pts.len(), 4);
        assert_eq!(pts[0].label(), "atp-full/mlr=0/load=1/tlr=0.1");
        assert_eq!(pts[3].protocol, Protocol::Reliable);
    }

    #[test]
    fn results_follow_sweep_order() {
        let c = cfg();
        let res = run_experiment(&c, &TraceMode::Off).unwrap();
        assert_eq!(res.len(), 4);
        for r in &res {
            assert_eq!(r.runs.iter().map(|s| s.seed).collect::<Vec<_>>(), vec![1, 2]);
            assert_eq!(r.aggregate.flows, 32);
            assert!(r.runs.iter().all(|s| s.output.conservation.holds()));
        }
        assert!(res[2].records().all(|f| f.mlr == 0.0 && f.protocol == Protocol::Reliable));
    }
}
