use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use atpsim::config::ExperimentConfig;
use atpsim::experiment::{run_experiment, sweep_points, write_outputs, TraceMode};

#[derive(Parser)]
#[command(name = "atpsim", version, about = "Packet-level simulator for approximate datacenter transport")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every sweep point and seed of an experiment.
    Run {
        config: PathBuf,
        /// Run only this seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write per-event traces next to the CSVs.
        #[arg(long)]
        trace: bool,
    },
    /// Parse and check a config without running it.
    Validate { config: PathBuf },
    /// Print the topology's links as CSV.
    Topology { config: PathBuf },
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> anyhow::Result<()> {
    match Cli::parse().cmd {
        Cmd::Run {
            config,
            seed,
            out,
            trace,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let mode = if trace { TraceMode::Files(out.clone()) } else { TraceMode::Off };
            let results = run_experiment(&cfg, &mode)?;
            write_outputs(&out, &results).with_context(|| format!("writing CSVs to {}", out.display()))?;
            for r in &results {
                let a = &r.aggregate;
                eprintln!(
                    "{}: {}/{} flows done, mean JCT {} us, loss {:.4}",
                    a.point,
                    a.completed,
                    a.flows,
                    a.mean_jct_us.map_or("-".into(), |v| format!("{v:.1}")),
                    a.mean_loss_rate
                );
            }
            Ok(())
        }
        Cmd::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let points = sweep_points(&cfg)?;
            println!(
                "{}: ok ({} sweep points x {} seeds)",
                config.display(),
                points.len(),
                cfg.seeds.len()
            );
            Ok(())
        }
        Cmd::Topology { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            print!("{}", cfg.topology.build(cfg.delays())?.edge_csv());
            Ok(())
        }
    }
}
