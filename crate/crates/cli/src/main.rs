use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use spectral_lab::experiments::{list_scenarios, list_scenarios_json, prepare, resolve_seed, ExperimentConfig};
use spectral_lab::{Error, Result};

#[derive(Parser)]
#[command(name = "spectral-lab", version, about = "Desk-scale experiments on random Schrodinger operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its CSV tables and metadata.json
    Run {
        /// scenario id (may instead come from the config file)
        scenario: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// parameter override, repeatable
        #[arg(long = "set", value_name = "K=V")]
        overrides: Vec<String>,
        /// output directory; tables go to <out>/<scenario>/
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// print the metadata JSON on stdout
        #[arg(long)]
        json: bool,
    },
    /// List scenarios with their parameters and defaults
    List {
        #[arg(long)]
        json: bool,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::List { json } => {
            if json {
                println!("{}", serde_json::to_string_pretty(&list_scenarios_json())?);
            } else {
                print!("{}", list_scenarios());
            }
            Ok(())
        }
        Command::Run { scenario, config, overrides, out, threads, seed, json } => {
            let mut cfg = match &config {
                Some(p) => ExperimentConfig::load(p)?,
                None => ExperimentConfig::default(),
            };
            let id = match (scenario, cfg.scenario.take()) {
                (Some(a), Some(b)) if a != b => {
                    return Err(Error::Config(format!("scenario '{a}' conflicts with '{b}' in the config file")))
                }
                (Some(a), _) | (None, Some(a)) => a,
                (None, None) => return Err(Error::Config("no scenario given".into())),
            };
            cfg.apply_overrides(&overrides)?;
            let env = std::env::var("SPECTRAL_LAB_SEED").ok();
            let seed = resolve_seed(&cfg.parameters, seed, env.as_deref())?;
            let prepared = prepare(&id, &cfg.parameters, seed)?;
            if let Some(n) = threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(|e| Error::Config(format!("threads: {e}")))?;
            }
            let start = Instant::now();
            let mut output = prepared.run()?;
            output.overrides = overrides;
            let dir = out.or(cfg.output).unwrap_or_else(|| PathBuf::from("results"));
            let written = output.write(&dir, Some(start.elapsed().as_secs_f64()))?;
            if json {
                println!("{}", serde_json::to_string_pretty(&output.metadata())?);
            } else {
                for p in written {
                    println!("{}", p.display());
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spectral-lab: {e}");
            ExitCode::from(if e.is_config() {
                2
            } else if e.is_numerical() {
                3
            } else {
                1
            })
        }
    }
}
