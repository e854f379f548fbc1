use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fedrgl::graph::load_bundle;
use fedrgl::harness::{generate_bundle_file, run_experiment, BundleStats, Overrides};

#[derive(Parser)]
#[command(name = "fedrgl", version, about = "Federated subgraph learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file
    Run {
        /// experiment file ([run] + [data] tables)
        #[arg(long)]
        config: PathBuf,
        /// override the configured method (fedavg|fedrgl)
        #[arg(long)]
        method: Option<String>,
        /// override the master seed
        #[arg(long)]
        seed: Option<u64>,
        /// disable a component (repeatable): global-view, structural-view,
        /// contrastive, pseudo, js, entropy-weighting
        #[arg(long = "ablate")]
        ablate: Vec<String>,
        /// output directory for metrics.csv, config.toml, summary.txt
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Generate a synthetic stochastic-block-model bundle
    GenSbm {
        /// generator spec file (TOML)
        #[arg(long)]
        spec: PathBuf,
        /// bundle file to write
        #[arg(long)]
        out: PathBuf,
    },
    /// Print statistics of a bundle file
    Inspect {
        #[arg(long)]
        bundle: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> fedrgl::Result<()> {
    match cli.command {
        Command::Run { config, method, seed, ablate, out } => {
            let overrides = Overrides {
                method: method.as_deref().map(str::parse).transpose()?,
                seed,
                ablate,
            };
            let summary = run_experiment(&config, &overrides, &out)?;
            println!("{summary}");
            println!("metrics: {}", summary.metrics_path.display());
            Ok(())
        }
        Command::GenSbm { spec, out } => {
            let stats = generate_bundle_file(&spec, &out)?;
            println!("wrote {}", out.display());
            print!("{stats}");
            Ok(())
        }
        Command::Inspect { bundle } => {
            let (loaded, report) = load_bundle(&bundle)?;
            print!("{}", BundleStats::of(&loaded));
            if report.symmetrized_edges > 0 || report.dropped_self_loops > 0 {
                println!(
                    "canonicalized: {} duplicate edge(s) merged, {} self-loop(s) dropped",
                    report.symmetrized_edges, report.dropped_self_loops
                );
            }
            Ok(())
        }
    }
}
