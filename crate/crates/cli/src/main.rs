use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mflab_cli::sweep::{expand, write_configs, Variation};
use mflab_cli::{replay, run_experiment, CliError, ExperimentConfig, ExperimentKind, Result, RunOutput};

#[derive(Parser)]
#[command(name = "mflab", version, about = "Finite networks, their mean-field limit, and coupling diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the reductions.
    #[arg(long)]
    threads: Option<usize>,
    /// Force fixed-order reductions.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// SGD on a finite network.
    TrainFinite(RunArgs),
    /// Integrate the mean-field ODEs.
    TrainMf(RunArgs),
    /// Finite SGD and the mean-field flow on shared codes, with coupling distances.
    Couple(RunArgs),
    /// Reverse/forward auxiliary-flow round trips and particle consistency.
    Diversity(RunArgs),
    /// Backward pass against central differences.
    GradCheck(RunArgs),
    /// Validate a configuration without running it.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate one configuration per combination of varied keys.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `dotted.path=[v1, v2, …]`; repeat for a cartesian product.
        #[arg(long = "vary", required = true)]
        variations: Vec<Variation>,
        /// Configs go to `OUT_DIR/configs`, runs to `OUT_DIR/run_NNN`.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Re-run the configuration recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        /// Defaults to `replay/` beside the manifest.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn load(kind: ExperimentKind, args: RunArgs) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::read(&args.config)?;
    if config.kind != kind {
        return Err(CliError::Validation(vec![format!(
            "kind: config is `{}` but the `{}` subcommand was used",
            config.kind.name(),
            kind.name()
        )]));
    }
    if let Some(dir) = args.out_dir {
        config.out_dir = Some(dir);
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.threads.is_some() {
        config.threads = args.threads;
    }
    if args.deterministic {
        config.deterministic = true;
    }
    Ok(config)
}

fn report(out: &RunOutput) {
    for p in out.metrics.iter().chain(&out.snapshots).chain(std::iter::once(&out.manifest)) {
        println!("{}", p.display());
    }
}

fn execute(cli: Cli) -> Result<()> {
    let run = |kind, args| -> Result<()> {
        let out = run_experiment(&load(kind, args)?)?;
        report(&out);
        Ok(())
    };
    match cli.command {
        Command::TrainFinite(a) => run(ExperimentKind::TrainFinite, a),
        Command::TrainMf(a) => run(ExperimentKind::TrainMf, a),
        Command::Couple(a) => run(ExperimentKind::Couple, a),
        Command::Diversity(a) => run(ExperimentKind::Diversity, a),
        Command::GradCheck(a) => run(ExperimentKind::GradCheck, a),
        Command::Check { config } => {
            ExperimentConfig::read(&config)?.validate()?;
            println!("{}: ok", config.display());
            Ok(())
        }
        Command::Sweep { config, variations, out_dir } => {
            let base = ExperimentConfig::read(&config)?;
            let configs = expand(&base, &variations, &out_dir)?;
            for p in write_configs(&configs, &out_dir.join("configs"))? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Replay { manifest, out_dir } => {
            let dir = out_dir.unwrap_or_else(|| manifest.parent().unwrap_or(std::path::Path::new(".")).join("replay"));
            report(&replay(&manifest, &dir)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
