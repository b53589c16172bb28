//! Command-line front end for the lexical-substitution toolkit.
//!
//! Commands map one-to-one onto the experiment operations: `stats`,
//! `augment`, `train`, `run-e1`, `run-e2`, `run-e3`, plus `serve`, which
//! exposes the bundled stub backend over stdin/stdout so `exec:` endpoints
//! can be exercised without any external model.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 backend error, 4 data error.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use lexsub::backend::stub::StubBackend;
use lexsub::backend::wire::serve;
use lexsub::config::ExperimentConfig;
use lexsub::experiment::{
    run_augment, run_e1, run_e2, run_e3, run_stats, run_train,
};
use lexsub::{Error, ErrorClass};

#[derive(Parser)]
#[command(name = "lexsub", version, about = "Word-level lexical substitution toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print per-corpus statistics and write stats.tsv
    Stats(RunArgs),
    /// Generate augmentation sample files for every corpus and side
    Augment(AugmentArgs),
    /// Train and persist the substitute and plain linear models
    Train(RunArgs),
    /// Lexical-variation evaluation (perturbed test sets)
    RunE1(RunArgs),
    /// Augmented-retraining evaluation (seed-aggregated F1)
    RunE2(RunArgs),
    /// Transfer matrix (ΔTPR of every augmenter against every perturbation)
    RunE3(RunArgs),
    /// Serve the bundled stub backend over stdin/stdout
    Serve(ServeArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration file (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Override the experiment seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override every backend endpoint (e.g. "stub", "stub:hate",
    /// "exec:command")
    #[arg(long)]
    backend: Option<String>,
}

#[derive(Args)]
struct AugmentArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Only run this generator (default: the whole roster)
    #[arg(long)]
    generator: Option<String>,
}

#[derive(Args)]
struct ServeArgs {
    /// Stub flavor, salting all stub responses (e.g. "hate")
    #[arg(long)]
    flavor: Option<String>,
}

fn load_config(args: &RunArgs) -> lexsub::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    cfg.apply_overrides(args.seed, args.out.clone(), args.backend.as_deref());
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cli: Cli) -> lexsub::Result<()> {
    match cli.command {
        Command::Stats(args) => {
            let cfg = load_config(&args)?;
            let table = run_stats::<f64>(&cfg)?;
            print!("{table}");
        }
        Command::Augment(args) => {
            let cfg = load_config(&args.run)?;
            let summary = run_augment::<f64>(&cfg, args.generator.as_deref())?;
            println!("corpus\tside\tgenerator\tsamples\tpath");
            for file in &summary.files {
                println!(
                    "{}\t{}\t{}\t{}\t{}",
                    file.unit,
                    file.side,
                    file.generator,
                    file.samples,
                    file.path.display()
                );
            }
        }
        Command::Train(args) => {
            let cfg = load_config(&args)?;
            let summary = run_train::<f64>(&cfg)?;
            for path in &summary.models {
                println!("{}", path.display());
            }
        }
        Command::RunE1(args) => {
            let cfg = load_config(&args)?;
            let report = run_e1::<f64>(&cfg)?;
            print!("{}", report.to_tsv());
            eprintln!(
                "wrote e1-report.{{json,tsv}} and e1-consistency.tsv to {}",
                cfg.experiment.out_dir.display()
            );
        }
        Command::RunE2(args) => {
            let cfg = load_config(&args)?;
            let report = run_e2::<f64>(&cfg)?;
            print!("{}", report.to_tsv());
            eprintln!(
                "wrote e2-report.{{json,tsv}} to {}",
                cfg.experiment.out_dir.display()
            );
        }
        Command::RunE3(args) => {
            let cfg = load_config(&args)?;
            let report = run_e3::<f64>(&cfg)?;
            print!("{}", report.matrix.to_tsv());
            eprintln!(
                "wrote e3-matrix.{{json,tsv}} to {}",
                cfg.experiment.out_dir.display()
            );
        }
        Command::Serve(args) => {
            let mut backend = StubBackend::with_flavor(args.flavor.as_deref());
            let stdin = std::io::stdin();
            let stdout = std::io::stdout();
            serve::<f64>(&mut backend, stdin.lock(), stdout.lock())?;
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> i32 {
    match err.class() {
        ErrorClass::Config => 2,
        ErrorClass::Backend => 3,
        ErrorClass::Data => 4,
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = dispatch(cli) {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
