use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use veritas_cli::commands::{self, Subset, CHECKPOINT_FILE};
use veritas_cli::{CliError, RunConfig};

/// Fake-news text classifier: TF-IDF, BiGRU and transformer encoder with an
/// optional variational head.
#[derive(Debug, Parser)]
#[command(name = "veritas", version)]
struct Cli {
    /// Flat `section.key = value` config file, or a previous run.json.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Seed for the split, initialization and shuffling (overrides
    /// `split.seed` and `train.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `key=value` override, applied after the config file. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SubsetArg {
    All,
    Train,
    Test,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write curves, confusion matrices and checkpoints.
    Train,
    /// Score a dataset with a checkpoint.
    Evaluate {
        /// Defaults to `<out-dir>/model.bft`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Dataset CSV (overrides `data.path`).
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Score only one side of the checkpoint's split.
        #[arg(long, value_enum, default_value = "all")]
        subset: SubsetArg,
    },
    /// Classify texts given inline or one per line in a file.
    Predict {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, required_unless_present = "file")]
        text: Vec<String>,
        #[arg(long, conflicts_with = "text")]
        file: Option<PathBuf>,
    },
    /// Dump TF-IDF vectors of a dataset.
    Vectorize {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Use an exported vocabulary instead of fitting one.
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for pair in &cli.overrides {
        cfg.set_pair(pair)?;
    }
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
        cfg.train.split.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = resolve_config(&cli)?;
    let checkpoint_or_default =
        |c: &Option<PathBuf>, cfg: &RunConfig| c.clone().unwrap_or_else(|| cfg.out_dir.join(CHECKPOINT_FILE));
    match cli.command {
        Command::Train => {
            let report = commands::train(&cfg)?;
            println!("train accuracy\t{}", report.train_accuracy);
            println!("test accuracy\t{}", report.test_accuracy);
            println!("outputs\t{}", report.out_dir.display());
        }
        Command::Evaluate {
            checkpoint,
            dataset,
            subset,
        } => {
            if dataset.is_some() {
                cfg.data.path = dataset;
            }
            let subset = match subset {
                SubsetArg::All => Subset::All,
                SubsetArg::Train => Subset::Train,
                SubsetArg::Test => Subset::Test,
            };
            let ck = checkpoint_or_default(&checkpoint, &cfg);
            let report = commands::evaluate(&cfg, &ck, subset)?;
            let c = report.confusion.counts;
            println!("records\t{}", report.records);
            println!("accuracy\t{}", report.accuracy);
            println!("true\\pred\tReal\tFake");
            println!("Real\t{}\t{}", c[0][0], c[0][1]);
            println!("Fake\t{}\t{}", c[1][0], c[1][1]);
        }
        Command::Predict { checkpoint, text, file } => {
            let texts = match file {
                Some(path) => std::fs::read_to_string(&path)
                    .map_err(|e| CliError::io(&path, e))?
                    .lines()
                    .filter(|l| !l.trim().is_empty())
                    .map(String::from)
                    .collect(),
                None => text,
            };
            let ck = checkpoint_or_default(&checkpoint, &cfg);
            for p in commands::predict(&ck, &texts)? {
                println!("{}\t{:.6}", p.label, p.probability);
            }
        }
        Command::Vectorize { dataset, vocab } => {
            if dataset.is_some() {
                cfg.data.path = dataset;
            }
            let path = commands::vectorize(&cfg, vocab.as_deref())?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VERITAS_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
