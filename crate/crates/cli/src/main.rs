use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cnndistill_cli::{
    cmd_analyze, cmd_distill, cmd_report, cmd_synth, cmd_train, CliError, CliResult, DatasetSpec, Overrides, RunConfig,
    Sweep,
};
use cnndistill_core::tree::TargetMode;

/// Train the fixed CNN, distill it into a budgeted decision tree, and emit
/// the comparison table, densities and correlation matrices.
#[derive(Parser)]
#[command(name = "cnndistill", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split, train and evaluate the network.
    Train(RunArgs),
    /// Extract features, grow the tree and write the report.
    Distill {
        #[command(flatten)]
        run: RunArgs,
        /// Checkpoint to load; defaults to the run directory's model.ckpt.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Extra budgets, e.g. `--sweep depth=2..6 leaves=3..9`.
        #[arg(long, num_args = 1..)]
        sweep: Option<Vec<String>>,
    },
    /// Correlation matrix and densities for an existing feature CSV.
    Analyze {
        #[arg(long)]
        features: PathBuf,
        /// Output directory; defaults to `analysis_<stem>` beside the CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Collect every report.json under a directory into one table.
    Report {
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Write a synthetic dataset as a MedMNIST-style archive.
    Synth {
        /// `synth:KxM` or `KxM`: K classes with M samples each.
        #[arg(long)]
        spec: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// NPZ path or `synth:KxM`.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    leaves: Option<usize>,
    /// `labels` or `cnn`.
    #[arg(long)]
    target: Option<String>,
}

impl RunArgs {
    fn resolve(&self) -> CliResult<RunConfig> {
        let overrides = Overrides {
            dataset: self.dataset.as_deref().map(str::parse).transpose()?,
            seed: self.seed,
            out: self.out.clone(),
            depth: self.depth,
            leaves: self.leaves,
            target: self
                .target
                .as_deref()
                .map(|t| t.parse::<TargetMode>().map_err(|e| CliError::Config(e.to_string())))
                .transpose()?,
        };
        RunConfig::load(self.config.as_deref(), &overrides)
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train(args) => {
            let config = args.resolve()?;
            let summary = cmd_train(&config)?;
            println!("test accuracy {:.4} -> {}", summary.test_accuracy, config.run_dir().display());
        }
        Command::Distill { run, checkpoint, sweep } => {
            let config = run.resolve()?;
            let sweep = sweep.map(|terms| Sweep::parse(&terms, &config.tree)).transpose()?;
            let outcome = cmd_distill(&config, checkpoint.as_deref(), sweep.as_ref())?;
            println!("{}", cnndistill_core::analysis::TABLE_HEADER);
            println!("{}", outcome.report.table_row());
            for r in &outcome.sweep {
                println!("{}", r.table_row());
            }
        }
        Command::Analyze { features, out } => {
            let out = out.unwrap_or_else(|| {
                let stem = features.file_stem().map_or_else(|| "features".into(), |s| s.to_string_lossy().into_owned());
                features.with_file_name(format!("analysis_{stem}"))
            });
            cmd_analyze(&features, &out)?;
            println!("{}", out.display());
        }
        Command::Report { out } => {
            let (path, table) = cmd_report(&out)?;
            print!("{table}");
            eprintln!("wrote {}", path.display());
        }
        Command::Synth { spec, seed, output } => {
            let spec = if spec.starts_with("synth:") { spec } else { format!("synth:{spec}") };
            let spec: DatasetSpec = spec.parse()?;
            let data = cmd_synth(&spec, seed, &output)?;
            println!("{} samples -> {}", data.len(), output.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
