//! Config-driven experiment runner.
//!
//! Exit codes: 0 success, 1 config error (bad flags, bad config file,
//! incompatible model/dataset), 2 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pqdl::config::load_experiment;
use pqdl::runner;

#[derive(Parser)]
#[command(
    name = "pqdl",
    about = "Prequential description-length experiments for small classifiers",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to $PQDL_OUT or ./pqdl-out.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for independent (model, seed, prefix) tasks.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Added to every seed in the config.
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep learning rates and train each model on the full pool.
    Train(Common),
    /// Generalization profiles over training-set size.
    Profile(Common),
    /// Prequential description lengths and the evidence table.
    Mdl(Common),
    /// Compress the dataset's labels into a .pqdl message.
    Encode(Common),
    /// Reconstruct labels from a .pqdl message and the dataset's inputs.
    Decode {
        #[command(flatten)]
        common: Common,
        /// Path to the encoded message.
        #[arg(long)]
        message: PathBuf,
    },
    /// Pairwise bootstrap signal-to-noise ratios per prefix size.
    Snr(Common),
    /// Profile an MLP family over hidden-layer widths.
    WidthSweep(Common),
}

fn out_dir(common: &Common) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| std::env::var_os("PQDL_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("pqdl-out"))
}

fn run() -> pqdl::Result<Vec<PathBuf>> {
    let cli = Cli::parse();
    let (common, message) = match &cli.command {
        Command::Train(c)
        | Command::Profile(c)
        | Command::Mdl(c)
        | Command::Encode(c)
        | Command::Snr(c)
        | Command::WidthSweep(c) => (c, None),
        Command::Decode { common, message } => (common, Some(message.clone())),
    };
    let exp = load_experiment(&common.config, common.seed_offset)?;
    let out = out_dir(common);
    match &cli.command {
        Command::Train(_) => runner::cmd_train(&exp, &out, common.jobs),
        Command::Profile(_) => runner::cmd_profile(&exp, &out, common.jobs),
        Command::Mdl(_) => runner::cmd_mdl(&exp, &out, common.jobs),
        Command::Encode(_) => runner::cmd_encode(&exp, &out, common.jobs),
        Command::Decode { .. } => {
            runner::cmd_decode(&exp, &message.expect("flag is required"), &out, common.jobs)
        }
        Command::Snr(_) => runner::cmd_snr(&exp, &out, common.jobs),
        Command::WidthSweep(_) => runner::cmd_width_sweep(&exp, &out, common.jobs),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(written) => {
            for path in written {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
