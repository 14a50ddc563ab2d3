use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod run_config;

#[derive(Parser, Debug)]
#[command(
    name = "synopsis-cli",
    version,
    about = "Generate corpora, train, infer and evaluate video text synopses"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic corpus directory.
    Synth(SynthArgs),
    /// Pretrain the captioner, then jointly train the scoring networks.
    Train(TrainArgs),
    /// Score videos and write their synopses.
    Infer(InferArgs),
    /// Score synopses against reference documents.
    Eval(EvalArgs),
    /// Print corpus statistics as JSON.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Generator spec (JSON). Defaults to the built-in desk-scale corpus.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Training config (JSON); flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub disable_vlcmu: bool,
    #[arg(long)]
    pub disable_eta_loss: bool,
    #[arg(long)]
    pub disable_purport: bool,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Video to summarise; repeat for several. Defaults to every video.
    #[arg(long = "video")]
    pub videos: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub passes: usize,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Output directory of `infer`.
    #[arg(long)]
    pub synopses: PathBuf,
    /// Reference file (`references.jsonl`).
    #[arg(long)]
    pub references: PathBuf,
    /// Also write the report here; it always goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(long)]
    pub corpus: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Train(a) => commands::train(&a),
        Command::Infer(a) => commands::infer(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Inspect(a) => commands::inspect(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
