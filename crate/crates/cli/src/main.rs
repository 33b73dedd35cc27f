//! Command line front end. Exit codes: 0 on success, 1 on usage
//! errors (bad flags, missing or malformed config values), 2 on
//! runtime failures.

mod artifacts;
mod cmd;
mod config;
mod error;

use std::process::ExitCode;

use clap::Parser;

use error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "cadenza",
    version,
    about = "Zero-shot editing for a desk-scale latent diffusion model",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Subcommand, Debug)]
enum Command {
    /// Train the toy denoiser and save a checkpoint.
    #[command(name = "train-toy")]
    TrainToy(cmd::train::TrainArgs),
    /// Sample a clip from noise under a text prompt.
    Generate(cmd::generate::GenerateArgs),
    /// Generate under a source prompt and re-generate under the
    /// shifted embedding.
    Edit(cmd::edit::EditArgs),
    /// Invert an existing clip, then edit from the estimated latent.
    #[command(name = "invert-edit")]
    InvertEdit(cmd::invert::InvertArgs),
    /// Estimate an embedding-space editing direction.
    Delta(cmd::delta::DeltaArgs),
    /// Run the ablation benchmark on a trained checkpoint.
    Bench(cmd::bench::BenchArgs),
    /// Score an original/edited clip pair.
    Eval(cmd::eval::EvalArgs),
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::TrainToy(args) => cmd::train::run(args),
        Command::Generate(args) => cmd::generate::run(args),
        Command::Edit(args) => cmd::edit::run(args),
        Command::InvertEdit(args) => cmd::invert::run(args),
        Command::Delta(args) => cmd::delta::run(args),
        Command::Bench(args) => cmd::bench::run(args),
        Command::Eval(args) => cmd::eval::run(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let ok = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return if ok { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
