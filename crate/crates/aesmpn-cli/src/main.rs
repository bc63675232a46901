//! `aesmpn` — train and run the AE-SMPN network delay model.
//!
//! Subcommands: `gen` (synthetic datasets), `train`, `eval`, `predict`,
//! `gradcheck`. Exit codes: 0 success, 1 usage/validation errors,
//! 2 runtime/numeric errors. No environment variables are consulted;
//! every run is a function of its flags and seeds.

mod commands;
mod manifest;

use clap::{Parser, Subcommand};

use commands::{EvalArgs, GenArgs, GradcheckArgs, PredictArgs, TrainArgs};

#[derive(Parser)]
#[command(name = "aesmpn", version, about = "AE-SMPN network delay model")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic queueing dataset
    Gen(GenArgs),
    /// Train one or all model variants
    Train(TrainArgs),
    /// Evaluate a checkpoint on its dataset splits
    Eval(EvalArgs),
    /// Emit per-flow delay predictions
    Predict(PredictArgs),
    /// Verify gradients against finite differences
    Gradcheck(GradcheckArgs),
}

fn exit_code(e: &aesmpn::Error) -> i32 {
    use aesmpn::Error;
    match e {
        Error::Config(_)
        | Error::Validation { .. }
        | Error::Parse { .. }
        | Error::Contract(_)
        | Error::CheckpointMismatch(_) => 1,
        _ => 2,
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };

    let result = match &cli.cmd {
        Command::Gen(args) => commands::cmd_gen(args),
        Command::Train(args) => commands::cmd_train(args),
        Command::Eval(args) => commands::cmd_eval(args),
        Command::Predict(args) => commands::cmd_predict(args),
        Command::Gradcheck(args) => commands::cmd_gradcheck(args),
    };

    match result {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}
