use clap::{error::ErrorKind, Parser, Subcommand};
use lf_cli::commands::{audit, bench, eval, reconstruct, synth, train};

/// Light field view synthesis toolkit: train, reconstruct, evaluate,
/// audit, and benchmark separable spatio-angular networks.
#[derive(Parser, Debug)]
#[command(name = "lfrecon", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model on a scene dataset.
    Train(train::TrainArgs),
    /// Reconstruct the dense view grid of a sparse scene.
    Reconstruct(reconstruct::ReconstructArgs),
    /// Compare a reconstruction against ground truth.
    Eval(eval::EvalArgs),
    /// Parameter and MAC ledgers, sweeps, and toggle deltas.
    Audit(audit::AuditArgs),
    /// Timed forward passes with MAC accounting.
    Bench(bench::BenchArgs),
    /// Generate a constant-disparity synthetic scene.
    MakeSynthetic(synth::SynthArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match &cli.command {
        Command::Train(args) => train::execute(args),
        Command::Reconstruct(args) => reconstruct::execute(args),
        Command::Eval(args) => eval::execute(args),
        Command::Audit(args) => audit::execute(args),
        Command::Bench(args) => bench::execute(args),
        Command::MakeSynthetic(args) => synth::execute(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
