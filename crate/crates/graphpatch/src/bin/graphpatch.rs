//! Thin CLI over the library's command layer: parse, dispatch, exit.

use clap::{Parser, Subcommand};

use graphpatch::commands::{
    cmd_evaluate, cmd_gen_synth, cmd_train_gnn, cmd_train_patcher, cmd_variance_study,
    EvaluateArgs, GenSynthArgs, TrainGnnArgs, TrainPatcherArgs, VarianceStudyArgs,
};

#[derive(Parser)]
#[command(
    name = "graphpatch",
    version,
    about = "Train a small GCN, then patch low-degree nodes at test time with generated virtual neighbors."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a degree-skewed synthetic dataset directory.
    GenSynth(GenSynthArgs),
    /// Train the 2-layer GCN classifier on a dataset.
    TrainGnn(TrainGnnArgs),
    /// Train the patch generator against a frozen classifier.
    TrainPatcher(TrainPatcherArgs),
    /// Score test nodes before and after patching, stratified by degree.
    Evaluate(EvaluateArgs),
    /// Measure how the patch-step loss spread shrinks with more target samples.
    VarianceStudy(VarianceStudyArgs),
}

fn main() {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::GenSynth(args) => cmd_gen_synth(args),
        Command::TrainGnn(args) => cmd_train_gnn(args),
        Command::TrainPatcher(args) => cmd_train_patcher(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::VarianceStudy(args) => cmd_variance_study(args),
    };
    std::process::exit(code);
}
