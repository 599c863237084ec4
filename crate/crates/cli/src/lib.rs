//! Command-line front end: synthetic data generation, fitting, explanation,
//! evaluation, coefficient reports, prediction and the mask-grid experiment.

pub mod args;
pub mod commands;
pub mod error;
pub mod experiment;
pub mod fsio;

pub use args::{Cli, Command};
pub use error::{CliError, CliResult};

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Synth(a) => commands::cmd_synth(a),
        Command::Fit(a) => commands::cmd_fit(a),
        Command::Explain(a) => commands::cmd_explain(a),
        Command::Evaluate(a) => commands::cmd_evaluate(a),
        Command::Report(a) => commands::cmd_report(a),
        Command::Predict(a) => commands::cmd_predict(a),
        Command::Experiment(a) => experiment::cmd_experiment(a),
    }
}
