//! `amn`: data generation, training, prediction, evaluation, ablations and
//! plots from one binary.

pub mod commands;
pub mod config;
pub mod plot;

use std::path::PathBuf;

use clap::{Arg, ArgMatches, Args, Command, FromArgMatches, Parser, Subcommand};

pub use config::{usage, RunConfig, UsageError, KEYS};

#[derive(Debug, Parser)]
#[command(
    name = "amn",
    version,
    about = "Weakly supervised sound event detection with affinity mixup"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Synthesize a labelled soundscape dataset.
    Gendata(commands::GendataArgs),
    /// Train a model on a dataset's train split.
    Train(commands::TrainArgs),
    /// Run a checkpoint over audio files or a dataset split.
    Predict(commands::PredictArgs),
    /// Score a prediction directory against a dataset's annotations.
    Evaluate(commands::EvaluateArgs),
    /// Train and score every row of an ablation study over several seeds.
    Ablate(commands::AblateArgs),
    /// Render a history or study CSV as an SVG chart.
    Plot(commands::PlotArgs),
}

/// `--config PATH` plus one `--<key> VALUE` flag per configuration key.
#[derive(Debug, Clone, Default)]
pub struct ConfigArgs {
    pub config: Option<PathBuf>,
    pub pairs: Vec<(String, String)>,
}

impl ConfigArgs {
    /// Defaults, then the file, then the flags.
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        RunConfig::load(self.config.as_deref(), &self.pairs)
    }
}

impl FromArgMatches for ConfigArgs {
    fn from_arg_matches(m: &ArgMatches) -> Result<Self, clap::Error> {
        let mut out = Self::default();
        out.update_from_arg_matches(m)?;
        Ok(out)
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> Result<(), clap::Error> {
        if let Some(p) = m.get_one::<PathBuf>("config") {
            self.config = Some(p.clone());
        }
        for (k, _) in KEYS {
            if let Some(v) = m.get_one::<String>(k) {
                self.pairs.retain(|(key, _)| key != k);
                self.pairs.push((k.to_string(), v.clone()));
            }
        }
        Ok(())
    }
}

impl Args for ConfigArgs {
    fn augment_args(cmd: Command) -> Command {
        let cmd = cmd.arg(
            Arg::new("config")
                .long("config")
                .value_name("PATH")
                .value_parser(clap::value_parser!(PathBuf))
                .help("key = value configuration file; flags override it"),
        );
        KEYS.iter().fold(cmd, |cmd, (k, help)| {
            cmd.arg(
                Arg::new(*k)
                    .long(*k)
                    .value_name("VALUE")
                    .help(*help)
                    .help_heading("Configuration"),
            )
        })
    }

    fn augment_args_for_update(cmd: Command) -> Command {
        Self::augment_args(cmd)
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Cmd::Gendata(a) => commands::gendata(&a),
        Cmd::Train(a) => commands::train(&a),
        Cmd::Predict(a) => commands::predict(&a),
        Cmd::Evaluate(a) => commands::evaluate(&a),
        Cmd::Ablate(a) => commands::ablate(&a),
        Cmd::Plot(a) => commands::plot(&a),
    }
}
