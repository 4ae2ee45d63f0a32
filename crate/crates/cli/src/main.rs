use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sessionrank::config::RunConfig;
use sessionrank::eval::{Gain, Method};
use sessionrank::sie::ReprItem;
use sessionrank::Error;

mod commands;

#[derive(Debug, Parser)]
#[command(name = "sessionrank", version, about = "Session-aware product re-ranking: S-IE pre-training and list-wise fine-tuning")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Config file (`key=value` lines, or JSON).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Worker threads for evaluation and ablation (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub use_user_embedding: bool,
    /// Item segment used when extracting session vectors for ranking.
    #[arg(long, global = true, value_name = "zero|mean-of-shown")]
    pub repr_item: Option<ReprItem>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    Sie,
    Rank,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic event log and print its statistics.
    GenSynthetic {
        /// Output path (defaults to the `events` key).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and sessionize an event log and print dataset statistics.
    Ingest {
        #[arg(long)]
        events: Option<PathBuf>,
        /// Print statistics as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Train the S-IE model, the ranking model, or both.
    Train {
        #[arg(long, value_enum, default_value = "both")]
        stage: Stage,
    },
    /// Score methods on the test split; optionally run the behavior ablation.
    Evaluate {
        #[arg(long, value_delimiter = ',', default_value = "popularity,sie,listrank")]
        methods: Vec<Method>,
        #[arg(long)]
        ablation: bool,
        #[arg(long)]
        gain: Option<Gain>,
    },
    /// Emit ranked lists as TSV: query id, then item ids in rank order.
    Rank {
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic gradients with finite differences on random small models.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = sessionrank::checks::GRADCHECK_EPSILON)]
        epsilon: f64,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => 1,
        Error::Data(_) | Error::Io(_) | Error::Json(_) | Error::MissingModel(_) => 2,
        Error::Numerical(_) | Error::Dimension(_) => 3,
    }
}

fn help_footer() -> String {
    let mut s = String::from("Config keys (defaults):\n");
    for (k, v) in RunConfig::default_entries() {
        s.push_str(&format!("  {k}={v}\n"));
    }
    s.push_str("\nSESSIONRANK_SEED overrides `seed`. Exit codes: 0 ok, 1 usage, 2 data error, 3 numerical failure.");
    s
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cmd = <Cli as clap::CommandFactory>::command().after_help(help_footer());
    let cli = match cmd.try_get_matches().and_then(|m| <Cli as clap::FromArgMatches>::from_arg_matches(&m)) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
