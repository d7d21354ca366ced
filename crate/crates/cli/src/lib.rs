//! Command-line front end for the `kac` crate: experiment sweeps, the
//! gradient check suite, activation-map export and parameter counts.

pub mod commands;
pub mod config;
pub mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "kac", version, about = "Continual-learning classifier head experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every (head, seed) cell of an experiment config.
    Run {
        config: PathBuf,
        /// Write outputs here instead of the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference gradients for every head kind.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        #[arg(long, hide = true)]
        corrupt: bool,
    },
    /// Write a KAC checkpoint's activation map as `class,channel,score` CSV.
    ExportActivations { checkpoint: PathBuf, out: PathBuf },
    /// Print the KAC head parameter count for the given sizes.
    ParamCount {
        #[arg(long, default_value_t = 768)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        basis: usize,
        #[arg(long, default_value_t = 100)]
        classes: usize,
    },
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match cli.command {
        Command::Run { config, out } => commands::cmd_run(&config, out.as_deref()),
        Command::Gradcheck { seed, trials, corrupt } => commands::cmd_gradcheck(seed, trials, corrupt),
        Command::ExportActivations { checkpoint, out } => commands::cmd_export_activations(&checkpoint, &out),
        Command::ParamCount { n, basis, classes } => {
            print!("{}", commands::param_count_report(n, basis, classes));
            commands::EXIT_OK
        }
    }
}
