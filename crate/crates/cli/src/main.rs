mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Failure classes with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, configuration or input files (exit 2).
    Usage(String),
    /// Numeric or I/O failure while running (exit 1).
    Runtime(String),
}

impl From<rmn::Error> for CliError {
    fn from(e: rmn::Error) -> Self {
        match e {
            rmn::Error::Numeric(_) | rmn::Error::Consistency(_) | rmn::Error::Io(_) => {
                CliError::Runtime(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "rmn", version, about = "Residual memory network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Task {
    DelayedRecall,
    FutureRecall,
    Parity,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus archive.
    Gen {
        task: Task,
        #[arg(long)]
        out: std::path::PathBuf,
        /// Symbol count for the recall tasks.
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 6)]
        delay: usize,
        /// Parity window.
        #[arg(long, default_value_t = 3)]
        window: usize,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long, default_value_t = 2000)]
        utts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train from a `key = value` config; `--key value` pairs override it.
    Train {
        config: std::path::PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Print `ce=<v> fer=<v>` for a checkpoint on a labelled corpus.
    Eval {
        checkpoint: std::path::PathBuf,
        corpus: std::path::PathBuf,
        /// Chunked evaluation: CHUNK frames at a time with LOOKAHEAD future frames.
        #[arg(long, num_args = 2, value_names = ["CHUNK", "LOOKAHEAD"])]
        stream: Option<Vec<usize>>,
        /// Frames with this label are not scored.
        #[arg(long)]
        exclude_class: Option<usize>,
    },
    /// Compare backpropagated and finite-difference gradients of a tiny model.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "uni")]
        direction: rmn::model::Direction,
        #[arg(long, default_value = "diagonal")]
        form: rmn::model::SharedWeightForm,
        /// Residual interval, or `none`.
        #[arg(long, default_value = "2")]
        residual: String,
        #[arg(long, default_value_t = 3)]
        layers: usize,
        #[arg(long, default_value_t = 7)]
        frames: usize,
        /// Perturb one analytic gradient entry (negative control).
        #[arg(long)]
        corrupt: bool,
    },
    /// Print the parameter count of a configuration.
    Params {
        /// Optional config file followed by `--key value` overrides;
        /// `--compare-lstmp` adds the LSTMP comparison.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        args: Vec<String>,
    },
    /// Train one model per layer count and write the best validation FER.
    Sweep {
        config: std::path::PathBuf,
        /// Comma-separated layer counts, e.g. `2,4,6,8`.
        #[arg(long)]
        layers: String,
        #[arg(long)]
        no_delay: bool,
        /// Output CSV (default: `<out_dir>/sweep.csv`).
        #[arg(long)]
        out: Option<std::path::PathBuf>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen {
            task,
            out,
            classes,
            delay,
            window,
            frames,
            utts,
            seed,
        } => commands::gen(task, &out, classes, delay, window, frames, utts, seed),
        Command::Train { config, overrides } => commands::train(&config, &overrides),
        Command::Eval {
            checkpoint,
            corpus,
            stream,
            exclude_class,
        } => commands::eval(&checkpoint, &corpus, stream.map(|v| (v[0], v[1])), exclude_class),
        Command::Gradcheck {
            seed,
            direction,
            form,
            residual,
            layers,
            frames,
            corrupt,
        } => commands::gradcheck(seed, direction, form, &residual, layers, frames, corrupt),
        Command::Params { args } => commands::params(&args),
        Command::Sweep {
            config,
            layers,
            no_delay,
            out,
            overrides,
        } => commands::sweep(&config, &layers, no_delay, out.as_deref(), &overrides),
    };
    match result {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
