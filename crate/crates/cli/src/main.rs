//! `oligoicp` command-line tool.
//!
//! Exit codes: 0 success, 1 I/O or other failure, 2 usage error, 3 parse or
//! data error, 4 backend failure, 5 validation failure.

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use oligoicp_core::dataio::{DatasetFormat, Strictness};

use crate::error::exit;

#[derive(Debug, Parser)]
#[command(name = "oligoicp", version, about = "siRNA efficacy ensembles with IQR-based model selection")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. Where a config file is used they take
/// precedence over its values.
#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// `builtin`, `echo`, or `external:<command line>` / `external:tcp://host:port`.
    #[arg(long, global = true)]
    pub backend: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Abort on the first bad dataset row (default).
    #[arg(long, global = true, conflicts_with = "lenient")]
    pub strict: bool,
    /// Skip bad dataset rows and report them.
    #[arg(long, global = true)]
    pub lenient: bool,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

impl GlobalArgs {
    pub fn strictness(&self) -> Option<Strictness> {
        if self.lenient {
            Some(Strictness::Lenient)
        } else if self.strict {
            Some(Strictness::Strict)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Auto,
    Context,
    Transcript,
}

impl From<FormatArg> for DatasetFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Auto => Self::Auto,
            FormatArg::Context => Self::Context,
            FormatArg::Transcript => Self::Transcript,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NoiseArg {
    Homoscedastic,
    TwoRegime,
    PerTarget,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic dataset.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        targets: usize,
        #[arg(long, value_enum, default_value = "homoscedastic")]
        noise: NoiseArg,
        /// Noise level for the homoscedastic profile.
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        #[arg(long, default_value_t = 0.05)]
        sigma_low: f64,
        #[arg(long, default_value_t = 0.25)]
        sigma_high: f64,
        #[arg(long, default_value_t = 0.0)]
        sigma_min: f64,
        #[arg(long, default_value_t = 0.5)]
        sigma_max: f64,
        #[arg(long, default_value = "synthetic")]
        source_id: String,
        #[arg(short, long)]
        output: PathBuf,
        /// Also write the noise-free label, noise level and regime of each row.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Compute the feature matrix of a dataset.
    Featurize {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        format: FormatArg,
        /// Use -14.88 for the GC stacking enthalpy.
        #[arg(long)]
        rounded_gc_enthalpy: bool,
    },
    /// Run the subset-context ensemble experiment described by a config file.
    Ensemble {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Coverage curve and IQR-error analysis on a seeded train/test split.
    Calibrate {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// K-fold cross-validation of a single model on all data.
    Crossval {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// MAE and Pearson r of a prediction column against a truth column.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value = "prediction")]
        column: String,
        #[arg(long, default_value = "efficacy")]
        truth_column: String,
        /// Write the metrics here instead of standard output.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Answer wire-protocol requests with an in-process backend.
    Serve {
        /// Accept TCP connections here instead of using stdin/stdout.
        #[arg(long)]
        listen: Option<String>,
        #[arg(long, default_value_t = 64)]
        k_neighbors: usize,
        #[arg(long)]
        bandwidth: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE as u8 } else { exit::OK as u8 });
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let g = &cli.global;
    let result = match cli.command {
        Command::Synth {
            n,
            targets,
            noise,
            sigma,
            sigma_low,
            sigma_high,
            sigma_min,
            sigma_max,
            source_id,
            output,
            truth,
        } => {
            let profile = match noise {
                NoiseArg::Homoscedastic => oligoicp_core::dataio::NoiseProfile::Homoscedastic { sigma },
                NoiseArg::TwoRegime => oligoicp_core::dataio::NoiseProfile::TwoRegime { sigma_low, sigma_high },
                NoiseArg::PerTarget => oligoicp_core::dataio::NoiseProfile::PerTarget { sigma_min, sigma_max },
            };
            commands::synth::run(g, n, targets, profile, source_id, &output, truth.as_deref())
        }
        Command::Featurize {
            input,
            output,
            format,
            rounded_gc_enthalpy,
        } => commands::featurize::run(g, &input, &output, format.into(), rounded_gc_enthalpy),
        Command::Ensemble { config, output_dir } => commands::ensemble::run(g, &config, output_dir),
        Command::Calibrate { config, output_dir } => commands::calibrate::run(g, &config, output_dir),
        Command::Crossval { config, output_dir } => commands::crossval::run(g, &config, output_dir),
        Command::Evaluate {
            predictions,
            truth,
            column,
            truth_column,
            output,
        } => commands::evaluate::run(&predictions, &truth, &column, &truth_column, output.as_deref()),
        Command::Serve {
            listen,
            k_neighbors,
            bandwidth,
        } => commands::serve::run(g, listen.as_deref(), k_neighbors, bandwidth),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
