//! Command-line parsing and dispatch.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use errp_core::eval::Method;

use crate::commands::{self, Analysis};
use crate::config::Config;
use crate::container;
use crate::erp;
use crate::error::{CliError, Result};
use crate::runner;

#[derive(Debug, Parser)]
#[command(name = "errp", version, about = "Error-related potential decoding from epoch containers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON config file; missing keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Config override, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core. Output does not depend on it.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Clone, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Report file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV of per-fold accuracies.
    #[arg(long, value_name = "PATH")]
    pub emit_accuracy: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Riemann,
    Benchmark,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Riemann => Method::Riemann,
            MethodArg::Benchmark => Method::Benchmark,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic epoch container (or continuous recording).
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Write a continuous recording with events instead of epochs.
        #[arg(long)]
        continuous: bool,
    },
    /// Filter, re-reference, epoch and downsample a continuous recording.
    Preprocess {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate one method on one container.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        cv: CvArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
    },
    /// Cross-validate both methods on one or more containers.
    Compare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        cv: CvArgs,
        /// Container directory; repeat for several participants.
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
        /// Include a label-shuffle chance level per container.
        #[arg(long)]
        chance: bool,
        /// CSV of class-average ERPs and difference waves.
        #[arg(long, value_name = "PATH")]
        emit_erp: Option<PathBuf>,
    },
    /// Label-shuffle chance level of one container.
    Chance {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        cv: CvArgs,
        #[arg(long)]
        input: PathBuf,
    },
    /// Check a container against every format invariant.
    Validate {
        #[arg(long)]
        input: PathBuf,
    },
}

fn load_config(common: &Common, cv: Option<&CvArgs>) -> Result<Config> {
    let mut overrides = common.set.clone();
    if let Some(s) = common.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(cv) = cv {
        if let Some(k) = cv.folds {
            overrides.push(format!("folds={k}"));
        }
        if let Some(r) = cv.repeats {
            overrides.push(format!("repeats={r}"));
        }
    }
    Config::load(common.config.as_deref(), &overrides)
}

fn report_command(
    name: &str,
    common: &Common,
    cv: &CvArgs,
    inputs: &[PathBuf],
    analysis: Analysis,
    emit_erp: Option<&PathBuf>,
) -> Result<()> {
    let cfg = load_config(common, Some(cv))?;
    let datasets = commands::load_inputs(inputs)?;
    if let Some(p) = emit_erp {
        commands::emit_erp(p, &datasets)?;
    }
    let pool = runner::pool(common.threads)?;
    let report = commands::analyze(&pool, &cfg, name, &datasets, &analysis)?;
    commands::write_report(&report, cv.out.as_deref())?;
    if let Some(p) = &cv.emit_accuracy {
        erp::write_accuracy_csv(p, &report)?;
    }
    Ok(())
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, out, continuous } => commands::cmd_synth(&load_config(&common, None)?, &out, continuous),
        Command::Preprocess { common, input, out } => commands::cmd_preprocess(&load_config(&common, None)?, &input, &out).map(|_| ()),
        Command::Run { common, cv, input, method } => report_command("run", &common, &cv, &[input], Analysis::Run(method.into()), None),
        Command::Compare { common, cv, input, chance, emit_erp } => {
            report_command("compare", &common, &cv, &input, Analysis::Compare { chance }, emit_erp.as_ref())
        }
        Command::Chance { common, cv, input } => report_command("chance", &common, &cv, &[input], Analysis::Chance, None),
        Command::Validate { input } => {
            let diags = container::validate(&input);
            if diags.is_empty() {
                println!("ok");
                Ok(())
            } else {
                for d in &diags {
                    println!("{d}");
                }
                Err(CliError::input(format!("{}: {} violation(s)", input.display(), diags.len())))
            }
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
