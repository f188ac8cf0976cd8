//! `jointfit`: fit, check and compare joint longitudinal and survival models.

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use error::CliError;

#[derive(Parser)]
#[command(name = "jointfit", version, about = "Joint models for longitudinal and time-to-event data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Input files and their column names.
#[derive(Args, Clone, Debug, Serialize)]
pub struct DataArgs {
    /// Long-format visits: id, time, response and covariates.
    #[arg(long)]
    pub long: Option<PathBuf>,
    /// One row per subject: id, time, status and covariates.
    #[arg(long)]
    pub surv: Option<PathBuf>,
    #[arg(long, default_value = "id")]
    pub id_col: String,
    /// Visit-time column; formulas refer to time by this name.
    #[arg(long, default_value = "time")]
    pub time_col: String,
    #[arg(long, default_value = "y")]
    pub y_col: String,
    #[arg(long, default_value = "time")]
    pub surv_time_col: String,
    #[arg(long, default_value = "status")]
    pub status_col: String,
}

#[derive(Args, Clone, Debug)]
pub struct OutArgs {
    /// Output directory, or `-` for the primary table on stdout.
    #[arg(long)]
    pub out: String,
    /// Overwrite files in an existing output directory.
    #[arg(long)]
    pub force: bool,
    /// Seed recorded in run.json; used by commands that draw random numbers.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (falls back to JOINTFIT_THREADS).
    #[arg(long, env = "JOINTFIT_THREADS")]
    pub threads: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
pub enum MethodArg {
    Reml,
    Ml,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
pub enum AssocArg {
    Value,
    ValueSlope,
    SharedRe,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
pub enum TransformArg {
    Identity,
    Rank,
    Km,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a linear mixed model.
    FitLmm {
        #[command(flatten)]
        data: DataArgs,
        /// Fixed-effects formula, e.g. `y ~ time + x`.
        #[arg(long)]
        fixed: Option<String>,
        /// Random-effects formula, e.g. `~ time`.
        #[arg(long)]
        random: Option<String>,
        #[arg(long, default_value = "id")]
        group: String,
        /// Model-spec JSON; its longitudinal part replaces --fixed/--random.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "reml")]
        method: MethodArg,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Fit a Cox proportional-hazards model.
    FitCox {
        #[command(flatten)]
        data: DataArgs,
        /// Right-hand side, e.g. `~ x + age`.
        #[arg(long)]
        formula: Option<String>,
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Covariate whose levels get separate baseline hazards.
        #[arg(long)]
        strata: Option<String>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Kaplan-Meier survivor curves.
    Km {
        #[command(flatten)]
        data: DataArgs,
        /// Covariate to split the curves by.
        #[arg(long)]
        group_by: Option<String>,
        /// Also write an SVG plot.
        #[arg(long)]
        svg: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Proportional-hazards test from scaled Schoenfeld residuals.
    Zph {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        formula: Option<String>,
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        strata: Option<String>,
        #[arg(long, value_enum, default_value = "identity")]
        transform: TransformArg,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Fit a joint model by MCMC.
    FitJoint {
        #[command(flatten)]
        data: DataArgs,
        /// Model-spec JSON.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        iter: Option<usize>,
        #[arg(long)]
        adapt: Option<usize>,
        #[arg(long)]
        burnin: Option<usize>,
        #[arg(long)]
        thin: Option<usize>,
        #[arg(long, value_enum)]
        assoc: Option<AssocArg>,
        /// Baseline covariate interacting with the value association.
        #[arg(long)]
        transform_covariate: Option<String>,
        /// Also write SVG trace and density plots.
        #[arg(long)]
        svg: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Compare fitted joint models by DIC and LPML.
    Compare {
        /// Output directories of fit-joint runs on the same data.
        #[arg(required = true, num_args = 2..)]
        fits: Vec<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Simulate a dataset from a generator JSON.
    Simulate {
        /// Generator JSON.
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Trace, autocorrelation, density and ESS of saved chains.
    Diagnose {
        /// Output directory of a fit-joint run.
        fit: PathBuf,
        /// Comma-separated parameter names (default: all).
        #[arg(long, value_delimiter = ',')]
        params: Vec<String>,
        #[arg(long, default_value_t = 30)]
        max_lag: usize,
        #[arg(long)]
        svg: bool,
        #[command(flatten)]
        out: OutArgs,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::FitLmm {
            data,
            fixed,
            random,
            group,
            spec,
            method,
            out,
        } => commands::fit_lmm(&data, fixed, random, group, spec, method, &out),
        Command::FitCox {
            data,
            formula,
            spec,
            strata,
            out,
        } => commands::fit_cox(&data, formula, spec, strata, &out),
        Command::Km {
            data,
            group_by,
            svg,
            out,
        } => commands::km(&data, group_by, svg, &out),
        Command::Zph {
            data,
            formula,
            spec,
            strata,
            transform,
            out,
        } => commands::zph(&data, formula, spec, strata, transform, &out),
        Command::FitJoint {
            data,
            spec,
            iter,
            adapt,
            burnin,
            thin,
            assoc,
            transform_covariate,
            svg,
            out,
        } => {
            let overrides = commands::JointOverrides {
                iter,
                adapt,
                burnin,
                thin,
                assoc,
                transform_covariate,
            };
            commands::fit_joint(&data, &spec, overrides, svg, &out)
        }
        Command::Compare { fits, data, out } => commands::compare(&fits, &data, &out),
        Command::Simulate { spec, out } => commands::simulate(&spec, &out),
        Command::Diagnose {
            fit,
            params,
            max_lag,
            svg,
            out,
        } => commands::diagnose(&fit, &params, max_lag, svg, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = match e.kind() {
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => "missing subcommand or argument",
                _ => text.lines().next().unwrap_or("").trim_start_matches("error: "),
            };
            eprintln!("{}", CliError::Usage(first.to_string()));
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
