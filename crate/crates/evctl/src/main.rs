// SPDX-License-Identifier: MIT OR Apache-2.0

//! `evctl`: extraction, steering, theory checks and evaluation from the shell.
//!
//! Exit codes: 0 success, 1 invalid input, 2 runtime failure, 3 a theorem
//! check failed.

mod bank;
mod commands;
mod eval;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evsteer_core::par::{with_jobs, Exec};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "evctl", version, about = "Emotion-vector extraction, steering, verification and evaluation")]
struct Cli {
    /// Worker threads for per-record work; 1 runs serially.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the desk toy model to an NFMT file.
    InitModel(InitModelArgs),
    /// Write a planted synthetic corpus as JSONL.
    GenCorpus(GenCorpusArgs),
    /// Extract emotion vectors from a corpus.
    Extract(ExtractArgs),
    /// Generate text with and without a steering blend.
    Steer(SteerArgs),
    /// Run the first-order theory checks; exits 3 if any fails.
    Verify(VerifyArgs),
    /// Score steered generations with EPS, TEC, PPL and judge metrics.
    Eval(EvalArgs),
    /// Norms, cosine table and PCA coordinates of emotion vectors.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Args, Serialize)]
pub struct InitModelArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Plain random weights instead of the planted marker structure.
    #[arg(long)]
    pub random: bool,
}

#[derive(Args, Serialize)]
pub struct GenCorpusArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub per_emotion: usize,
    #[arg(long, default_value_t = 150)]
    pub neutral: usize,
}

#[derive(Args, Serialize)]
pub struct CorpusArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Require the 5×50 emotional + 150 neutral composition.
    #[arg(long)]
    pub strict_eqplus: bool,
}

#[derive(Args, Serialize)]
pub struct ExtractArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// One emotion, or `all` for a set directory with every basic emotion.
    #[arg(long, default_value = "all")]
    pub emotion: String,
    /// EVEC file, or a directory when extracting `all`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct SteerArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// EVEC files or set directories.
    #[arg(long, required = true)]
    pub ev: Vec<PathBuf>,
    /// Terms `label:α` separated by commas; `base` is the mean vector.
    #[arg(long, allow_hyphen_values = true)]
    pub blend: String,
    #[arg(long)]
    pub prompt: String,
    #[arg(long, default_value_t = 24)]
    pub max_new: usize,
    /// Only steer these layers, e.g. `0,2`.
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<usize>>,
    /// Leave prompt positions unsteered.
    #[arg(long)]
    pub generation_only: bool,
    /// Also write the JSON result here, with a manifest sidecar.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long, required_unless_present = "linear_stub")]
    pub model: Option<PathBuf>,
    #[arg(long, required_unless_present = "linear_stub")]
    pub ev: Vec<PathBuf>,
    /// Vector under test.
    #[arg(long, default_value = "joy")]
    pub emotion: String,
    /// Second vector for the additivity check.
    #[arg(long, default_value = "anger")]
    pub other: String,
    /// Evaluation text; defaults to the first corpus query of `--emotion`.
    #[arg(long)]
    pub prompt: Option<String>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// First-order grid; each value must halve the previous one.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub alpha: Option<Vec<f64>>,
    /// Frozen remainder constant for the semantic check; measured if absent.
    #[arg(long)]
    pub curvature: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run on an exactly linear stand-in instead of a model.
    #[arg(long)]
    pub linear_stub: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricArg {
    Eps,
    Tec,
    Ppl,
    Eas,
    TopicAdherence,
}

#[derive(Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, required = true)]
    pub ev: Vec<PathBuf>,
    /// Steering vector for EPS, PPL and judge metrics.
    #[arg(long, default_value = "base")]
    pub emotion: String,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "-1,0,1")]
    pub alpha: Vec<f64>,
    /// Intensity columns of the TEC matrices.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "0,1,2,4")]
    pub tec_alpha: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "eps,tec,ppl")]
    pub metrics: Vec<MetricArg>,
    #[arg(long, default_value_t = 16)]
    pub max_new: usize,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct InspectArgs {
    #[arg(long, required = true)]
    pub ev: Vec<PathBuf>,
    /// With `--corpus`, also report per-query geometry under this model.
    #[arg(long, requires = "corpus")]
    pub model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    pub corpus: Option<PathBuf>,
    /// Per-query samples per emotion for the geometry report.
    #[arg(long, default_value_t = 20)]
    pub per_emotion: usize,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Bad user input; exits 1.
#[derive(Debug)]
pub struct Invalid(String);

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Invalid(msg.into()))
}

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

/// Outcome of a command that ran to completion.
pub enum Status {
    Ok,
    TheoremFailed,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use evsteer_core::Error as E;
    for cause in err.chain() {
        if cause.is::<Invalid>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Io { .. } | E::Judge(_) => 2,
                _ => 1,
            };
        }
    }
    2
}

/// The error chain joined by `: `, skipping causes already spelled out.
fn describe(err: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in err.chain() {
        let part = cause.to_string();
        if !text.contains(&part) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&part);
        }
    }
    text
}

fn run(cli: Cli) -> anyhow::Result<Status> {
    let exec = if cli.jobs == Some(1) { Exec::Serial } else { Exec::Parallel };
    with_jobs(cli.jobs, || match cli.command {
        Command::InitModel(a) => commands::init_model(&a),
        Command::GenCorpus(a) => commands::gen_corpus(&a),
        Command::Extract(a) => commands::extract(&a, exec),
        Command::Steer(a) => commands::steer(&a),
        Command::Verify(a) => commands::verify(&a, exec),
        Command::Eval(a) => eval::eval(&a, exec),
        Command::Inspect(a) => commands::inspect(&a, exec),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::TheoremFailed) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
