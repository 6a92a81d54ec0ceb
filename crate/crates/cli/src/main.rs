//! `bondforest`: train, evaluate, explain and query catastrophe bond spread
//! forests from the command line.
//!
//! Every run writes `<command>.manifest.json` into `--out-dir`. Exit status is
//! 0 on success, 1 for invalid input or parameters, 2 for I/O failures and 3
//! when an internal invariant breaks (including a replay that does not
//! reproduce its recorded outputs).

mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use bondforest::ErrorCategory;
use commands::*;
use manifest::Run;

#[derive(Debug, Parser)]
#[command(name = "bondforest", version, about = "Random-forest models of catastrophe bond spreads")]
struct Cli {
    /// Master seed; every random draw derives from it.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads. Changes wall-clock time only, never results.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory receiving every output file and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its generator configuration.
    GenData(GenDataArgs),
    /// Fit a forest, save it, and report its out-of-bag accuracy.
    Train(TrainArgs),
    /// Cross-validate mtry and scan out-of-bag error over tree counts.
    Tune(TuneArgs),
    /// Rank predictors by permutation importance and minimal depth.
    Importance(ImportanceArgs),
    /// Compare importance rankings across random half-samples.
    Stability(StabilityArgs),
    /// Evaluate the ordinary least squares baseline.
    Baseline(BaselineArgs),
    /// Predict spreads for new issues, optionally against price guidance.
    Predict(PredictArgs),
    /// Write the full analysis bundle for a trained model.
    Report(ReportArgs),
    /// Re-run the command recorded in a manifest and verify its outputs.
    Replay(ReplayArgs),
}

#[derive(Debug, clap::Args)]
struct ReplayArgs {
    manifest: PathBuf,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::Train(_) => "train",
            Command::Tune(_) => "tune",
            Command::Importance(_) => "importance",
            Command::Stability(_) => "stability",
            Command::Baseline(_) => "baseline",
            Command::Predict(_) => "predict",
            Command::Report(_) => "report",
            Command::Replay(_) => "replay",
        }
    }
}

/// Outputs of a replayed run differ from the recorded ones.
#[derive(Debug)]
struct NotReproduced(Vec<String>);

impl std::fmt::Display for NotReproduced {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "replay did not reproduce: {}", self.0.join(", "))
    }
}

impl std::error::Error for NotReproduced {}

fn exit_status(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<bondforest::Error>() {
            return match e.category() {
                ErrorCategory::Validation => 1,
                ErrorCategory::Io => 2,
                ErrorCategory::Internal => 3,
            };
        }
        if cause.is::<std::io::Error>() {
            return 2;
        }
        if cause.is::<NotReproduced>() {
            return 3;
        }
    }
    1
}

fn set_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            anyhow::bail!("--threads must be at least 1");
        }
        // The global pool can be configured once per process; a replay that
        // re-enters keeps the first setting, which only affects speed.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn execute(cli: Cli, argv: &[String]) -> Result<()> {
    set_threads(cli.threads)?;
    let name = cli.command.name();
    let mut run = Run::new(cli.out_dir.clone(), cli.seed);
    let params = match &cli.command {
        Command::GenData(a) => gen_data(&mut run, a)?,
        Command::Train(a) => train(&mut run, a)?,
        Command::Tune(a) => tune(&mut run, a)?,
        Command::Importance(a) => importance(&mut run, a)?,
        Command::Stability(a) => stability(&mut run, a)?,
        Command::Baseline(a) => baseline(&mut run, a)?,
        Command::Predict(a) => {
            let (params, table) = predict(&mut run, a)?;
            print!("{table}");
            params
        }
        Command::Report(a) => report(&mut run, a)?,
        Command::Replay(a) => return replay(&a.manifest),
    };
    for out in run.outputs() {
        eprintln!("wrote {}", out.path);
    }
    let path = run.finish(name, argv, cli.threads, params)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn replay(path: &Path) -> Result<()> {
    let recorded = manifest::load(path)?;
    if recorded.tool != manifest::TOOL {
        anyhow::bail!("{} was not written by {}", path.display(), manifest::TOOL);
    }
    for input in &recorded.inputs {
        let now = manifest::file_digest(Path::new(&input.path))?;
        if now != input.sha256 {
            anyhow::bail!("input {} has changed since the recorded run", input.path);
        }
    }
    let mut full = vec![manifest::TOOL.to_string()];
    full.extend(recorded.argv.iter().cloned());
    let cli = Cli::try_parse_from(&full).context("recorded arguments no longer parse")?;
    if matches!(cli.command, Command::Replay(_)) {
        anyhow::bail!("a replay manifest cannot itself be replayed");
    }
    execute(cli, &recorded.argv)?;
    let mut differing = Vec::new();
    for out in &recorded.outputs {
        if manifest::file_digest(Path::new(&out.path))? != out.sha256 {
            differing.push(out.path.clone());
        }
    }
    if !differing.is_empty() {
        return Err(NotReproduced(differing).into());
    }
    eprintln!("replay reproduced {} output file(s)", recorded.outputs.len());
    Ok(())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli, &argv[1..]) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_status(&e))
        }
    }
}
