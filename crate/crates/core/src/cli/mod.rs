//! The `csb-lab` command line: TOML problem in, hashed artifact directory out.

pub mod artifact;
mod commands;
pub mod config;

use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde_json::json;

use crate::loss::EvalCounter;
use artifact::{sha256_hex, Artifact, Manifest};
use config::ProblemConfig;

pub const TOOL: &str = "csb-lab";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("io: {0}")]
    Io(String),
    #[error("output directory {} is locked by another run", .0.display())]
    Locked(PathBuf),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Locked(_) => 2,
            CliError::Numeric(_) | CliError::Io(_) => 3,
        }
    }
}

/// Exit code when the shrink loop stops at its iteration limit.
pub const EXIT_NOT_CONVERGED: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Fit,
    Oat,
    Csb,
    Ua,
    Sa,
    Converge,
    CsbStudy,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Oat => "oat",
            Command::Csb => "csb",
            Command::Ua => "ua",
            Command::Sa => "sa",
            Command::Converge => "converge",
            Command::CsbStudy => "csb-study",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = TOOL, version, about = "Confidence sub-contour box estimation")]
pub struct Args {
    pub command: Command,
    /// Problem TOML, or a manifest.json to replay.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the root seed of the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of CSB runs for csb-study.
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
}

struct Source {
    text: String,
    base_dir: PathBuf,
    seed: Option<u64>,
    repeats: Option<usize>,
}

fn read_source(path: &Path, command: Command) -> Result<Source, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if let Ok(m) = serde_json::from_str::<Manifest>(&text) {
        if m.command != command.name() {
            return Err(CliError::Config(format!(
                "manifest records command `{}`, not `{}`",
                m.command,
                command.name()
            )));
        }
        if sha256_hex(m.config.as_bytes()) != m.config_sha256 {
            return Err(CliError::Config("manifest config does not match its hash".into()));
        }
        return Ok(Source { text: m.config, base_dir: m.config_dir, seed: Some(m.seed), repeats: m.repeats });
    }
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let base_dir = parent
        .canonicalize()
        .map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
    Ok(Source { text, base_dir, seed: None, repeats: None })
}

/// Runs one command and returns the process exit code.
pub fn run(args: Args) -> i32 {
    match execute(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{TOOL}: {e}");
            e.exit_code()
        }
    }
}

/// Parses `argv` (program name first) and runs it.
pub fn run_from<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Args::try_parse_from(argv) {
        Ok(a) => run(a),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                2
            } else {
                0
            }
        }
    }
}

fn execute(args: &Args) -> Result<i32, CliError> {
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let src = read_source(&args.config, args.command)?;
    let problem = ProblemConfig::parse(&src.text)?.bind(&src.base_dir)?;
    let seed = args.seed.or(src.seed).unwrap_or(problem.config.seed);
    let repeats = match args.command {
        Command::CsbStudy => Some(args.repeats.or(src.repeats).unwrap_or(problem.config.study.repeats)),
        _ => None,
    };
    let seeds = commands::seeds_for(args.command, seed, repeats.unwrap_or(0));

    let mut art = Artifact::open(&args.out)?;
    art.write("config.toml", src.text.as_bytes())?;
    let counter = EvalCounter::new();
    let outcome = match args.command {
        Command::Fit => commands::cmd_fit(&problem, &seeds, &counter, &mut art),
        Command::Oat => commands::cmd_oat(&problem, &seeds, &counter, &mut art),
        Command::Csb => commands::cmd_csb(&problem, &seeds, &counter, &mut art),
        Command::Ua => commands::cmd_ua(&problem, &seeds, &counter, &mut art),
        Command::Sa => commands::cmd_sa(&problem, &seeds, &counter, &mut art),
        Command::Converge => commands::cmd_converge(&problem, &seeds, &counter, &mut art),
        Command::CsbStudy => {
            commands::cmd_csb_study(&problem, &seeds, &counter, &mut art, repeats.unwrap_or(0))
        }
    }?;

    let total_evals = counter.get();
    art.write_json(
        "summary.json",
        &json!({
            "command": args.command.name(),
            "seed": seed,
            "exit_code": outcome.exit_code,
            "total_evals": total_evals,
            "result": outcome.summary,
        }),
    )?;
    art.finish(Manifest {
        tool: TOOL.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: args.command.name().into(),
        seed,
        repeats,
        config_sha256: sha256_hex(src.text.as_bytes()),
        config_dir: src.base_dir,
        config: src.text,
        seeds,
        total_evals,
        files: Default::default(),
    })?;
    Ok(outcome.exit_code)
}
