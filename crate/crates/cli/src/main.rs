use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use phaselab_cli::{parse_config, run, CliError, Command, Context, EXIT_ERROR, EXIT_PASS, EXIT_TOLERANCE};

#[derive(Parser)]
#[command(name = "phaselab", version, about = "Phase-space simulations of quantum states and their dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Scenario config (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for randomized suites; overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, env = "PHASELAB_THREADS")]
    threads: Option<usize>,
    /// Treat warnings as tolerance violations.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Initial state to Wigner and eta snapshots with diagnostics.
    Transform,
    /// Truncated Moyal evolution.
    Evolve,
    /// Exact von Neumann evolution.
    Oracle,
    /// Moyal run against the von Neumann oracle, with an error report.
    Compare,
    /// Plant/controller scenario and coupling verdict.
    Feedback,
    /// Invariant suite at the configured lattice sizes.
    Verify,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Transform => Command::Transform,
            Cmd::Evolve => Command::Evolve,
            Cmd::Oracle => Command::Oracle,
            Cmd::Compare => Command::Compare,
            Cmd::Feedback => Command::Feedback,
            Cmd::Verify => Command::Verify,
        }
    }
}

const DEFAULT_VERIFY: &str = r#"{"version": "1", "factors": [{"label": "Q", "kind": "grid", "n": 32, "half_width": 6.0, "covariance": [[0.5]]}]}"#;

fn execute(cli: Cli) -> Result<i32, CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))?;
    }
    let command = Command::from(cli.command);
    let text = match (&cli.config, command) {
        (Some(path), _) => std::fs::read_to_string(path)?,
        (None, Command::Verify) => DEFAULT_VERIFY.to_string(),
        (None, _) => return Err(CliError::Usage("--config is required".into())),
    };
    let config = parse_config(&text)?;
    let ctx = Context {
        out: cli.out.unwrap_or_else(|| config.output.dir.clone()),
        seed: cli.seed.unwrap_or(config.seed),
        strict: cli.strict,
        config,
        config_text: text,
    };
    let outcome = run(command, &ctx)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    if outcome.passed() {
        println!("{}: pass ({} files in {})", command.name(), outcome.manifest.files.len(), ctx.out.display());
        Ok(EXIT_PASS)
    } else {
        for v in &outcome.violations {
            eprintln!("violation: {v}");
        }
        println!("{}: tolerance violation ({} finding(s))", command.name(), outcome.violations.len());
        Ok(EXIT_TOLERANCE)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    };
    ExitCode::from(code as u8)
}
