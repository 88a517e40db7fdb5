use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use stiffnet_cli::{load_config, output_dir, run, verify, CliError};

#[derive(Parser)]
#[command(
    name = "stiffnet",
    version,
    about = "Studies of ReLU value networks for stiff SDEs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Randomized exactness and size-bound checks of the network calculus.
    CalculusCheck(StudyArgs),
    /// Strong and weak convergence rates of the linear-implicit scheme.
    Convergence(StudyArgs),
    /// Plan, build and score value networks.
    Synth(StudyArgs),
    /// Inf-sup network of a zero-sum game against enumeration.
    Game(StudyArgs),
    /// Network size growth in d and 1/ε.
    Scaling(StudyArgs),
    /// Re-run a recorded study and compare its artifacts.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Replaces the configuration recorded in the manifest.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding the recorded artifacts.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
}

fn study(name: &str, args: StudyArgs) -> Result<(), CliError> {
    let config = match &args.config {
        Some(path) => load_config(path)?,
        None => stiffnet_cli::parse_config(&format!(r#"{{"study": "{name}"}}"#))?,
    };
    if config.name() != name {
        return Err(CliError::Config(format!(
            "config describes a {} study, not {name}",
            config.name()
        )));
    }
    let dir = output_dir(&config, args.out.as_deref());
    let manifest = run(&config, &dir, args.threads)?;
    println!(
        "{} study: {} ({} artifacts in {})",
        name,
        manifest.status,
        manifest.artifacts.len(),
        dir.display()
    );
    if manifest.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Assertion(manifest.failures))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::CalculusCheck(a) => study("calculus-check", a),
        Command::Convergence(a) => study("convergence", a),
        Command::Synth(a) => study("synth", a),
        Command::Game(a) => study("game", a),
        Command::Scaling(a) => study("scaling", a),
        Command::Verify(a) => a
            .config
            .as_deref()
            .map(load_config)
            .transpose()
            .and_then(|c| verify(&a.out, c, a.threads))
            .map(|m| println!("verify: {} artifacts reproduced", m.artifacts.len())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stiffnet: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
