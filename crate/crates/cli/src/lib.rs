//! Batch experiment driver: reads a study configuration, runs it, and writes
//! CSV artifacts with a manifest that `verify` can replay.

pub mod artifact;
pub mod config;
pub mod studies;

use artifact::{read_table, Manifest};
use config::ExperimentConfig;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Environment variable consulted when the configuration has no seed.
pub const SEED_ENV: &str = "STIFFNET_SEED";
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("malformed artifact: {0}")]
    Artifact(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{0}")]
    Library(#[from] stiffnet::Error),
    #[error("{} check(s) failed:\n  {}", .0.len(), .0.join("\n  "))]
    Assertion(Vec<String>),
    #[error("verify found {} difference(s):\n  {}", .0.len(), .0.join("\n  "))]
    Mismatch(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::MissingArtifact(_) | CliError::Artifact(_) => 2,
            CliError::Io(_)
            | CliError::Library(_)
            | CliError::Assertion(_)
            | CliError::Mismatch(_) => 1,
        }
    }
}

pub use config::parse_config;

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Seed from the configuration, then the environment, then the default.
pub fn resolve_seed(config: &ExperimentConfig) -> Result<u64, CliError> {
    if let Some(s) = config.seed() {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

/// Output directory: the flag, then the configuration, then `out/<study>`.
pub fn output_dir(config: &ExperimentConfig, flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.output().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(config.name()))
}

fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, CliError> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs one study, writing its artifacts and manifest into `dir`.
pub fn run(
    config: &ExperimentConfig,
    dir: &Path,
    threads: Option<usize>,
) -> Result<Manifest, CliError> {
    let seed = resolve_seed(config)?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let start = Instant::now();
    let result = with_threads(threads, || match config {
        ExperimentConfig::CalculusCheck(c) => studies::calculus_check(c, seed, dir),
        ExperimentConfig::Convergence(c) => studies::convergence(c, seed, dir),
        ExperimentConfig::Synth(c) => studies::synth(c, seed, dir),
        ExperimentConfig::Game(c) => studies::game(c, seed, dir),
        ExperimentConfig::Scaling(c) => studies::scaling(c, seed, dir),
    })?;
    let mut manifest = Manifest {
        tool: "stiffnet".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        study: config.name().into(),
        seed,
        config: serde_json::to_value(config).expect("config serializes"),
        artifacts: Vec::new(),
        status: String::new(),
        failures: Vec::new(),
        wall_ms: 0.0,
    };
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            manifest.status = "error".into();
            manifest.failures.push(e.to_string());
            manifest.wall_ms = start.elapsed().as_secs_f64() * 1e3;
            manifest.write(dir)?;
            return Err(e);
        }
    };
    manifest.artifacts = outcome.artifacts;
    manifest.status = if outcome.failures.is_empty() {
        "pass"
    } else {
        "fail"
    }
    .into();
    manifest.failures = outcome.failures;
    manifest.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    manifest.write(dir)?;
    Ok(manifest)
}

/// Re-runs the study recorded in `dir` with its recorded seed and compares
/// every artifact outside the timing columns. `config` replaces the
/// recorded configuration when given.
pub fn verify(
    dir: &Path,
    config: Option<ExperimentConfig>,
    threads: Option<usize>,
) -> Result<Manifest, CliError> {
    let recorded = Manifest::read(dir)?;
    let mut config = match config {
        Some(c) => c,
        None => serde_json::from_value(recorded.config.clone())
            .map_err(|e| CliError::Artifact(format!("recorded config: {e}")))?,
    };
    config.set_seed(recorded.seed);
    let originals = recorded
        .artifacts
        .iter()
        .map(|name| read_table(&dir.join(name)).map(|t| (name.clone(), t)))
        .collect::<Result<Vec<_>, _>>()?;

    let scratch = scratch_dir();
    let rerun = run(&config, &scratch, threads);
    let outcome = rerun.and_then(|manifest| {
        let mut diffs = Vec::new();
        for (name, original) in &originals {
            let fresh = read_table(&scratch.join(name))?;
            diffs.extend(compare(
                name,
                &original.deterministic(),
                &fresh.deterministic(),
            ));
        }
        Ok((manifest, diffs))
    });
    let _ = std::fs::remove_dir_all(&scratch);
    let (manifest, diffs) = outcome?;
    if diffs.is_empty() {
        Ok(manifest)
    } else {
        Err(CliError::Mismatch(diffs))
    }
}

fn scratch_dir() -> PathBuf {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_nanos());
    std::env::temp_dir().join(format!("stiffnet-verify-{}-{nanos}", std::process::id()))
}

fn compare(name: &str, a: &artifact::Table, b: &artifact::Table) -> Vec<String> {
    if a.header != b.header {
        return vec![format!("{name}: header {:?} vs {:?}", a.header, b.header)];
    }
    let mut diffs: Vec<String> = a
        .rows
        .iter()
        .zip(&b.rows)
        .enumerate()
        .filter(|(_, (x, y))| x != y)
        .map(|(i, (x, y))| format!("{name} row {}: {} vs {}", i + 1, x.join(","), y.join(",")))
        .collect();
    if a.rows.len() != b.rows.len() {
        diffs.push(format!("{name}: {} rows vs {}", a.rows.len(), b.rows.len()));
    }
    diffs
}
