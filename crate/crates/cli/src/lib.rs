//! Config-driven scenario runner for the nonlocal quasilinear solvers.

pub mod config;
mod run;

pub use config::{Issue, Scenario, ScenarioConfig};
pub use run::{execute, jump_spec, measure_spec, Outcome};

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {}: {source}", path.display())]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid configuration:\n{}", list(.0))]
    Invalid(Vec<Issue>),
    #[error("{context}: {source}")]
    Core {
        context: String,
        source: nonlocal_ql::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn list(issues: &[Issue]) -> String {
    issues.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n")
}

/// Process exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success = 0,
    HardError = 1,
    SoftFailure = 2,
}

/// Parse and range-check a scenario file.
pub fn validate_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let cfg = ScenarioConfig::parse(&text).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    let issues = cfg.issues();
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Invalid(issues))
    }
}

#[derive(Debug, Serialize)]
struct FileEntry {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest {
    scenario: String,
    seed: u64,
    status: u8,
    soft_failures: Vec<String>,
    inputs: Vec<FileEntry>,
    outputs: Vec<FileEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug)]
pub struct RunSummary {
    pub status: Status,
    pub output_dir: PathBuf,
    pub soft_failures: Vec<String>,
}

/// Validate, execute and write a scenario. Outputs are staged in a temporary
/// directory next to the destination and moved into place only on success.
pub fn run_scenario(config: &Path, output: Option<&Path>, seed: Option<u64>) -> Result<RunSummary, CliError> {
    let mut cfg = validate_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let base = config.parent().unwrap_or(Path::new("."));
    let dest = match output {
        Some(o) => o.to_path_buf(),
        None => config::resolve(base, cfg.output_dir.as_deref().unwrap_or(Path::new("output"))),
    };
    let outcome = execute(&cfg, base)?;
    let status = if outcome.soft_failures.is_empty() {
        Status::Success
    } else {
        Status::SoftFailure
    };

    let mut inputs = vec![config.to_path_buf()];
    inputs.extend(outcome.inputs.iter().cloned());
    let inputs = inputs
        .iter()
        .map(|p| {
            let bytes = fs::read(p).map_err(|source| CliError::Read {
                path: p.clone(),
                source,
            })?;
            Ok(FileEntry {
                path: p.display().to_string(),
                sha256: sha256_hex(&bytes),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let manifest = Manifest {
        scenario: cfg.scenario.name().to_string(),
        seed: cfg.seed,
        status: status as u8,
        soft_failures: outcome.soft_failures.clone(),
        inputs,
        outputs: outcome
            .files
            .iter()
            .map(|(name, bytes)| FileEntry {
                path: name.clone(),
                sha256: sha256_hex(bytes),
            })
            .collect(),
    };

    let parent = match dest.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent)?;
    let staging = tempfile::Builder::new().prefix(".nonlocal-ql-").tempdir_in(&parent)?;
    for (name, bytes) in &outcome.files {
        fs::write(staging.path().join(name), bytes)?;
    }
    let text = toml::to_string(&manifest).expect("manifest serializes");
    fs::write(staging.path().join("manifest.toml"), text)?;
    if dest.exists() {
        fs::remove_dir_all(&dest)?;
    }
    fs::rename(staging.keep(), &dest)?;
    Ok(RunSummary {
        status,
        output_dir: dest,
        soft_failures: outcome.soft_failures,
    })
}

/// Named presets accepted by the config tables.
pub fn list_presets() -> String {
    let rows: [(&str, &[&str]); 7] = [
        ("scenario", &["solve", "parabolic", "limit-sweep", "mc-check", "validate", "operator-probe"]),
        ("measure.family", &["stable", "fractional", "tempered", "concentrating", "none"]),
        (
            "jump.family",
            &[
                "identity",
                "directional-gradient",
                "p-laplace-full",
                "p-laplace-split",
                "curvature",
                "isotropic-scalar",
                "exponential-compensator",
            ],
        ),
        ("jump.a_function", &["const1", "abs_power"]),
        ("problem.rhs", &["zero", "constant", "gaussian", "skew-gaussian", "cosine", "bump"]),
        ("problem.nonlinearity", &["linear", "exponential"]),
        ("problem.boundary", &["project-to-ball", "extrapolate-constant"]),
    ];
    rows.iter()
        .map(|(k, v)| format!("{k}: {}\n", v.join(", ")))
        .collect()
}
