//! Library side of the `sveb` command-line tool: dataset ingestion, run
//! configuration, the analysis pipeline and report emission.

pub mod config;
pub mod dataset;
pub mod error;
pub mod pipeline;
pub mod simulate;

use std::path::{Path, PathBuf};

use config::RunConfig;
use error::CliError;
use pipeline::{execute, sha256_hex, write_artifacts, Command, Manifest};
use simulate::{simulate, SimSettings};

/// Outcome of re-running a manifest: files whose hash differs.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub out: PathBuf,
    pub checked: Vec<String>,
    pub mismatched: Vec<String>,
}

/// Re-run the command recorded in `manifest` into `out` and compare every
/// output against its recorded hash.
pub fn replay(manifest_path: &Path, out: &Path) -> Result<ReplayReport, CliError> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| CliError::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("{}: not a manifest: {e}", manifest_path.display())))?;
    let artifacts = if manifest.command == "simulate" {
        simulate(&SimSettings::from_options(&manifest.config)?)?
    } else {
        let command = match manifest.command.as_str() {
            "fit" => Command::Fit,
            "mse" => Command::Mse,
            "benchmark" => Command::Benchmark,
            "predict" => Command::Predict,
            "run" => Command::Run,
            "cv-curve" => Command::CvCurve,
            other => return Err(CliError::validation(format!("manifest names unknown command '{other}'"))),
        };
        let mut options = manifest.config.clone();
        options.insert("out".into(), out.display().to_string());
        let cfg = RunConfig::from_options(&options)?;
        let bytes = std::fs::read(&cfg.input).map_err(|e| CliError::io(&cfg.input, e))?;
        if sha256_hex(&bytes) != manifest.input_sha256 {
            return Err(CliError::validation(format!(
                "input {} differs from the one recorded in the manifest",
                cfg.input.display()
            )));
        }
        execute(command, &cfg, &manifest.extra)?
    };
    write_artifacts(out, &artifacts)?;
    let mut checked = Vec::new();
    let mut mismatched = Vec::new();
    for (name, body) in &artifacts {
        if let Some(want) = manifest.outputs.get(name) {
            checked.push(name.clone());
            if *want != sha256_hex(body.as_bytes()) {
                mismatched.push(name.clone());
            }
        }
    }
    for name in manifest.outputs.keys() {
        if !checked.contains(name) {
            mismatched.push(name.clone());
        }
    }
    Ok(ReplayReport {
        out: out.to_path_buf(),
        checked,
        mismatched,
    })
}
