//! Run manifests: everything needed to re-execute a run and check that it
//! reproduced the same bytes.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::args::{Cli, Command};
use crate::backend::params_path;

pub const FILE: &str = "run_manifest.json";

#[derive(Debug, Serialize)]
pub struct ArtifactHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub inputs: Vec<ArtifactHash>,
    pub outputs: Vec<ArtifactHash>,
    pub wall_clock_seconds: f64,
}

fn sha256(path: &Path) -> std::io::Result<String> {
    Ok(format!("{:x}", Sha256::digest(fs::read(path)?)))
}

/// Regular files under `path` (or `path` itself), sorted.
fn files(path: &Path) -> walkdir::Result<Vec<PathBuf>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in WalkDir::new(path).sort_by_file_name() {
        let entry = entry?;
        if entry.file_type().is_file() {
            out.push(entry.into_path());
        }
    }
    Ok(out)
}

fn model_files(header: &Path) -> Vec<PathBuf> {
    vec![header.to_path_buf(), params_path(header)]
}

fn input_paths(cli: &Cli) -> Vec<PathBuf> {
    let model = |m: &Option<PathBuf>| m.as_deref().map(model_files).unwrap_or_default();
    match &cli.command {
        Command::GenData(_) => vec![],
        Command::Train(a) => vec![a.data.clone()],
        Command::Dwt(a) | Command::Idwt(a) | Command::Noise(a) => vec![a.input.clone()],
        Command::Attribute(a) => [model(&a.model.model), vec![a.input.clone()]].concat(),
        Command::Eval(a) => [model(&a.model.model), vec![a.data.clone()]].concat(),
        Command::Perturb(a) => [model(&a.model.model), vec![a.input.clone()]].concat(),
        Command::Sweep(a) => [model(&a.model.model), vec![a.input.clone()]].concat(),
        Command::Sanity(a) => [model_files(&a.model), vec![a.data.clone()]].concat(),
        Command::ScaleImportance(a) => vec![a.attribution.clone()],
        Command::TopkReconstruct(a) => vec![a.input.clone(), a.attribution.clone()],
        Command::Render(a) => vec![a.input.clone()],
        Command::Recipe(a) => [model(&a.model), a.data.iter().cloned().collect()].concat(),
    }
}

fn hashes(paths: &[PathBuf], relative_to: Option<&Path>) -> anyhow::Result<Vec<ArtifactHash>> {
    let mut out = Vec::new();
    for p in paths {
        for f in files(p)? {
            let shown = relative_to.and_then(|r| f.strip_prefix(r).ok()).unwrap_or(&f);
            out.push(ArtifactHash {
                path: shown.display().to_string(),
                sha256: sha256(&f)?,
            });
        }
    }
    Ok(out)
}

impl RunManifest {
    pub fn collect(cli: &Cli, elapsed: Duration) -> anyhow::Result<Self> {
        let manifest_path = cli.out.join(FILE);
        let outputs = hashes(&[cli.out.clone()], Some(&cli.out))?
            .into_iter()
            .filter(|h| cli.out.join(&h.path) != manifest_path)
            .collect();
        Ok(Self {
            tool: "wam".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: std::env::args().collect(),
            config: serde_json::to_value(cli)?,
            seed: cli.seed,
            inputs: hashes(&input_paths(cli), None)?,
            outputs,
            wall_clock_seconds: elapsed.as_secs_f64(),
        })
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        fs::write(dir.join(FILE), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
