//! Opens the model a command explains.

use std::path::Path;

use wam_core::model::{BackendHandle, BuiltinModel, ExternalWorker, DEFAULT_TIMEOUT};
use wam_core::{Result, WamError};

use crate::args::ModelArgs;

/// Environment variable holding an external worker command line
/// (program followed by whitespace-separated arguments).
pub const WORKER_ENV: &str = "WAM_WORKER";

pub fn open(args: &ModelArgs) -> Result<BackendHandle> {
    if let Some(path) = &args.model {
        return Ok(BackendHandle::Builtin(BuiltinModel::load(path)?));
    }
    match std::env::var(WORKER_ENV) {
        Ok(cmd) if !cmd.trim().is_empty() => {
            let mut parts = cmd.split_whitespace().map(str::to_string);
            let program = parts.next().unwrap_or_default();
            let rest: Vec<String> = parts.collect();
            Ok(BackendHandle::External(ExternalWorker::spawn(program, &rest, DEFAULT_TIMEOUT)?))
        }
        _ => Err(WamError::InvalidArgument(format!(
            "no model: pass --model or set {WORKER_ENV}"
        ))),
    }
}

pub fn load_builtin(path: &Path) -> Result<BuiltinModel> {
    BuiltinModel::load(path)
}

/// The parameter file that accompanies a model header.
pub fn params_path(header: &Path) -> std::path::PathBuf {
    let stem = header.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    header.with_file_name(format!("{stem}.params.wamf"))
}
