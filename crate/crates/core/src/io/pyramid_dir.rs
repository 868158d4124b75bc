//! A pyramid on disk is a directory of WAMF band files plus
//! `manifest.json`. The approximation block is listed with orientation 0.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::wamf::{read_wamf, write_wamf};
use crate::error::{Result, WamError};
use crate::signal::Signal;
use crate::wavelet::{Boundary, CoeffLayout, Family, WaveletPyramid, WaveletSpec};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandEntry {
    pub level: usize,
    pub orientation: usize,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PyramidManifest {
    pub family: Family,
    pub levels: usize,
    pub boundary: Boundary,
    pub signal_shape: Vec<usize>,
    pub bands: Vec<BandEntry>,
}

fn band_file(level: usize, orientation: usize) -> String {
    if orientation == 0 {
        format!("approx_l{level}.wamf")
    } else {
        format!("band_l{level}_o{orientation}.wamf")
    }
}

/// Writes `p` into `dir` (created if needed). `sidecar`, when given, is
/// stored as `metadata.json` next to the manifest.
pub fn write_pyramid_dir(
    dir: &Path,
    p: &WaveletPyramid,
    sidecar: Option<&serde_json::Value>,
) -> Result<PyramidManifest> {
    fs::create_dir_all(dir)?;
    let layout = p.layout();
    let flat = p.clone().into_flat_values();
    let mut bands = Vec::new();
    for block in layout.blocks() {
        let file = band_file(block.level, block.orientation);
        let signal = Signal::new(block.shape.clone(), flat[block.range()].to_vec())?;
        write_wamf(&dir.join(&file), &signal)?;
        bands.push(BandEntry {
            level: block.level,
            orientation: block.orientation,
            file,
        });
    }
    let manifest = PyramidManifest {
        family: p.spec().family,
        levels: p.spec().levels,
        boundary: p.spec().boundary,
        signal_shape: p.signal_shape().to_vec(),
        bands,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    if let Some(meta) = sidecar {
        fs::write(dir.join("metadata.json"), serde_json::to_string_pretty(meta)?)?;
    }
    Ok(manifest)
}

pub fn read_pyramid_dir(dir: &Path) -> Result<WaveletPyramid> {
    let manifest_path = dir.join(MANIFEST);
    if !manifest_path.exists() {
        return Err(WamError::MissingArtifact(manifest_path.display().to_string()));
    }
    let manifest: PyramidManifest = serde_json::from_slice(&fs::read(&manifest_path)?)?;
    let spec = WaveletSpec {
        family: manifest.family,
        levels: manifest.levels,
        boundary: manifest.boundary,
    };
    let layout = CoeffLayout::new(spec, &manifest.signal_shape)?;
    let mut flat = vec![0.0; layout.len()];
    for block in layout.blocks() {
        let entry = manifest
            .bands
            .iter()
            .find(|b| b.level == block.level && b.orientation == block.orientation)
            .ok_or_else(|| {
                WamError::MalformedPyramid(format!(
                    "manifest lacks level {} orientation {}",
                    block.level, block.orientation
                ))
            })?;
        let band = read_wamf(&dir.join(&entry.file))?;
        if band.shape() != block.shape.as_slice() {
            return Err(WamError::MalformedPyramid(format!(
                "{} has shape {:?}, expected {:?}",
                entry.file,
                band.shape(),
                block.shape
            )));
        }
        flat[block.range()].copy_from_slice(band.data());
    }
    WaveletPyramid::from_flat(spec, &manifest.signal_shape, &flat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::dwt;

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = Signal::new(vec![8, 8], data).unwrap();
        let p = dwt(&x, &WaveletSpec::new(Family::Bior22, 2)).unwrap();
        let meta = serde_json::json!({"method": "test"});
        let manifest = write_pyramid_dir(dir.path(), &p, Some(&meta)).unwrap();
        assert_eq!(manifest.bands.len(), 1 + 2 * 3);
        assert_eq!(manifest.bands[0].orientation, 0);
        assert_eq!(read_pyramid_dir(dir.path()).unwrap(), p);
        assert!(dir.path().join("metadata.json").exists());
    }

    #[test]
    fn missing_manifest() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_pyramid_dir(dir.path()), Err(WamError::MissingArtifact(_))));
    }
}
