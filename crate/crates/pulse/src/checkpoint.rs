//! Parameter checkpoints: `<stem>.bin` holds every parameter as a
//! little-endian f64 in [`ModelParams::flatten`] order; `<stem>.json`
//! describes the layout.

use std::fs;
use std::path::{Path, PathBuf};

use pulse_core::model::{ModelParams, ModelSpec};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STEM: &str = "checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: String,
    pub n_params: usize,
    pub in_channels: usize,
    pub hidden: Vec<usize>,
    pub kernel: usize,
    /// `(cin, cout)` of each layer; weights `[cout, cin, kernel]` then biases `[cout]`.
    pub layers: Vec<(usize, usize)>,
}

const FORMAT: &str = "f64-le";

fn paths(dir: &Path) -> (PathBuf, PathBuf) {
    (dir.join(format!("{STEM}.bin")), dir.join(format!("{STEM}.json")))
}

pub fn save(dir: &Path, params: &ModelParams) -> Result<()> {
    let (bin, json) = paths(dir);
    let spec = params.spec();
    let side = Sidecar {
        format: FORMAT.into(),
        n_params: spec.n_params(),
        in_channels: spec.in_channels,
        hidden: spec.hidden.clone(),
        kernel: spec.kernel,
        layers: spec.layer_dims(),
    };
    let bytes: Vec<u8> = params.flatten().iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
    let text = serde_json::to_string_pretty(&side).expect("sidecar serializes");
    fs::write(&json, text + "\n").map_err(|e| Error::io(&json, e))
}

pub fn load(dir: &Path) -> Result<ModelParams> {
    let (bin, json) = paths(dir);
    let corrupt = |path: &Path, reason: String| Error::CorruptFile {
        path: path.to_path_buf(),
        reason,
    };
    let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    let side: Sidecar = serde_json::from_str(&text).map_err(|e| corrupt(&json, e.to_string()))?;
    if side.format != FORMAT {
        return Err(Error::VersionMismatch {
            path: json,
            found: side.format,
        });
    }
    let spec = ModelSpec {
        in_channels: side.in_channels,
        hidden: side.hidden,
        kernel: side.kernel,
    };
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    if bytes.len() != 8 * side.n_params || side.n_params != spec.n_params() {
        return Err(corrupt(&bin, format!("expected {} parameters, found {} bytes", side.n_params, bytes.len())));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ModelParams::from_flat(&spec, &values).map_err(|e| corrupt(&bin, e.to_string()))
}
