//! Dataset manifest CSV: `clip_id,path,hr_bpm,has_label,split`.

use std::path::Path;

use pulse_core::synth::{DatasetManifest, ManifestEntry, Split};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FILE_NAME: &str = "manifest.csv";
pub const HEADER: &str = "clip_id,path,hr_bpm,has_label,split";

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    clip_id: String,
    path: String,
    hr_bpm: u32,
    has_label: bool,
    split: String,
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

pub fn write(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for e in &manifest.entries {
        w.serialize(Row {
            clip_id: e.clip_id.clone(),
            path: e.path.clone(),
            hr_bpm: e.hr_bpm,
            has_label: e.has_label,
            split: e.split.as_str().into(),
        })
        .map_err(|e| csv_err(path, e))?;
    }
    if manifest.entries.is_empty() {
        w.write_record(HEADER.split(',')).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<DatasetManifest> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        },
        _ => csv_err(path, e),
    })?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.iter().collect::<Vec<_>>().join(",");
    if header != HEADER {
        return Err(csv_err(path, format!("header {header:?}, expected {HEADER:?}")));
    }
    let mut entries = Vec::new();
    for row in r.deserialize::<Row>() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let split = Split::parse(&row.split).ok_or_else(|| csv_err(path, format!("unknown split {:?}", row.split)))?;
        entries.push(ManifestEntry {
            clip_id: row.clip_id,
            path: row.path,
            hr_bpm: row.hr_bpm,
            has_label: row.has_label,
            split,
        });
    }
    let manifest = DatasetManifest { entries };
    manifest.validate().map_err(|e| csv_err(path, e))?;
    Ok(manifest)
}
