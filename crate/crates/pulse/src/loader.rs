//! Dataset directories: `manifest.csv` plus one PCB1 file per clip.
//!
//! Clip files always carry a ground-truth waveform. The loader drops it for
//! unlabeled entries, so the trainer's view of those clips is a bare
//! [`Clip`]; their manifest heart rates go to [`AuditLabels`], which only
//! feed reporting.

use std::fs;
use std::path::Path;

use pulse_core::model::Clip;
use pulse_core::signal::BandConfig;
use pulse_core::synth::{gen_clip, DatasetConfig, DatasetManifest, Split};
use pulse_core::train::{AuditLabels, LabeledSample, TrainingData};

use crate::error::{Error, Result};
use crate::{format, manifest};

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub data: TrainingData,
    pub audit: AuditLabels,
}

/// An unlabeled clip as the trainer sees it.
pub type UnlabeledSample = Clip;

pub fn load(dir: &Path, band: &BandConfig) -> Result<LoadedDataset> {
    let manifest = manifest::read(&dir.join(manifest::FILE_NAME))?;
    let mut data = TrainingData::default();
    let mut audit = AuditLabels::default();
    for e in &manifest.entries {
        let path = dir.join(&e.path);
        let (clip, truth) = format::read_clip_as(&path, &e.clip_id)?;
        if e.split == Split::TrainUnlabeled {
            drop(truth);
            audit.bpm_by_id.push((e.clip_id.clone(), e.hr_bpm));
            data.unlabeled.push(clip);
            continue;
        }
        let hr = band
            .class_of_bpm(e.hr_bpm)
            .ok_or_else(|| Error::Config(format!("clip {}: hr_bpm {} outside the band", e.clip_id, e.hr_bpm)))?;
        let sample = LabeledSample { clip, truth, hr };
        match e.split {
            Split::TrainLabeled => data.labeled.push(sample),
            Split::Validation => data.validation.push(sample),
            Split::Test => data.test.push(sample),
            Split::TrainUnlabeled => unreachable!(),
        }
    }
    Ok(LoadedDataset { manifest, data, audit })
}

/// Writes every planned clip and the manifest under `dir`.
pub fn generate(dir: &Path, cfg: &DatasetConfig) -> Result<DatasetManifest> {
    let plan = cfg.plan()?;
    let clips_dir = dir.join("clips");
    fs::create_dir_all(&clips_dir).map_err(|e| Error::io(&clips_dir, e))?;
    let mut manifest = DatasetManifest::default();
    for p in plan {
        let g = gen_clip(&p.spec, &p.entry.clip_id, &cfg.band)?;
        if g.saturated() {
            log::warn!(
                "clip {}: {:.1}% of samples clamped to [0, 1]",
                p.entry.clip_id,
                100.0 * g.clamped_fraction
            );
        }
        format::write_clip(&dir.join(&p.entry.path), &g.clip, &g.truth)?;
        manifest.entries.push(p.entry);
    }
    manifest::write(&dir.join(manifest::FILE_NAME), &manifest)?;
    Ok(manifest)
}
