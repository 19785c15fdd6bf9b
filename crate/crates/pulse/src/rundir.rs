//! Run directory outputs.
//!
//! | file                  | content                                              |
//! |-----------------------|------------------------------------------------------|
//! | `epochs.csv`          | one row per epoch, header [`EPOCHS_HEADER`]          |
//! | `pseudo_labels.csv`   | one row per pseudo-label per epoch, [`PSEUDO_HEADER`] |
//! | `pseudo_signals.csv`  | final-epoch pseudo-label waveforms, signal CSV       |
//! | `metrics.json`        | run settings and validation/test metrics             |
//! | `checkpoint.{bin,json}` | trained parameters                                 |
//!
//! Undefined values are written as `NA`.

use std::fs;
use std::path::Path;

use pulse_core::train::{EpochReport, Metrics, RunOutcome, TrainConfig};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::{checkpoint, signals};

pub const EPOCHS_FILE: &str = "epochs.csv";
pub const PSEUDO_FILE: &str = "pseudo_labels.csv";
pub const SIGNALS_FILE: &str = "pseudo_signals.csv";
pub const METRICS_FILE: &str = "metrics.json";

pub const EPOCHS_HEADER: &str = "epoch,l_s,l_c,k,mean_snr,val_mae,val_rmse,val_r,val_sd,unlabeled_mae";
pub const PSEUDO_HEADER: &str = "epoch,clip_id,hr_bpm,snr,selected";

pub fn na(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => x.to_string(),
        _ => "NA".into(),
    }
}

fn epoch_row(r: &EpochReport) -> String {
    let v = r.validation.as_ref();
    [
        r.epoch.to_string(),
        na(Some(r.losses.l_s)),
        na(Some(r.losses.l_c)),
        r.k.to_string(),
        na(r.mean_snr),
        na(v.map(|m| m.mae)),
        na(v.map(|m| m.rmse)),
        na(v.and_then(|m| m.r)),
        na(v.map(|m| m.sd)),
        na(r.unlabeled_mae),
    ]
    .join(",")
}

pub fn epochs_csv(reports: &[EpochReport]) -> String {
    let mut out = String::from(EPOCHS_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&epoch_row(r));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsJson {
    pub mae: f64,
    pub rmse: f64,
    pub r: Option<f64>,
    pub sd: f64,
    pub n: usize,
}

impl From<&Metrics> for MetricsJson {
    fn from(m: &Metrics) -> Self {
        Self {
            mae: m.mae,
            rmse: m.rmse,
            r: m.r,
            sd: m.sd,
            n: m.n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub protocol: String,
    pub seed: u64,
    pub e_total: usize,
    pub e_pre: usize,
    pub schedule: String,
    pub criterion: String,
    pub lambda: f64,
    pub learning_rate: f64,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub validation: Option<MetricsJson>,
    pub test: Option<MetricsJson>,
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes all run outputs to `dir`, creating it if needed.
pub fn write(dir: &Path, outcome: &RunOutcome, summary: &RunSummary) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join(EPOCHS_FILE), &epochs_csv(&outcome.train.reports))?;

    let mut pseudo = String::from(PSEUDO_HEADER);
    pseudo.push('\n');
    for r in &outcome.train.pseudo_log {
        let hr = r.hr_bpm.map_or("NA".to_string(), |b| b.to_string());
        pseudo.push_str(&format!("{},{},{},{},{}\n", r.epoch, r.clip_id, hr, na(Some(r.snr)), r.selected));
    }
    write_file(&dir.join(PSEUDO_FILE), &pseudo)?;

    let sigs: Vec<_> = outcome
        .train
        .final_records
        .iter()
        .map(|r| (r.clip_id.clone(), r.predicted.clone()))
        .collect();
    write_file(&dir.join(SIGNALS_FILE), &signals::to_csv(&sigs))?;

    let json = serde_json::to_string_pretty(summary).expect("summary serializes");
    write_file(&dir.join(METRICS_FILE), &(json + "\n"))?;
    checkpoint::save(dir, &outcome.train.params)
}

pub fn summary(outcome: &RunOutcome, cfg: &TrainConfig, schedule: &str, n_labeled: usize, n_unlabeled: usize) -> RunSummary {
    RunSummary {
        protocol: outcome.protocol.as_str().into(),
        seed: cfg.seed,
        e_total: cfg.e_total,
        e_pre: cfg.e_pre,
        schedule: schedule.into(),
        criterion: crate::config::criterion_label(cfg.criterion).into(),
        lambda: cfg.loss.lambda,
        learning_rate: cfg.learning_rate,
        n_labeled,
        n_unlabeled,
        validation: outcome.validation.as_ref().map(MetricsJson::from),
        test: outcome.test.as_ref().map(MetricsJson::from),
    }
}
