//! Signal CSV: header `id,fps,samples`, one signal per row, samples
//! separated by single spaces.

use std::fs;
use std::path::Path;

use pulse_core::signal::{hr_class_of_psd, ipr, psd_probe, snr, BandConfig, BvpSignal, DEFAULT_IPR_STEP};

use crate::error::{Error, Result};
use crate::format;
use crate::rundir::{na, SIGNALS_FILE};

pub const SIGNALS_HEADER: &str = "id,fps,samples";
pub const SCORE_HEADER: &str = "id,hr_bpm,snr,ipr";

pub fn to_csv(signals: &[(String, BvpSignal)]) -> String {
    let mut out = String::from(SIGNALS_HEADER);
    out.push('\n');
    for (id, s) in signals {
        let samples: Vec<String> = s.samples().iter().map(|v| v.to_string()).collect();
        out.push_str(&format!("{id},{},{}\n", s.fps(), samples.join(" ")));
    }
    out
}

pub fn parse_csv(text: &str, path: &Path) -> Result<Vec<(String, BvpSignal)>> {
    let bad = |line: usize, reason: String| Error::Csv {
        path: path.to_path_buf(),
        reason: format!("line {line}: {reason}"),
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        None => return Ok(Vec::new()),
        Some((_, h)) if h.trim() == SIGNALS_HEADER => {}
        Some((i, h)) => return Err(bad(i + 1, format!("header {h:?}, expected {SIGNALS_HEADER:?}"))),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let mut cols = line.splitn(3, ',');
        let (Some(id), Some(fps), Some(samples)) = (cols.next(), cols.next(), cols.next()) else {
            return Err(bad(i + 1, "expected 3 columns".into()));
        };
        let fps: f64 = fps.trim().parse().map_err(|e| bad(i + 1, format!("fps: {e}")))?;
        let samples = samples
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(i + 1, format!("sample: {e}")))?;
        let sig = BvpSignal::new(samples, fps).map_err(|e| bad(i + 1, e.to_string()))?;
        out.push((id.to_string(), sig));
    }
    Ok(out)
}

/// One scored signal; `None` fields mark a prediction with no band power.
#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub id: String,
    pub hr_bpm: Option<u32>,
    pub snr: Option<f64>,
    pub ipr: Option<f64>,
}

pub fn score(id: &str, signal: &BvpSignal, band: &BandConfig) -> Score {
    let psd = psd_probe(signal, band).ok();
    let hr = psd.as_ref().and_then(|p| hr_class_of_psd(p, band).ok());
    Score {
        id: id.to_string(),
        hr_bpm: hr.map(|h| h.bpm),
        snr: psd.as_ref().and_then(|p| snr(p, band).ok()),
        ipr: ipr(signal, band, DEFAULT_IPR_STEP).ok(),
    }
}

pub fn scores_csv(scores: &[Score]) -> String {
    let mut out = String::from(SCORE_HEADER);
    out.push('\n');
    for s in scores {
        let hr = s.hr_bpm.map_or("NA".to_string(), |b| b.to_string());
        out.push_str(&format!("{},{},{},{}\n", s.id, hr, na(s.snr), na(s.ipr)));
    }
    out
}

/// Loads the signals behind a score input: a run directory (its final
/// pseudo-label waveforms), a PCB1 clip (its ground-truth pulse), or a
/// signal CSV.
pub fn load_input(path: &Path) -> Result<Vec<(String, BvpSignal)>> {
    if path.is_dir() {
        let file = path.join(SIGNALS_FILE);
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        return parse_csv(&text, &file);
    }
    if path.extension().is_some_and(|e| e == "pcb") {
        let (clip, truth) = format::read_clip(path)?;
        return Ok(vec![(clip.id().to_string(), truth)]);
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, path)
}
