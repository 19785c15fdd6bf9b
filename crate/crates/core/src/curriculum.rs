//! Pseudo-label scoring and curriculum selection.
//!
//! Every epoch the frozen model predicts a waveform for each unlabeled clip.
//! Each prediction is scored by a quality criterion (band SNR by default),
//! and the top `k = ⌊R·N_un⌋` records are admitted to the next epoch's
//! supervised set, where `R` follows a linear schedule over epochs.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::math;
use crate::model::{forward, Clip, ModelParams};
use crate::signal::{hr_class_of_psd, ipr, snr, BandConfig, BvpSignal, HrClass, ProbeBank, DEFAULT_IPR_STEP};
use crate::{Error, Result};

/// Slack added before flooring `R·N_un`, so that products such as
/// `0.5 * 96` that are exact in decimal are not lost to rounding.
pub const K_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RatioDirection {
    /// `m + n·e/E`
    Increasing,
    /// `(m + n) − n·e/E`
    Decreasing,
    /// A constant ratio.
    Fixed(f64),
}

/// Selection-ratio schedule over `e_total` epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurriculumSchedule {
    pub m: f64,
    pub n: f64,
    pub e_total: usize,
    pub direction: RatioDirection,
}

impl CurriculumSchedule {
    /// 20% at the first epoch rising to 80% at the last.
    pub fn increasing(e_total: usize) -> Self {
        Self {
            m: 0.2,
            n: 0.6,
            e_total,
            direction: RatioDirection::Increasing,
        }
    }

    /// 80% at the first epoch falling to 20% at the last.
    pub fn decreasing(e_total: usize) -> Self {
        Self {
            direction: RatioDirection::Decreasing,
            ..Self::increasing(e_total)
        }
    }

    pub fn fixed(ratio: f64, e_total: usize) -> Self {
        Self {
            direction: RatioDirection::Fixed(ratio),
            ..Self::increasing(e_total)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fixed_ok = match self.direction {
            RatioDirection::Fixed(r) => (0.0..=1.0).contains(&r),
            _ => true,
        };
        if !(self.m >= 0.0 && self.n >= 0.0 && self.m + self.n <= 1.0 + 1e-12)
            || self.e_total < 1
            || !fixed_ok
        {
            return Err(Error::InvalidConfig(alloc::format!("invalid curriculum schedule {self:?}")));
        }
        Ok(())
    }

    /// Selection ratio at epoch `e_j`, `0 <= e_j <= e_total`.
    pub fn ratio_at(&self, e_j: usize) -> Result<f64> {
        if e_j > self.e_total {
            return Err(Error::EpochOutOfRange {
                epoch: e_j,
                total: self.e_total,
            });
        }
        let progress = e_j as f64 / self.e_total as f64;
        Ok(match self.direction {
            RatioDirection::Increasing => self.m + self.n * progress,
            RatioDirection::Decreasing => (self.m + self.n) - self.n * progress,
            RatioDirection::Fixed(r) => r,
        })
    }
}

/// `⌊R·N⌋`.
pub fn k_for(ratio: f64, n_unlabeled: usize) -> usize {
    math::floor(ratio * n_unlabeled as f64 + K_SLACK).max(0.0) as usize
}

/// Quality criterion used to rank pseudo-labels; higher is better for both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CriterionKind {
    #[default]
    Snr,
    /// `1 − IPR`.
    NegIpr,
}

/// How pseudo-labels are admitted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectionPolicy {
    /// Top `⌊R(e)·N_un⌋` by criterion.
    Curriculum(CurriculumSchedule),
    /// Every record whose criterion value is at least `tau`.
    Threshold(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelRecord {
    pub clip_id: String,
    pub predicted: BvpSignal,
    /// `None` when the prediction carries no band power.
    pub hr: Option<HrClass>,
    pub snr: f64,
    pub criterion_value: f64,
    pub selected: bool,
    pub epoch: usize,
}

impl PseudoLabelRecord {
    /// Degenerate predictions are never selectable.
    pub fn eligible(&self) -> bool {
        self.hr.is_some()
    }
}

/// Criterion value of a prediction; degenerate predictions score 0.
pub fn criterion(kind: CriterionKind, predicted: &BvpSignal, band: &BandConfig) -> f64 {
    let psd = match crate::signal::psd_probe(predicted, band) {
        Ok(p) => p,
        Err(_) => return 0.0,
    };
    match kind {
        CriterionKind::Snr => snr(&psd, band).unwrap_or(0.0),
        CriterionKind::NegIpr => ipr(predicted, band, DEFAULT_IPR_STEP).map_or(0.0, |v| 1.0 - v),
    }
}

/// Scores one predicted waveform.
pub fn score_prediction(
    clip_id: &str,
    predicted: BvpSignal,
    bank: &ProbeBank,
    kind: CriterionKind,
    epoch: usize,
) -> PseudoLabelRecord {
    let band = *bank.band();
    let scored = bank.psd(predicted.samples()).and_then(|psd| {
        let hr = hr_class_of_psd(&psd, &band)?;
        let s = snr(&psd, &band)?;
        Ok((hr, s))
    });
    let (hr, snr_value, criterion_value) = match scored {
        Ok((hr, s)) => {
            let c = match kind {
                CriterionKind::Snr => s,
                CriterionKind::NegIpr => ipr(&predicted, &band, DEFAULT_IPR_STEP).map_or(0.0, |v| 1.0 - v),
            };
            (Some(hr), s, c)
        }
        Err(_) => (None, 0.0, 0.0),
    };
    PseudoLabelRecord {
        clip_id: clip_id.into(),
        predicted,
        hr,
        snr: snr_value,
        criterion_value,
        selected: false,
        epoch,
    }
}

/// Predicts and scores every unlabeled clip with frozen parameters.
pub fn generate_pseudo_labels(
    params: &ModelParams,
    unlabeled: &[Clip],
    bank: &ProbeBank,
    kind: CriterionKind,
    epoch: usize,
) -> Result<Vec<PseudoLabelRecord>> {
    unlabeled
        .iter()
        .map(|clip| {
            let predicted = forward(params, clip)?;
            Ok(score_prediction(clip.id(), predicted, bank, kind, epoch))
        })
        .collect()
}

// Criterion descending, then clip id ascending.
fn rank_order(a: &PseudoLabelRecord, b: &PseudoLabelRecord) -> Ordering {
    b.criterion_value
        .total_cmp(&a.criterion_value)
        .then_with(|| a.clip_id.cmp(&b.clip_id))
}

/// Marks the `k` best eligible records as selected and returns their
/// indices in rank order. All other records are marked unselected.
pub fn select_top_k(records: &mut [PseudoLabelRecord], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..records.len()).filter(|&i| records[i].eligible()).collect();
    order.sort_by(|&i, &j| rank_order(&records[i], &records[j]));
    order.truncate(k);
    records.iter_mut().for_each(|r| r.selected = false);
    for &i in &order {
        records[i].selected = true;
    }
    order
}

/// Applies a selection policy at epoch `e_j`.
pub fn select(records: &mut [PseudoLabelRecord], policy: &SelectionPolicy, e_j: usize) -> Result<Vec<usize>> {
    match policy {
        SelectionPolicy::Curriculum(sched) => {
            let k = k_for(sched.ratio_at(e_j)?, records.len());
            Ok(select_top_k(records, k))
        }
        SelectionPolicy::Threshold(tau) => {
            let k = records
                .iter()
                .filter(|r| r.eligible() && r.criterion_value >= *tau)
                .count();
            Ok(select_top_k(records, k))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;

    fn record(id: &str, value: f64) -> PseudoLabelRecord {
        PseudoLabelRecord {
            clip_id: id.into(),
            predicted: BvpSignal::new(vec![0.0, 1.0], 30.0).unwrap(),
            hr: Some(HrClass { class_index: 0, bpm: 40 }),
            snr: value,
            criterion_value: value,
            selected: false,
            epoch: 0,
        }
    }

    #[test]
    fn paper_schedule_endpoints() {
        let s = CurriculumSchedule::increasing(20);
        assert!((s.ratio_at(0).unwrap() - 0.2).abs() < 1e-15);
        assert!((s.ratio_at(20).unwrap() - 0.8).abs() < 1e-15);
        assert!((s.ratio_at(10).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(s.ratio_at(21), Err(Error::EpochOutOfRange { epoch: 21, total: 20 }));
        let d = CurriculumSchedule::decreasing(20);
        assert!((d.ratio_at(0).unwrap() - 0.8).abs() < 1e-15);
        assert!((d.ratio_at(20).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(CurriculumSchedule::fixed(0.5, 3).ratio_at(1).unwrap(), 0.5);
    }

    #[test]
    fn schedule_validation() {
        assert!(CurriculumSchedule::increasing(1).validate().is_ok());
        assert!(CurriculumSchedule::increasing(0).validate().is_err());
        let bad = CurriculumSchedule {
            m: 0.5,
            n: 0.6,
            ..CurriculumSchedule::increasing(5)
        };
        assert!(bad.validate().is_err());
        assert!(CurriculumSchedule::fixed(1.5, 5).validate().is_err());
    }

    #[test]
    fn k_is_floor() {
        assert_eq!(k_for(0.2, 100), 20);
        assert_eq!(k_for(0.2, 96), 19);
        assert_eq!(k_for(0.5, 96), 48);
        assert_eq!(k_for(0.8, 96), 76);
        assert_eq!(k_for(0.0, 96), 0);
    }

    #[test]
    fn ties_break_by_clip_id() {
        let mut recs: Vec<_> = (0..10).rev().map(|i| record(&format!("c{i}"), 0.5)).collect();
        let sel = select_top_k(&mut recs, 3);
        let ids: Vec<_> = sel.iter().map(|&i| recs[i].clip_id.as_str()).collect();
        assert_eq!(ids, ["c0", "c1", "c2"]);
        assert_eq!(recs.iter().filter(|r| r.selected).count(), 3);
    }

    #[test]
    fn degenerate_records_never_selected() {
        let mut recs = vec![record("a", 0.9), record("b", 0.8)];
        recs[0].hr = None;
        let sel = select_top_k(&mut recs, 2);
        assert_eq!(sel, vec![1]);
        assert!(!recs[0].selected);
    }

    #[test]
    fn threshold_policy() {
        let mut recs = vec![record("a", 0.9), record("b", 0.3), record("c", 0.7)];
        let sel = select(&mut recs, &SelectionPolicy::Threshold(0.5), 0).unwrap();
        assert_eq!(sel, vec![0, 2]);
    }

    #[test]
    fn zero_k_selects_nothing() {
        let mut recs = vec![record("a", 0.9)];
        assert!(select_top_k(&mut recs, 0).is_empty());
    }
}
