//! Semi-supervised training loop, Adam, and heart-rate metrics.
//!
//! The loop follows two stages. Pre-training epochs fit the labeled clips
//! only; after the last of them the unlabeled clips are pseudo-labeled and a
//! first subset is selected. Each later epoch trains on the labeled clips
//! merged with the currently selected pseudo-labeled clips, adds the
//! consistency loss over unlabeled clips, then re-labels and re-selects for
//! the next epoch.
//!
//! Randomness comes from per-purpose substreams of one seed (see
//! [`crate::rng`]), so dropping the unlabeled pool leaves the labeled batch
//! order and augmentation draws untouched.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::autodiff::Tape;
use crate::curriculum::{
    generate_pseudo_labels, select, CriterionKind, CurriculumSchedule, PseudoLabelRecord, SelectionPolicy,
};
use crate::losses::{l_c, l_s, LossConfig};
use crate::math;
use crate::model::{forward, Clip, ModelParams, ModelSpec};
use crate::rng::{substream, Stream, StreamRng};
use crate::signal::{hr_class_of_psd, pearson, BvpSignal, HrClass, ProbeBank};
use crate::{Error, Result};

/// Consecutive non-finite epochs tolerated before a run is declared diverged.
pub const MAX_NONFINITE_EPOCHS: usize = 3;

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: alloc::vec![0.0; n],
            v: alloc::vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update. A non-finite gradient, or an update that would make a
    /// parameter non-finite, leaves both parameters and state untouched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::LengthMismatch {
                left: grads.len(),
                right: self.m.len(),
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        let t = self.t + 1;
        let c1 = 1.0 - libm::pow(self.beta1, t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, t as f64);
        let mut m = self.m.clone();
        let mut v = self.v.clone();
        let mut next = params.to_vec();
        for i in 0..next.len() {
            let g = grads[i];
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            next[i] -= lr * m_hat / (math::sqrt(v_hat) + self.eps);
        }
        if next.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteValue { op: "adam_step" });
        }
        params.copy_from_slice(&next);
        self.m = m;
        self.v = v;
        self.t = t;
        Ok(())
    }
}

/// Which clips the consistency loss covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConsistencyOn {
    None,
    Labeled,
    Unlabeled,
    #[default]
    Both,
}

impl ConsistencyOn {
    fn labeled(self) -> bool {
        matches!(self, Self::Labeled | Self::Both)
    }

    fn unlabeled(self) -> bool {
        matches!(self, Self::Unlabeled | Self::Both)
    }
}

/// Switch to a second learning rate from a given epoch on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrDecay {
    pub from_epoch: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Index of the last epoch; epochs run `0..=e_total`.
    pub e_total: usize,
    /// Labeled-only epochs before the first pseudo-labeling.
    pub e_pre: usize,
    /// Batch size for fully and partially supervised runs.
    pub batch_supervised: usize,
    /// Batch size (labeled and unlabeled each) for semi-supervised runs.
    pub batch_semi: usize,
    pub learning_rate: f64,
    pub lr_decay: Option<LrDecay>,
    pub loss: LossConfig,
    pub selection: SelectionPolicy,
    pub criterion: CriterionKind,
    pub consistency_on: ConsistencyOn,
    pub model: ModelSpec,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let e_total = 20;
        Self {
            e_total,
            e_pre: 1,
            batch_supervised: 4,
            batch_semi: 2,
            learning_rate: 1e-4,
            lr_decay: None,
            loss: LossConfig::default(),
            selection: SelectionPolicy::Curriculum(CurriculumSchedule::increasing(e_total)),
            criterion: CriterionKind::Snr,
            consistency_on: ConsistencyOn::Both,
            model: ModelSpec::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Defaults sized for the small CPU model and synthetic clips: a larger
    /// step size and a shorter run than [`TrainConfig::default`].
    pub fn desk() -> Self {
        Self {
            learning_rate: 1e-3,
            ..Self::default()
        }
        .with_e_total(12)
    }

    pub fn validate(&self, frames: usize) -> Result<()> {
        let err = |m: String| Err(Error::InvalidConfig(m));
        if self.e_pre < 1 || self.e_pre > self.e_total {
            return err(format!("e_pre must be in [1, e_total={}], got {}", self.e_total, self.e_pre));
        }
        if self.batch_supervised == 0 || self.batch_semi == 0 {
            return err("batch sizes must be >= 1".into());
        }
        let lr_ok = |lr: f64| lr.is_finite() && lr > 0.0;
        if !lr_ok(self.learning_rate) || self.lr_decay.is_some_and(|d| !lr_ok(d.learning_rate)) {
            return err("learning rates must be > 0".into());
        }
        if let SelectionPolicy::Curriculum(s) = &self.selection {
            s.validate()?;
            if s.e_total != self.e_total {
                return err(format!(
                    "schedule e_total {} differs from training e_total {}",
                    s.e_total, self.e_total
                ));
            }
        }
        self.loss.validate(frames)?;
        self.model.validate()
    }

    /// Replaces the curriculum schedule's direction, keeping `e_total`.
    pub fn with_schedule(mut self, sched: CurriculumSchedule) -> Self {
        self.selection = SelectionPolicy::Curriculum(CurriculumSchedule {
            e_total: self.e_total,
            ..sched
        });
        self
    }

    /// Sets `e_total` for both the loop and a curriculum schedule.
    pub fn with_e_total(mut self, e_total: usize) -> Self {
        self.e_total = e_total;
        if let SelectionPolicy::Curriculum(s) = &mut self.selection {
            s.e_total = e_total;
        }
        self
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_decay {
            Some(d) if epoch >= d.from_epoch => d.learning_rate,
            _ => self.learning_rate,
        }
    }
}

/// A clip with its ground-truth waveform and heart-rate class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub clip: Clip,
    pub truth: BvpSignal,
    pub hr: HrClass,
}

/// Hidden heart rates of unlabeled clips, used only for reporting.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuditLabels {
    pub bpm_by_id: Vec<(String, u32)>,
}

impl AuditLabels {
    fn get(&self, id: &str) -> Option<u32> {
        self.bpm_by_id.iter().find(|(i, _)| i == id).map(|&(_, b)| b)
    }
}

/// HR error statistics over a set of clips, in BPM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    /// `None` when either series is constant.
    pub r: Option<f64>,
    /// Population standard deviation of the signed errors.
    pub sd: f64,
    pub n: usize,
}

impl Metrics {
    pub fn from_pairs(predicted: &[f64], truth: &[f64]) -> Result<Self> {
        if predicted.len() != truth.len() || predicted.is_empty() {
            return Err(Error::LengthMismatch {
                left: predicted.len(),
                right: truth.len(),
            });
        }
        let n = predicted.len() as f64;
        let errors: Vec<f64> = predicted.iter().zip(truth).map(|(p, t)| p - t).collect();
        let mae = errors.iter().map(|e| math::abs(*e)).sum::<f64>() / n;
        let rmse = math::sqrt(errors.iter().map(|e| e * e).sum::<f64>() / n);
        let mean_err = errors.iter().sum::<f64>() / n;
        let sd = math::sqrt(errors.iter().map(|e| (e - mean_err) * (e - mean_err)).sum::<f64>() / n);
        let r = pearson(predicted, truth).ok();
        Ok(Self {
            mae,
            rmse,
            r,
            sd,
            n: predicted.len(),
        })
    }
}

/// Estimated heart rate of a clip. An output with no band power falls on
/// class 0, matching the low-index tie rule.
pub fn estimate_bpm(params: &ModelParams, clip: &Clip, bank: &ProbeBank) -> Result<u32> {
    let out = forward(params, clip)?;
    let band = bank.band();
    Ok(match bank.psd(out.samples()).and_then(|p| hr_class_of_psd(&p, band)) {
        Ok(hr) => hr.bpm,
        Err(Error::DegenerateSignal) => band.base_bpm(),
        Err(e) => return Err(e),
    })
}

/// MAE, RMSE, Pearson r and SD of per-clip HR estimates.
pub fn evaluate(params: &ModelParams, set: &[LabeledSample], bank: &ProbeBank) -> Result<Metrics> {
    let mut pred = Vec::with_capacity(set.len());
    let mut truth = Vec::with_capacity(set.len());
    for s in set {
        pred.push(estimate_bpm(params, &s.clip, bank)? as f64);
        truth.push(s.hr.bpm as f64);
    }
    Metrics::from_pairs(&pred, &truth)
}

/// Losses and bookkeeping from one epoch of updates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpochLosses {
    /// Mean supervised loss per processed sample.
    pub l_s: f64,
    /// Mean consistency loss per processed clip (labeled and unlabeled).
    pub l_c: f64,
    pub steps: usize,
    /// Samples dropped because their prediction was degenerate.
    pub skipped: usize,
    /// Updates aborted on a non-finite loss or gradient.
    pub nonfinite_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub losses: EpochLosses,
    /// Pseudo-labels selected at the end of this epoch.
    pub k: usize,
    /// Mean SNR of the selected pseudo-labels.
    pub mean_snr: Option<f64>,
    pub validation: Option<Metrics>,
    /// MAE of pseudo-label HRs against the hidden unlabeled truth.
    pub unlabeled_mae: Option<f64>,
    pub learning_rate: f64,
}

/// A pseudo-label log row.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLogRow {
    pub epoch: usize,
    pub clip_id: String,
    pub hr_bpm: Option<u32>,
    pub snr: f64,
    pub criterion_value: f64,
    pub selected: bool,
}

impl From<&PseudoLabelRecord> for PseudoLogRow {
    fn from(r: &PseudoLabelRecord) -> Self {
        Self {
            epoch: r.epoch,
            clip_id: r.clip_id.clone(),
            hr_bpm: r.hr.map(|h| h.bpm),
            snr: r.snr,
            criterion_value: r.criterion_value,
            selected: r.selected,
        }
    }
}

struct Target<'a> {
    clip: &'a Clip,
    truth: &'a [f64],
    hr: HrClass,
}

/// Owns the parameters and optimizer state of one run.
pub struct Trainer {
    cfg: TrainConfig,
    params: ModelParams,
    adam: Adam,
    bank: ProbeBank,
    order_rng: StreamRng,
    unlabeled_rng: StreamRng,
    aug_rng: StreamRng,
    unlabeled_queue: Vec<usize>,
    batch: usize,
}

impl Trainer {
    /// `batch` is the per-step batch size for this run.
    pub fn new(cfg: TrainConfig, frames: usize, fps: f64, batch: usize) -> Result<Self> {
        cfg.validate(frames)?;
        let params = ModelParams::init(&cfg.model, cfg.seed)?;
        let adam = Adam::new(cfg.model.n_params());
        let bank = ProbeBank::new(frames, fps, &cfg.loss.band);
        Ok(Self {
            order_rng: substream(cfg.seed, Stream::LabeledOrder),
            unlabeled_rng: substream(cfg.seed, Stream::UnlabeledOrder),
            aug_rng: substream(cfg.seed, Stream::Augment),
            unlabeled_queue: Vec::new(),
            batch: batch.max(1),
            cfg,
            params,
            adam,
            bank,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    pub fn bank(&self) -> &ProbeBank {
        &self.bank
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// One labeled-only epoch minimizing `l_s`, plus `l_c` on the labeled
    /// clips when enabled.
    pub fn pretrain_epoch(&mut self, labeled: &[LabeledSample], epoch: usize) -> Result<EpochLosses> {
        let targets: Vec<Target> = labeled
            .iter()
            .map(|s| Target {
                clip: &s.clip,
                truth: s.truth.samples(),
                hr: s.hr,
            })
            .collect();
        self.run_epoch(&targets, &[], epoch)
    }

    /// One epoch over the labeled clips merged with the selected
    /// pseudo-labeled clips, with consistency over `unlabeled`.
    pub fn semi_epoch(
        &mut self,
        labeled: &[LabeledSample],
        unlabeled: &[Clip],
        selected: &[PseudoLabelRecord],
        epoch: usize,
    ) -> Result<EpochLosses> {
        let mut targets: Vec<Target> = labeled
            .iter()
            .map(|s| Target {
                clip: &s.clip,
                truth: s.truth.samples(),
                hr: s.hr,
            })
            .collect();
        for rec in selected.iter().filter(|r| r.selected) {
            let (Some(hr), Some(clip)) = (rec.hr, unlabeled.iter().find(|c| c.id() == rec.clip_id)) else {
                continue;
            };
            targets.push(Target {
                clip,
                truth: rec.predicted.samples(),
                hr,
            });
        }
        self.run_epoch(&targets, unlabeled, epoch)
    }

    fn run_epoch(&mut self, targets: &[Target], unlabeled: &[Clip], epoch: usize) -> Result<EpochLosses> {
        let mut order: Vec<usize> = (0..targets.len()).collect();
        order.shuffle(&mut self.order_rng);
        let use_unlabeled = self.cfg.consistency_on.unlabeled() && !unlabeled.is_empty();
        let lr = self.cfg.lr_at(epoch);

        let mut acc = EpochLosses::default();
        let (mut ls_sum, mut ls_n, mut lc_sum, mut lc_n) = (0.0, 0usize, 0.0, 0usize);
        for chunk in order.chunks(self.batch) {
            let batch: Vec<&Target> = chunk.iter().map(|&i| &targets[i]).collect();
            let unl: Vec<&Clip> = if use_unlabeled {
                (0..self.batch).map(|_| &unlabeled[self.next_unlabeled(unlabeled.len())]).collect()
            } else {
                Vec::new()
            };
            match self.step(&batch, &unl, lr) {
                Ok(s) => {
                    acc.steps += 1;
                    acc.skipped += s.skipped;
                    ls_sum += s.ls_sum;
                    ls_n += s.ls_n;
                    lc_sum += s.lc_sum;
                    lc_n += s.lc_n;
                }
                Err(Error::NonFiniteGradient | Error::NonFiniteValue { .. }) => acc.nonfinite_steps += 1,
                Err(e) => return Err(e),
            }
        }
        acc.l_s = if ls_n > 0 { ls_sum / ls_n as f64 } else { f64::NAN };
        acc.l_c = if lc_n > 0 { lc_sum / lc_n as f64 } else { 0.0 };
        Ok(acc)
    }

    fn next_unlabeled(&mut self, n: usize) -> usize {
        if self.unlabeled_queue.is_empty() {
            self.unlabeled_queue = (0..n).collect();
            self.unlabeled_queue.shuffle(&mut self.unlabeled_rng);
            self.unlabeled_queue.reverse();
        }
        self.unlabeled_queue.pop().unwrap_or(0)
    }

    fn step(&mut self, batch: &[&Target], unlabeled: &[&Clip], lr: f64) -> Result<StepStats> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, true)?;
        let loss_cfg = self.cfg.loss;
        let cons_labeled = self.cfg.consistency_on.labeled();
        let mut stats = StepStats::default();
        let (mut sup, mut cons) = (Vec::new(), Vec::new());

        for t in batch {
            let res = (|| {
                let pred = bound.forward(&mut tape, t.clip)?;
                let truth = tape.constant(t.truth.to_vec(), &[t.truth.len()])?;
                l_s(&mut tape, pred, truth, t.hr, loss_cfg.lambda, &self.bank)
            })();
            match res {
                Ok(v) => sup.push(v),
                Err(Error::DegenerateSignal | Error::ConstantSignal) => stats.skipped += 1,
                Err(e) => return Err(e),
            }
            if cons_labeled {
                match l_c(&mut tape, &bound, t.clip, &loss_cfg, &self.bank, &mut self.aug_rng) {
                    Ok(v) => cons.push(v),
                    Err(Error::DegenerateSignal) => stats.skipped += 1,
                    Err(e) => return Err(e),
                }
            }
        }
        let mut cons_unl = Vec::new();
        for clip in unlabeled {
            match l_c(&mut tape, &bound, clip, &loss_cfg, &self.bank, &mut self.aug_rng) {
                Ok(v) => cons_unl.push(v),
                Err(Error::DegenerateSignal) => stats.skipped += 1,
                Err(e) => return Err(e),
            }
        }

        let mut total = None;
        for group in [&sup, &cons, &cons_unl] {
            if group.is_empty() {
                continue;
            }
            let mut s = group[0];
            for &v in &group[1..] {
                s = tape.add(s, v)?;
            }
            let mean = tape.scale(s, 1.0 / group.len() as f64)?;
            total = Some(match total {
                None => mean,
                Some(t) => tape.add(t, mean)?,
            });
        }
        let Some(total) = total else {
            return Ok(stats);
        };

        let grads = tape.backward(total)?;
        let g = bound.flat_grad(&tape, &grads);
        let mut flat = self.params.flatten();
        self.adam.step(&mut flat, &g, lr)?;
        self.params.set_flat(&flat)?;

        stats.ls_sum = sup.iter().map(|&v| tape.scalar(v)).sum();
        stats.ls_n = sup.len();
        stats.lc_sum = cons.iter().chain(&cons_unl).map(|&v| tape.scalar(v)).sum();
        stats.lc_n = cons.len() + cons_unl.len();
        Ok(stats)
    }

    /// Pseudo-labels every unlabeled clip with the current parameters.
    pub fn pseudo_label(&self, unlabeled: &[Clip], epoch: usize) -> Result<Vec<PseudoLabelRecord>> {
        generate_pseudo_labels(&self.params, unlabeled, &self.bank, self.cfg.criterion, epoch)
    }
}

#[derive(Debug, Default)]
struct StepStats {
    ls_sum: f64,
    ls_n: usize,
    lc_sum: f64,
    lc_n: usize,
    skipped: usize,
}

/// Everything a training run produces.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub reports: Vec<EpochReport>,
    pub pseudo_log: Vec<PseudoLogRow>,
    /// Pseudo-labels from the last epoch (selected at `R(e_total)`).
    pub final_records: Vec<PseudoLabelRecord>,
}

/// Datasets handed to a run. Unlabeled clips carry no ground truth.
#[derive(Debug, Clone, Default)]
pub struct TrainingData {
    pub labeled: Vec<LabeledSample>,
    pub unlabeled: Vec<Clip>,
    pub validation: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
}

impl TrainingData {
    fn frame_info(&self) -> Result<(usize, f64)> {
        let first = self
            .labeled
            .first()
            .map(|s| &s.clip)
            .ok_or_else(|| Error::InvalidConfig("labeled set is empty".into()))?;
        let (frames, fps) = (first.frames(), first.fps());
        let all = self
            .labeled
            .iter()
            .chain(&self.validation)
            .chain(&self.test)
            .map(|s| &s.clip)
            .chain(&self.unlabeled);
        for c in all {
            if c.frames() != frames || c.fps() != fps {
                return Err(Error::InvalidConfig(format!(
                    "clip {} has {} frames at {} fps, expected {frames} at {fps}",
                    c.id(),
                    c.frames(),
                    c.fps()
                )));
            }
        }
        Ok((frames, fps))
    }
}

/// The full loop over labeled and unlabeled clips with batch size `batch`.
///
/// `audit` only feeds the `unlabeled_mae` column of the reports.
pub fn train(
    data: &TrainingData,
    cfg: &TrainConfig,
    batch: usize,
    audit: Option<&AuditLabels>,
) -> Result<TrainOutcome> {
    let (frames, fps) = data.frame_info()?;
    let mut trainer = Trainer::new(cfg.clone(), frames, fps, batch)?;
    let mut reports = Vec::with_capacity(cfg.e_total + 1);
    let mut pseudo_log = Vec::new();
    let mut records: Vec<PseudoLabelRecord> = Vec::new();
    let mut nonfinite_run = 0usize;

    for epoch in 0..=cfg.e_total {
        let losses = if epoch < cfg.e_pre {
            trainer.pretrain_epoch(&data.labeled, epoch)?
        } else {
            trainer.semi_epoch(&data.labeled, &data.unlabeled, &records, epoch)?
        };

        if losses.nonfinite_steps > 0 || !losses.l_s.is_finite() {
            nonfinite_run += 1;
            if nonfinite_run > MAX_NONFINITE_EPOCHS {
                return Err(Error::Diverged { epochs: nonfinite_run });
            }
        } else {
            nonfinite_run = 0;
        }

        let mut k = 0;
        let mut mean_snr = None;
        let mut unlabeled_mae = None;
        if epoch + 1 >= cfg.e_pre && !data.unlabeled.is_empty() {
            records = trainer.pseudo_label(&data.unlabeled, epoch)?;
            let chosen = select(&mut records, &cfg.selection, epoch)?;
            k = chosen.len();
            if k > 0 {
                mean_snr = Some(chosen.iter().map(|&i| records[i].snr).sum::<f64>() / k as f64);
            }
            pseudo_log.extend(records.iter().map(PseudoLogRow::from));
            unlabeled_mae = audit.and_then(|a| audit_mae(&records, a, trainer.bank()));
        }

        let validation = if data.validation.is_empty() {
            None
        } else {
            Some(evaluate(trainer.params(), &data.validation, trainer.bank())?)
        };
        reports.push(EpochReport {
            epoch,
            losses,
            k,
            mean_snr,
            validation,
            unlabeled_mae,
            learning_rate: cfg.lr_at(epoch),
        });
    }

    Ok(TrainOutcome {
        params: trainer.into_params(),
        reports,
        pseudo_log,
        final_records: records,
    })
}

fn audit_mae(records: &[PseudoLabelRecord], audit: &AuditLabels, bank: &ProbeBank) -> Option<f64> {
    let base = bank.band().base_bpm();
    let errs: Vec<f64> = records
        .iter()
        .filter_map(|r| {
            let truth = audit.get(&r.clip_id)?;
            let est = r.hr.map_or(base, |h| h.bpm);
            Some(math::abs(est as f64 - truth as f64))
        })
        .collect();
    (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64)
}

/// Training protocol of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// All training clips labeled; supervised loss only.
    Full,
    /// Labeled subset only; supervised loss only; unlabeled clips ignored.
    Partial,
    /// Labeled subset plus pseudo-labeled and consistency-regularized
    /// unlabeled clips.
    Semi,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Full => "full",
            Protocol::Partial => "partial",
            Protocol::Semi => "semi",
        }
    }
}

/// Result of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub protocol: Protocol,
    pub train: TrainOutcome,
    pub validation: Option<Metrics>,
    pub test: Option<Metrics>,
}

/// Trains under a protocol and evaluates on validation and test clips.
pub fn run(protocol: Protocol, data: &TrainingData, cfg: &TrainConfig, audit: Option<&AuditLabels>) -> Result<RunOutcome> {
    let mut cfg = cfg.clone();
    let batch = match protocol {
        Protocol::Full | Protocol::Partial => {
            cfg.consistency_on = ConsistencyOn::None;
            cfg.batch_supervised
        }
        Protocol::Semi => cfg.batch_semi,
    };
    let view;
    let data = match protocol {
        Protocol::Full if !data.unlabeled.is_empty() => {
            return Err(Error::InvalidConfig(
                "full protocol needs a dataset without unlabeled clips".into(),
            ))
        }
        Protocol::Semi if data.unlabeled.is_empty() => {
            return Err(Error::InvalidConfig("semi protocol needs unlabeled clips".into()))
        }
        Protocol::Partial => {
            view = TrainingData {
                unlabeled: Vec::new(),
                ..data.clone()
            };
            &view
        }
        _ => data,
    };
    let train = train(data, &cfg, batch, audit)?;
    let bank = {
        let (frames, fps) = data.frame_info()?;
        ProbeBank::new(frames, fps, &cfg.loss.band)
    };
    let eval = |set: &[LabeledSample]| -> Result<Option<Metrics>> {
        if set.is_empty() {
            Ok(None)
        } else {
            evaluate(&train.params, set, &bank).map(Some)
        }
    };
    let validation = eval(&data.validation)?;
    let test = eval(&data.test)?;
    Ok(RunOutcome {
        protocol,
        train,
        validation,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let mut adam = Adam::new(3);
        let mut p = alloc::vec![1.0, -2.0, 0.5];
        adam.step(&mut p, &[0.0; 3], 0.1).unwrap();
        assert_eq!(p, [1.0, -2.0, 0.5]);
    }

    #[test]
    fn adam_constant_gradient_steps_at_lr() {
        let mut adam = Adam::new(1);
        let mut p = alloc::vec![0.0];
        let mut prev = 0.0;
        for _ in 0..500 {
            adam.step(&mut p, &[3.0], 1e-3).unwrap();
            let step = prev - p[0];
            prev = p[0];
            assert!((step - 1e-3).abs() < 1e-8);
        }
    }

    #[test]
    fn adam_rejects_nonfinite() {
        let mut adam = Adam::new(2);
        let mut p = alloc::vec![1.0, 1.0];
        assert_eq!(adam.step(&mut p, &[f64::NAN, 0.0], 0.1), Err(Error::NonFiniteGradient));
        assert_eq!(p, [1.0, 1.0]);
        assert_eq!(adam.steps(), 0);
        let mut big = alloc::vec![f64::MAX, 1.0];
        assert_eq!(
            adam.step(&mut big, &[-1.0, 0.0], f64::MAX),
            Err(Error::NonFiniteValue { op: "adam_step" })
        );
        assert_eq!(big, [f64::MAX, 1.0]);
        assert_eq!(adam.steps(), 0);
    }

    #[test]
    fn adam_descends_quadratic_bowl() {
        let mut adam = Adam::new(2);
        let mut x = alloc::vec![1.0, 1.0];
        let f = |x: &[f64]| x[0] * x[0] + x[1] * x[1];
        let mut last = f(&x);
        for _ in 0..100 {
            let g = [2.0 * x[0], 2.0 * x[1]];
            adam.step(&mut x, &g, 1e-2).unwrap();
            let now = f(&x);
            assert!(now < last);
            last = now;
        }
    }

    #[test]
    fn metrics_perfect_and_biased() {
        let truth = [60.0, 75.0, 90.0, 120.0];
        let m = Metrics::from_pairs(&truth, &truth).unwrap();
        assert_eq!((m.mae, m.rmse, m.sd), (0.0, 0.0, 0.0));
        assert!((m.r.unwrap() - 1.0).abs() < 1e-12);

        let biased: Vec<f64> = truth.iter().map(|t| t + 2.0).collect();
        let m = Metrics::from_pairs(&biased, &truth).unwrap();
        assert!((m.mae - 2.0).abs() < 1e-12);
        assert!((m.rmse - 2.0).abs() < 1e-12);
        assert!(m.sd.abs() < 1e-12);
        assert!((m.r.unwrap() - 1.0).abs() < 1e-12);

        let m = Metrics::from_pairs(&[70.0; 4], &truth).unwrap();
        assert_eq!(m.r, None);
    }

    #[test]
    fn config_validation() {
        let cfg = TrainConfig::default();
        assert!(cfg.validate(300).is_ok());
        assert!(TrainConfig { e_pre: 0, ..cfg.clone() }.validate(300).is_err());
        assert!(TrainConfig { e_pre: 21, ..cfg.clone() }.validate(300).is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..cfg.clone() }.validate(300).is_err());
        let mismatched = TrainConfig {
            e_total: 10,
            ..cfg.clone()
        };
        assert!(mismatched.validate(300).is_err());
        assert!(cfg.with_e_total(10).validate(300).is_ok());
    }
}
