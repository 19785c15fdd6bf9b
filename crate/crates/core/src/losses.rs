//! Supervised and consistency losses on the tape.
//!
//! The PSD of a prediction becomes a distribution over heart-rate classes by
//! plain normalization (divide by the band total). Cross-entropy against a
//! hard class gives `l_ce`, the negative Pearson correlation gives `l_p`,
//! and the consistency loss is the cross-entropy between the distributions
//! predicted from a shifted and a reversed copy of the same clip.

use rand::Rng;

use crate::augment::{strong_augment, weak_augment};
use crate::autodiff::{Tape, Var};
use crate::model::{BoundParams, Clip};
use crate::signal::{BandConfig, HrClass, ProbeBank};
use crate::{Error, Result};

/// Loss weights and augmentation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Weight of the Pearson term in `l_s = l_ce + λ·l_p`.
    pub lambda: f64,
    pub band: BandConfig,
    /// Largest circular shift of the weak augmentation, in frames.
    pub weak_shift_max: usize,
    /// Treat the weakly augmented branch as a fixed target.
    pub stop_gradient_weak: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            band: BandConfig::default(),
            weak_shift_max: 10,
            stop_gradient_weak: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self, frames: usize) -> Result<()> {
        self.band.validate()?;
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidConfig(alloc::format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.weak_shift_max < 1 || self.weak_shift_max >= frames {
            return Err(Error::InvalidConfig(alloc::format!(
                "weak_shift_max must be in [1, {frames}), got {}",
                self.weak_shift_max
            )));
        }
        Ok(())
    }
}

/// Normalized class PSD of a `[T]` prediction.
pub fn psd_distribution(tape: &mut Tape, predicted: Var, bank: &ProbeBank) -> Result<Var> {
    if tape.value(predicted).len() != bank.len() {
        return Err(Error::LengthMismatch {
            left: tape.value(predicted).len(),
            right: bank.len(),
        });
    }
    let rows = bank.n_freqs();
    let centered = tape.mean_center(predicted)?;
    let a = tape.project(centered, bank.cos_rows().clone(), rows)?;
    let b = tape.project(centered, bank.sin_rows().clone(), rows)?;
    let a2 = tape.mul(a, a)?;
    let b2 = tape.mul(b, b)?;
    let power = tape.add(a2, b2)?;
    let total: f64 = tape.value(power).iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateSignal);
    }
    tape.normalize_sum(power)
}

/// `−log p[hr]` with `p` the normalized PSD of the prediction.
pub fn l_ce(tape: &mut Tape, predicted: Var, hr: HrClass, bank: &ProbeBank) -> Result<Var> {
    let p = psd_distribution(tape, predicted, bank)?;
    let pc = tape.select(p, hr.class_index)?;
    let log_pc = tape.log(pc).map_err(|_| Error::DegenerateSignal)?;
    tape.scale(log_pc, -1.0)
}

/// `1 − r` for the Pearson correlation `r` between prediction and target.
pub fn l_p(tape: &mut Tape, predicted: Var, truth: Var) -> Result<Var> {
    if tape.value(predicted).len() != tape.value(truth).len() {
        return Err(Error::LengthMismatch {
            left: tape.value(predicted).len(),
            right: tape.value(truth).len(),
        });
    }
    let a = tape.mean_center(predicted)?;
    let b = tape.mean_center(truth)?;
    if tape.value(a).iter().all(|&v| v == 0.0) || tape.value(b).iter().all(|&v| v == 0.0) {
        return Err(Error::ConstantSignal);
    }
    let ab = tape.mul(a, b)?;
    let aa = tape.mul(a, a)?;
    let bb = tape.mul(b, b)?;
    let num = tape.sum(ab)?;
    let saa = tape.sum(aa)?;
    let sbb = tape.sum(bb)?;
    let na = tape.sqrt(saa)?;
    let nb = tape.sqrt(sbb)?;
    let den = tape.mul(na, nb)?;
    let r = tape.div(num, den)?;
    let one = tape.scalar_constant(1.0)?;
    tape.sub(one, r)
}

/// `l_ce + λ·l_p`.
pub fn l_s(
    tape: &mut Tape,
    predicted: Var,
    truth: Var,
    hr: HrClass,
    lambda: f64,
    bank: &ProbeBank,
) -> Result<Var> {
    let ce = l_ce(tape, predicted, hr, bank)?;
    if lambda == 0.0 {
        return Ok(ce);
    }
    let p = l_p(tape, predicted, truth)?;
    let wp = tape.scale(p, lambda)?;
    tape.add(ce, wp)
}

/// Cross-entropy `−Σ q_w·log q_s` between the class distributions predicted
/// from a weakly (shifted) and a strongly (reversed) augmented copy of `clip`.
pub fn l_c<R: Rng + ?Sized>(
    tape: &mut Tape,
    params: &BoundParams,
    clip: &Clip,
    cfg: &LossConfig,
    bank: &ProbeBank,
    rng: &mut R,
) -> Result<Var> {
    let (weak, _) = weak_augment(clip, cfg.weak_shift_max, rng);
    let strong = strong_augment(clip);
    let yw = params.forward(tape, &weak)?;
    let ys = params.forward(tape, &strong)?;
    let mut qw = psd_distribution(tape, yw, bank)?;
    if cfg.stop_gradient_weak {
        qw = tape.detach(qw)?;
    }
    let qs = psd_distribution(tape, ys, bank)?;
    consistency_ce(tape, qw, qs)
}

/// `−Σ target·log pred`; a zero entry in `pred` is a degenerate prediction.
pub fn consistency_ce(tape: &mut Tape, target: Var, pred: Var) -> Result<Var> {
    let log_q = tape.log(pred).map_err(|_| Error::DegenerateSignal)?;
    let prod = tape.mul(target, log_q)?;
    let s = tape.sum(prod)?;
    tape.scale(s, -1.0)
}
