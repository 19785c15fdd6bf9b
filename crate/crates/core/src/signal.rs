//! Band-limited spectral scoring of pulse waveforms.
//!
//! Power is evaluated by direct projection onto the heart-rate class
//! frequencies `(base_bpm + c) / 60` Hz rather than by a padded FFT, so
//! each class sits exactly on a probe and the map stays a fixed linear
//! operator followed by a square (see [`ProbeBank`]). Signals are
//! mean-centered before projection.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::math;
use crate::{Error, Result};

/// Default IPR probe spacing outside the band, in Hz (one BPM).
pub const DEFAULT_IPR_STEP: f64 = 1.0 / 60.0;

/// A sampled blood-volume-pulse waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct BvpSignal {
    samples: Vec<f64>,
    fps: f64,
}

impl BvpSignal {
    pub fn new(samples: Vec<f64>, fps: f64) -> Result<Self> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::InvalidConfig(alloc::format!("fps must be > 0, got {fps}")));
        }
        if samples.len() < 2 {
            return Err(Error::LengthMismatch {
                left: samples.len(),
                right: 2,
            });
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(Self { samples, fps })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// Time-reversed copy.
    pub fn reversed(&self) -> Self {
        let mut samples = self.samples.clone();
        samples.reverse();
        Self {
            samples,
            fps: self.fps,
        }
    }

    /// Circularly rotated copy: `out[t] = x[(t + shift) mod T]`.
    pub fn rotated(&self, shift: usize) -> Self {
        let mut samples = self.samples.clone();
        let n = samples.len();
        samples.rotate_left(shift % n);
        Self {
            samples,
            fps: self.fps,
        }
    }

    /// Positive or negative rescaling plus offset, `k*x + c`.
    pub fn affine(&self, k: f64, c: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|x| k * x + c).collect(),
            fps: self.fps,
        }
    }
}

/// Heart-rate band and SNR window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandConfig {
    /// Lower band limit in Hz.
    pub f_low: f64,
    /// Upper band limit in Hz.
    pub f_high: f64,
    /// Half-width of the SNR window around the spectral peak, in Hz.
    pub delta_f: f64,
}

impl Default for BandConfig {
    fn default() -> Self {
        Self {
            f_low: 0.67,
            f_high: 3.0,
            delta_f: 0.1,
        }
    }
}

impl BandConfig {
    pub fn new(f_low: f64, f_high: f64, delta_f: f64) -> Result<Self> {
        let band = Self {
            f_low,
            f_high,
            delta_f,
        };
        band.validate()?;
        Ok(band)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.f_low.is_finite()
            && self.f_high.is_finite()
            && self.delta_f.is_finite()
            && self.f_low > 0.0
            && self.f_low < self.f_high
            && self.delta_f > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidBand(alloc::format!("{self:?}")))
        }
    }

    /// Number of one-BPM classes covering the band.
    pub fn n_classes(&self) -> usize {
        math::round((self.f_high - self.f_low) * 60.0) as usize + 1
    }

    /// BPM of class 0.
    pub fn base_bpm(&self) -> u32 {
        math::round(self.f_low * 60.0) as u32
    }

    pub fn class_freq(&self, class_index: usize) -> f64 {
        (self.base_bpm() as f64 + class_index as f64) / 60.0
    }

    pub fn class_freqs(&self) -> Vec<f64> {
        (0..self.n_classes()).map(|c| self.class_freq(c)).collect()
    }

    /// Class-count half-width of the SNR window (6 for the default 0.1 Hz).
    pub fn window_half_width(&self) -> usize {
        math::floor(self.delta_f * 60.0 + 1e-9) as usize
    }

    pub fn class_of_bpm(&self, bpm: u32) -> Option<HrClass> {
        let base = self.base_bpm();
        if bpm < base {
            return None;
        }
        let class_index = (bpm - base) as usize;
        (class_index < self.n_classes()).then_some(HrClass { class_index, bpm })
    }

    pub fn class_of_index(&self, class_index: usize) -> Option<HrClass> {
        (class_index < self.n_classes()).then(|| HrClass {
            class_index,
            bpm: self.base_bpm() + class_index as u32,
        })
    }
}

/// Integer heart-rate class; class 0 is `base_bpm` (40 BPM by default).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HrClass {
    pub class_index: usize,
    pub bpm: u32,
}

/// Power at each heart-rate class frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdDistribution {
    pub power: Vec<f64>,
    pub class_freqs: Vec<f64>,
}

impl PsdDistribution {
    pub fn total(&self) -> f64 {
        self.power.iter().sum()
    }

    /// Argmax over the band; ties go to the lower class index.
    pub fn peak_class(&self) -> Option<usize> {
        argmax(&self.power)
    }
}

pub(crate) fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Precomputed cosine and sine rows, one per class frequency, for a fixed
/// signal length and frame rate.
///
/// Row `c` of `cos` holds `cos(2π f_c t / fps)` for `t = 0..len`.
#[derive(Debug, Clone)]
pub struct ProbeBank {
    len: usize,
    fps: f64,
    band: BandConfig,
    cos: Arc<[f64]>,
    sin: Arc<[f64]>,
}

impl ProbeBank {
    pub fn new(len: usize, fps: f64, band: &BandConfig) -> Self {
        Self::with_freqs(len, fps, band, &band.class_freqs())
    }

    fn with_freqs(len: usize, fps: f64, band: &BandConfig, freqs: &[f64]) -> Self {
        let mut cos = Vec::with_capacity(freqs.len() * len);
        let mut sin = Vec::with_capacity(freqs.len() * len);
        for &f in freqs {
            for t in 0..len {
                let angle = 2.0 * PI * f * t as f64 / fps;
                cos.push(math::cos(angle));
                sin.push(math::sin(angle));
            }
        }
        Self {
            len,
            fps,
            band: *band,
            cos: cos.into(),
            sin: sin.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn band(&self) -> &BandConfig {
        &self.band
    }

    pub fn n_freqs(&self) -> usize {
        if self.len == 0 {
            0
        } else {
            self.cos.len() / self.len
        }
    }

    /// Cosine bank as a row-major `n_freqs × len` matrix.
    pub fn cos_rows(&self) -> &Arc<[f64]> {
        &self.cos
    }

    /// Sine bank as a row-major `n_freqs × len` matrix.
    pub fn sin_rows(&self) -> &Arc<[f64]> {
        &self.sin
    }

    pub fn matches(&self, len: usize, fps: f64, band: &BandConfig) -> bool {
        self.len == len && self.fps == fps && self.band == *band
    }

    /// `A_c² + B_c²` for an already centered signal.
    pub fn power(&self, centered: &[f64]) -> Vec<f64> {
        debug_assert_eq!(centered.len(), self.len);
        self.cos
            .chunks_exact(self.len)
            .zip(self.sin.chunks_exact(self.len))
            .map(|(c_row, s_row)| {
                let a: f64 = c_row.iter().zip(centered).map(|(c, x)| c * x).sum();
                let b: f64 = s_row.iter().zip(centered).map(|(s, x)| s * x).sum();
                a * a + b * b
            })
            .collect()
    }

    /// Class PSD of a raw signal (centered internally).
    pub fn psd(&self, samples: &[f64]) -> Result<PsdDistribution> {
        if samples.len() != self.len {
            return Err(Error::LengthMismatch {
                left: samples.len(),
                right: self.len,
            });
        }
        let centered = centered_checked(samples)?;
        Ok(PsdDistribution {
            power: self.power(&centered),
            class_freqs: self.band.class_freqs(),
        })
    }
}

/// Subtracts the mean.
pub fn mean_center(samples: &[f64]) -> Vec<f64> {
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    samples.iter().map(|x| x - mean).collect()
}

fn centered_checked(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let centered = mean_center(samples);
    if centered.iter().all(|&x| x == 0.0) {
        return Err(Error::DegenerateSignal);
    }
    Ok(centered)
}

/// Class-frequency PSD of a pulse waveform.
pub fn psd_probe(signal: &BvpSignal, band: &BandConfig) -> Result<PsdDistribution> {
    ProbeBank::new(signal.len(), signal.fps(), band).psd(signal.samples())
}

/// Heart-rate class at the PSD peak.
pub fn hr_class_of(signal: &BvpSignal, band: &BandConfig) -> Result<HrClass> {
    hr_class_of_psd(&psd_probe(signal, band)?, band)
}

pub fn hr_class_of_psd(psd: &PsdDistribution, band: &BandConfig) -> Result<HrClass> {
    let peak = psd.peak_class().ok_or(Error::DegenerateSignal)?;
    if !(psd.power[peak] > 0.0) {
        return Err(Error::DegenerateSignal);
    }
    band.class_of_index(peak).ok_or(Error::DegenerateSignal)
}

/// Fraction of band power within `±delta_f` of the peak class. The window is
/// truncated at the band edges.
pub fn snr(psd: &PsdDistribution, band: &BandConfig) -> Result<f64> {
    let total = psd.total();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateSignal);
    }
    let peak = psd.peak_class().ok_or(Error::DegenerateSignal)?;
    let half = band.window_half_width();
    let lo = peak.saturating_sub(half);
    let hi = (peak + half).min(psd.power.len() - 1);
    let near: f64 = psd.power[lo..=hi].iter().sum();
    Ok(near / total)
}

/// Fraction of total power lying outside the heart-rate band.
///
/// In-band power is the class PSD; out-of-band power is probed on the grid
/// `j * full_grid_step` for `0 ≤ f ≤ fps/2`, skipping grid points inside the
/// class-frequency span.
pub fn ipr(signal: &BvpSignal, band: &BandConfig, full_grid_step: f64) -> Result<f64> {
    if !(full_grid_step.is_finite() && full_grid_step > 0.0) {
        return Err(Error::InvalidConfig(alloc::format!(
            "ipr grid step must be > 0, got {full_grid_step}"
        )));
    }
    let centered = centered_checked(signal.samples())?;
    let in_band: f64 = ProbeBank::new(signal.len(), signal.fps(), band)
        .power(&centered)
        .iter()
        .sum();

    let lo = band.class_freq(0);
    let hi = band.class_freq(band.n_classes() - 1);
    let nyquist = signal.fps() / 2.0;
    let tol = 1e-9;
    let out_freqs: Vec<f64> = (0..)
        .map(|j| j as f64 * full_grid_step)
        .take_while(|&f| f <= nyquist + tol)
        .filter(|&f| f < lo - tol || f > hi + tol)
        .collect();
    let out_band: f64 = ProbeBank::with_freqs(signal.len(), signal.fps(), band, &out_freqs)
        .power(&centered)
        .iter()
        .sum();

    let total = in_band + out_band;
    if !(total > 0.0) {
        return Err(Error::DegenerateSignal);
    }
    Ok(out_band / total)
}

/// Pearson correlation of two pulse waveforms.
pub fn pearson_r(a: &BvpSignal, b: &BvpSignal) -> Result<f64> {
    pearson(a.samples(), b.samples())
}

/// Pearson correlation of two equal-length series.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ConstantSignal);
    }
    Ok((sab / (math::sqrt(saa) * math::sqrt(sbb))).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn tone(freq: f64, fps: f64, len: usize) -> BvpSignal {
        let s = (0..len)
            .map(|t| math::sin(2.0 * PI * freq * t as f64 / fps))
            .collect();
        BvpSignal::new(s, fps).unwrap()
    }

    fn flat(band: &BandConfig) -> PsdDistribution {
        PsdDistribution {
            power: vec![1.0; band.n_classes()],
            class_freqs: band.class_freqs(),
        }
    }

    #[test]
    fn default_band_has_141_classes() {
        let band = BandConfig::default();
        assert_eq!(band.n_classes(), 141);
        assert_eq!(band.base_bpm(), 40);
        assert_eq!(band.class_of_bpm(180).unwrap().class_index, 140);
        assert!(band.class_of_bpm(181).is_none());
        assert!(band.class_of_bpm(39).is_none());
        assert_eq!(band.window_half_width(), 6);
    }

    #[test]
    fn tone_at_90_bpm_is_class_50() {
        let band = BandConfig::default();
        let psd = psd_probe(&tone(1.5, 30.0, 300), &band).unwrap();
        assert_eq!(psd.peak_class(), Some(50));
        assert!((psd.class_freqs[50] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn tone_at_70_and_band_edge() {
        let band = BandConfig::default();
        let hr = hr_class_of(&tone(70.0 / 60.0, 30.0, 300), &band).unwrap();
        assert_eq!((hr.class_index, hr.bpm), (30, 70));
        let hr = hr_class_of(&tone(40.0 / 60.0, 30.0, 300), &band).unwrap();
        assert_eq!((hr.class_index, hr.bpm), (0, 40));
    }

    #[test]
    fn flat_psd_snr_interior_and_edge() {
        let band = BandConfig::default();
        // all ties -> peak at class 0 -> window 0..=6
        let v = snr(&flat(&band), &band).unwrap();
        assert!((v - 7.0 / 141.0).abs() < 1e-15);

        // a tiny bump moves the peak to the interior: full 13-class window
        let mut psd = flat(&band);
        psd.power[70] = 1.0 + 1e-12;
        let v = snr(&psd, &band).unwrap();
        assert!((v - 13.0 / 141.0).abs() < 1e-12);
    }

    #[test]
    fn constant_signal_is_degenerate() {
        let band = BandConfig::default();
        let s = BvpSignal::new(vec![3.0; 50], 30.0).unwrap();
        assert_eq!(psd_probe(&s, &band), Err(Error::DegenerateSignal));
        assert_eq!(hr_class_of(&s, &band), Err(Error::DegenerateSignal));
        assert_eq!(ipr(&s, &band, DEFAULT_IPR_STEP), Err(Error::DegenerateSignal));
    }

    #[test]
    fn non_finite_rejected() {
        assert_eq!(
            BvpSignal::new(vec![0.0, f64::NAN, 1.0], 30.0),
            Err(Error::NonFiniteInput)
        );
        let band = BandConfig::default();
        let bank = ProbeBank::new(3, 30.0, &band);
        assert_eq!(bank.psd(&[0.0, f64::INFINITY, 1.0]), Err(Error::NonFiniteInput));
    }

    #[test]
    fn zero_power_snr_is_degenerate() {
        let band = BandConfig::default();
        let psd = PsdDistribution {
            power: vec![0.0; 141],
            class_freqs: band.class_freqs(),
        };
        assert_eq!(snr(&psd, &band), Err(Error::DegenerateSignal));
        assert_eq!(hr_class_of_psd(&psd, &band), Err(Error::DegenerateSignal));
    }

    #[test]
    fn ipr_in_and_out_of_band() {
        let band = BandConfig::default();
        let v = ipr(&tone(1.2, 30.0, 300), &band, DEFAULT_IPR_STEP).unwrap();
        assert!(v <= 0.02, "{v}");
        let v = ipr(&tone(4.0, 30.0, 300), &band, DEFAULT_IPR_STEP).unwrap();
        assert!(v >= 0.98, "{v}");
    }

    #[test]
    fn pearson_basic_cases() {
        let x = tone(1.1, 30.0, 120);
        assert!((pearson_r(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let y = x.affine(-1.0, 5.0);
        assert!((pearson_r(&x, &y).unwrap() + 1.0).abs() < 1e-12);
        let c = BvpSignal::new(vec![1.0; 120], 30.0).unwrap();
        assert_eq!(pearson_r(&x, &c), Err(Error::ConstantSignal));
        assert!(matches!(
            pearson(&[1.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), Some(1));
        assert_eq!(argmax(&[]), None);
    }
}
