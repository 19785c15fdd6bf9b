//! Synthetic clips carrying a known quasi-periodic pulse.
//!
//! Each pixel is a mid-grey level plus, on "skin" pixels, the pulse scaled by
//! a per-channel gain, plus an optional common-mode flicker that hits every
//! pixel and channel equally, plus Gaussian noise. The flicker is the
//! nuisance a model has to learn to cancel; because it is common-mode while
//! the pulse is not, a channel combination can remove it.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::math;
use crate::model::{Clip, ClipDims};
use crate::rng::{indexed_substream, Stream};
use crate::signal::{BandConfig, BvpSignal};
use crate::train::{AuditLabels, LabeledSample, TrainingData};
use crate::{Error, Result};

/// Fraction of clamped samples above which a clip is flagged.
pub const CLAMP_WARN_FRACTION: f64 = 0.1;

/// Common-mode flicker tone.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Distractor {
    pub freq: f64,
    pub amp: f64,
}

/// Parameters of one synthetic clip.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub dims: ClipDims,
    pub fps: f64,
    pub hr_bpm: u32,
    pub pulse_amp: f64,
    /// Weight of the second harmonic relative to the fundamental.
    pub harmonic_amp: f64,
    /// Per-pixel, per-channel sensor noise.
    pub noise_std: f64,
    /// Per-frame illumination noise shared by every pixel and channel.
    pub common_noise_std: f64,
    pub distractor: Distractor,
    /// Fraction of pixels that carry the pulse.
    pub skin_fraction: f64,
    /// Peak relative drift of the instantaneous frequency.
    pub freq_jitter: f64,
    /// Pulse gain per channel (length `C`).
    pub channel_gains: Vec<f64>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            dims: ClipDims {
                frames: 300,
                width: 8,
                height: 8,
                channels: 3,
            },
            fps: 30.0,
            hr_bpm: 75,
            pulse_amp: 0.05,
            harmonic_amp: 0.3,
            noise_std: 0.05,
            common_noise_std: 0.0,
            distractor: Distractor::default(),
            skin_fraction: 0.6,
            freq_jitter: 0.01,
            channel_gains: default_gains(3),
            seed: 0,
        }
    }
}

/// Green-dominant gains for RGB, unit gains otherwise.
pub fn default_gains(channels: usize) -> Vec<f64> {
    if channels == 3 {
        vec![0.4, 1.0, 0.6]
    } else {
        vec![1.0; channels]
    }
}

impl SynthSpec {
    pub fn validate(&self, band: &BandConfig) -> Result<()> {
        let d = self.dims;
        let err = |m: String| Err(Error::InvalidConfig(m));
        if d.frames < 2 || d.width == 0 || d.height == 0 || d.channels == 0 {
            return err(format!("clip dims must be >= 1 (frames >= 2): {d:?}"));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return err(format!("fps must be > 0, got {}", self.fps));
        }
        if band.class_of_bpm(self.hr_bpm).is_none() {
            return err(format!("hr_bpm {} outside the heart-rate band", self.hr_bpm));
        }
        let amps = [
            self.pulse_amp,
            self.harmonic_amp,
            self.noise_std,
            self.common_noise_std,
            self.distractor.amp,
        ];
        if amps.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return err("amplitudes and noise_std must be >= 0".into());
        }
        if !(self.skin_fraction > 0.0 && self.skin_fraction <= 1.0) {
            return err(format!("skin_fraction must be in (0, 1], got {}", self.skin_fraction));
        }
        if !(0.0..0.5).contains(&self.freq_jitter) {
            return err(format!("freq_jitter must be in [0, 0.5), got {}", self.freq_jitter));
        }
        if self.channel_gains.len() != d.channels {
            return err(format!(
                "channel_gains has {} entries for {} channels",
                self.channel_gains.len(),
                d.channels
            ));
        }
        Ok(())
    }
}

/// A generated clip with its ground-truth waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedClip {
    pub clip: Clip,
    pub truth: BvpSignal,
    /// Fraction of pixel samples that hit 0 or 1.
    pub clamped_fraction: f64,
}

impl GeneratedClip {
    /// More than [`CLAMP_WARN_FRACTION`] of the samples were clamped.
    pub fn saturated(&self) -> bool {
        self.clamped_fraction > CLAMP_WARN_FRACTION
    }

    /// Rounds pixels and truth to single precision, the precision clip
    /// files store.
    pub fn to_single_precision(self) -> Result<Self> {
        let round = |v: &[f64]| v.iter().map(|&x| x as f32 as f64).collect::<Vec<_>>();
        let c = &self.clip;
        Ok(Self {
            clip: Clip::new(c.id(), c.dims(), c.fps(), round(c.data()))?,
            truth: BvpSignal::new(round(self.truth.samples()), self.truth.fps())?,
            clamped_fraction: self.clamped_fraction,
        })
    }
}

/// Ground-truth pulse `sin φ(t) + h·sin 2φ(t)` with a drifting instantaneous
/// frequency `f·(1 + jitter(t))`. The drift is two sinusoids completing one
/// and two cycles over the clip, so its mean over the clip is exactly zero.
pub fn pulse_waveform(spec: &SynthSpec, phases: [f64; 3]) -> Vec<f64> {
    let f = spec.hr_bpm as f64 / 60.0;
    let frames = spec.dims.frames;
    let dur = frames as f64 / spec.fps;
    let j = spec.freq_jitter;
    let [p0, p1, p2] = phases;
    // ∫ jitter: closed form of the two drift sinusoids
    let integral = |t: f64| {
        let w1 = 2.0 * PI / dur;
        let w2 = 4.0 * PI / dur;
        j * (-0.6 / w1 * (math::cos(w1 * t + p1) - math::cos(p1)) - 0.4 / w2 * (math::cos(w2 * t + p2) - math::cos(p2)))
    };
    (0..frames)
        .map(|i| {
            let t = i as f64 / spec.fps;
            let phi = 2.0 * PI * f * (t + integral(t)) + p0;
            math::sin(phi) + spec.harmonic_amp * math::sin(2.0 * phi)
        })
        .collect()
}

pub fn gen_clip(spec: &SynthSpec, id: &str, band: &BandConfig) -> Result<GeneratedClip> {
    spec.validate(band)?;
    let d = spec.dims;
    let mut rng = indexed_substream(spec.seed, Stream::Synth, 0);
    let mut phase = || rng.random_range(0.0..2.0 * PI);
    let phases = [phase(), phase(), phase()];
    let dphase = phase();
    let bvp = pulse_waveform(spec, phases);

    // skin mask: the first round(frac·W·H) pixels of a seeded permutation
    let pixels = d.width * d.height;
    let n_skin = (math::round(spec.skin_fraction * pixels as f64) as usize).clamp(1, pixels);
    let mut order: Vec<usize> = (0..pixels).collect();
    for i in (1..pixels).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut skin = vec![false; pixels];
    order[..n_skin].iter().for_each(|&p| skin[p] = true);

    let normal = |std: f64| Normal::new(0.0, std).map_err(|e| Error::InvalidConfig(format!("{e}")));
    let noise = normal(spec.noise_std)?;
    let common = normal(spec.common_noise_std)?;
    let mut data = Vec::with_capacity(d.numel());
    let mut clamped = 0usize;
    for (t, &b) in bvp.iter().enumerate() {
        let mut flicker = spec.distractor.amp * math::sin(2.0 * PI * spec.distractor.freq * t as f64 / spec.fps + dphase);
        if spec.common_noise_std > 0.0 {
            flicker += common.sample(&mut rng);
        }
        for &is_skin in &skin {
            for &gain in &spec.channel_gains {
                let pulse = if is_skin { spec.pulse_amp * gain * b } else { 0.0 };
                let n = if spec.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                let v = 0.5 + pulse + flicker + n;
                if !(0.0..=1.0).contains(&v) {
                    clamped += 1;
                }
                data.push(v.clamp(0.0, 1.0));
            }
        }
    }
    let clamped_fraction = clamped as f64 / data.len() as f64;
    Ok(GeneratedClip {
        clip: Clip::new(id, d, spec.fps, data)?,
        truth: BvpSignal::new(bvp, spec.fps)?,
        clamped_fraction,
    })
}

/// Dataset split of a clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    TrainLabeled,
    TrainUnlabeled,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::TrainLabeled => "train_labeled",
            Split::TrainUnlabeled => "train_unlabeled",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "train_labeled" => Split::TrainLabeled,
            "train_unlabeled" => Split::TrainUnlabeled,
            "validation" => Split::Validation,
            "test" => Split::Test,
            _ => return None,
        })
    }
}

/// Which training clips carry labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DataProtocol {
    /// Every training clip labeled.
    Full,
    /// Only the labeled fraction; the rest of the training pool is dropped.
    Partial,
    /// Labeled fraction plus the rest as unlabeled clips.
    #[default]
    Semi,
}

/// One row of a dataset manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub clip_id: String,
    pub path: String,
    pub hr_bpm: u32,
    pub has_label: bool,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

/// Entry counts per split: labeled, unlabeled, validation, test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SplitCounts {
    pub train_labeled: usize,
    pub train_unlabeled: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.train_labeled + self.train_unlabeled + self.validation + self.test
    }
}

impl DatasetManifest {
    /// Ids unique and label flags consistent with splits.
    pub fn validate(&self) -> Result<()> {
        let mut ids: Vec<&str> = self.entries.iter().map(|e| e.clip_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig(format!("duplicate clip id {}", w[0])));
        }
        for e in &self.entries {
            if e.has_label == (e.split == Split::TrainUnlabeled) {
                return Err(Error::InvalidConfig(format!(
                    "clip {}: has_label={} inconsistent with split {}",
                    e.clip_id,
                    e.has_label,
                    e.split.as_str()
                )));
            }
        }
        Ok(())
    }

    pub fn counts(&self) -> SplitCounts {
        let mut c = SplitCounts::default();
        for e in &self.entries {
            match e.split {
                Split::TrainLabeled => c.train_labeled += 1,
                Split::TrainUnlabeled => c.train_unlabeled += 1,
                Split::Validation => c.validation += 1,
                Split::Test => c.test += 1,
            }
        }
        c
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

/// Settings of a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub seed: u64,
    /// Size of the training pool (labeled + unlabeled).
    pub n_train: usize,
    pub labeled_fraction: f64,
    pub n_validation: usize,
    pub n_test: usize,
    pub protocol: DataProtocol,
    pub hr_min: u32,
    pub hr_max: u32,
    /// Template for per-clip specs; `hr_bpm`, `distractor` and `seed` are drawn per clip.
    pub template: SynthSpec,
    /// Flicker amplitude is drawn uniformly from `[0, distractor_amp_max]`.
    pub distractor_amp_max: f64,
    /// Noise multiplier for the unlabeled part of the pool (domain shift).
    pub unlabeled_noise_scale: f64,
    pub band: BandConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_train: 120,
            labeled_fraction: 0.2,
            n_validation: 24,
            n_test: 24,
            protocol: DataProtocol::Semi,
            hr_min: 40,
            hr_max: 180,
            template: SynthSpec {
                common_noise_std: 0.1,
                ..SynthSpec::default()
            },
            distractor_amp_max: 0.06,
            unlabeled_noise_scale: 1.0,
            band: BandConfig::default(),
        }
    }
}

/// A planned clip: manifest row plus the spec that generates it.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedClip {
    pub entry: ManifestEntry,
    pub spec: SynthSpec,
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hr_min > self.hr_max
            || self.band.class_of_bpm(self.hr_min).is_none()
            || self.band.class_of_bpm(self.hr_max).is_none()
        {
            return Err(Error::InvalidConfig(format!(
                "hr range [{}, {}] must lie within the heart-rate band",
                self.hr_min, self.hr_max
            )));
        }
        if !(0.0..=1.0).contains(&self.labeled_fraction) {
            return Err(Error::InvalidConfig(format!(
                "labeled_fraction must be in [0, 1], got {}",
                self.labeled_fraction
            )));
        }
        if !(self.distractor_amp_max >= 0.0) || !(self.unlabeled_noise_scale >= 0.0) {
            return Err(Error::InvalidConfig("distractor_amp_max and unlabeled_noise_scale must be >= 0".into()));
        }
        let mut probe = self.template.clone();
        probe.hr_bpm = self.hr_min;
        probe.validate(&self.band)
    }

    pub fn n_labeled(&self) -> usize {
        math::floor(self.labeled_fraction * self.n_train as f64 + 1e-9) as usize
    }

    /// Deterministic clip plan. Clip `i`'s content depends only on the seed
    /// and `i`, so the same seed yields identical clips under every
    /// protocol; only labels and split membership differ.
    pub fn plan(&self) -> Result<Vec<PlannedClip>> {
        self.validate()?;
        let n_lab = self.n_labeled();
        let total = self.n_train + self.n_validation + self.n_test;
        let mut out = Vec::with_capacity(total);
        for i in 0..total {
            let pool_split = if i < n_lab {
                Split::TrainLabeled
            } else if i < self.n_train {
                Split::TrainUnlabeled
            } else if i < self.n_train + self.n_validation {
                Split::Validation
            } else {
                Split::Test
            };
            let split = match (pool_split, self.protocol) {
                (Split::TrainUnlabeled, DataProtocol::Full) => Split::TrainLabeled,
                (Split::TrainUnlabeled, DataProtocol::Partial) => continue,
                (s, _) => s,
            };

            let mut rng = indexed_substream(self.seed, Stream::Split, i as u64);
            let hr_bpm = rng.random_range(self.hr_min..=self.hr_max);
            let distractor = Distractor {
                freq: rng.random_range(self.band.f_low..self.band.f_high),
                amp: rng.random_range(0.0..=self.distractor_amp_max),
            };
            let mut spec = self.template.clone();
            spec.hr_bpm = hr_bpm;
            spec.distractor = distractor;
            spec.seed = rng.random();
            if pool_split == Split::TrainUnlabeled {
                spec.noise_std *= self.unlabeled_noise_scale;
            }
            let clip_id = format!("clip_{i:04}");
            let path = format!("clips/{clip_id}.pcb");
            out.push(PlannedClip {
                entry: ManifestEntry {
                    clip_id,
                    path,
                    hr_bpm,
                    has_label: split != Split::TrainUnlabeled,
                    split,
                },
                spec,
            });
        }
        Ok(out)
    }

    /// Generates every planned clip in memory at single precision, grouped
    /// by split, so the result equals what a written dataset loads back as.
    /// The hidden heart rates of unlabeled clips go to the audit labels.
    pub fn generate(&self) -> Result<(TrainingData, AuditLabels)> {
        let mut data = TrainingData::default();
        let mut audit = AuditLabels::default();
        for p in self.plan()? {
            let g = gen_clip(&p.spec, &p.entry.clip_id, &self.band)?.to_single_precision()?;
            if p.entry.split == Split::TrainUnlabeled {
                audit.bpm_by_id.push((p.entry.clip_id, p.entry.hr_bpm));
                data.unlabeled.push(g.clip);
                continue;
            }
            let hr = self
                .band
                .class_of_bpm(p.entry.hr_bpm)
                .ok_or_else(|| Error::InvalidConfig(format!("hr {} outside the band", p.entry.hr_bpm)))?;
            let sample = LabeledSample {
                clip: g.clip,
                truth: g.truth,
                hr,
            };
            match p.entry.split {
                Split::TrainLabeled => data.labeled.push(sample),
                Split::Validation => data.validation.push(sample),
                _ => data.test.push(sample),
            }
        }
        Ok((data, audit))
    }
}
