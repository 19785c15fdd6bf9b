//! TOML run configuration.
//!
//! Every section and key is optional; missing keys take the defaults shown
//! by `pulse defaults`. Unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use pulse_core::curriculum::{CriterionKind, CurriculumSchedule, SelectionPolicy};
use pulse_core::losses::LossConfig;
use pulse_core::model::{ClipDims, ModelSpec};
use pulse_core::signal::BandConfig;
use pulse_core::synth::{default_gains, DataProtocol, DatasetConfig, SynthSpec};
use pulse_core::train::{ConsistencyOn, LrDecay, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub dataset: DatasetSection,
    pub band: BandSection,
    pub train: TrainSection,
    pub model: ModelSection,
    pub paths: PathsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// full | partial | semi
    pub protocol: String,
    pub n_train: usize,
    pub labeled_fraction: f64,
    pub n_validation: usize,
    pub n_test: usize,
    pub hr_min: u32,
    pub hr_max: u32,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub fps: f64,
    pub pulse_amp: f64,
    pub harmonic_amp: f64,
    pub noise_std: f64,
    pub common_noise_std: f64,
    pub skin_fraction: f64,
    pub freq_jitter: f64,
    pub distractor_amp_max: f64,
    pub unlabeled_noise_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandSection {
    pub f_low: f64,
    pub f_high: f64,
    pub delta_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub e_total: usize,
    pub e_pre: usize,
    pub batch_supervised: usize,
    pub batch_semi: usize,
    pub learning_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_decay_epoch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_decay_rate: Option<f64>,
    pub lambda: f64,
    pub weak_shift_max: usize,
    pub stop_gradient_weak: bool,
    /// inc | dec | fixed:<r>
    pub schedule: String,
    pub m: f64,
    pub n: f64,
    /// snr | ipr
    pub criterion: String,
    /// both | labeled | unlabeled | none
    pub consistency: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    pub kernel: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// Dataset directory (written by `gen`, read by `train`, `eval`, `ablate`).
    pub data: PathBuf,
    /// Output directory for runs.
    pub out: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            dataset: DatasetSection::default(),
            band: BandSection::default(),
            train: TrainSection::default(),
            model: ModelSection::default(),
            paths: PathsSection::default(),
        }
    }
}

impl Default for DatasetSection {
    fn default() -> Self {
        let d = DatasetConfig::default();
        let t = &d.template;
        Self {
            protocol: "semi".into(),
            n_train: d.n_train,
            labeled_fraction: d.labeled_fraction,
            n_validation: d.n_validation,
            n_test: d.n_test,
            hr_min: d.hr_min,
            hr_max: d.hr_max,
            frames: t.dims.frames,
            width: t.dims.width,
            height: t.dims.height,
            channels: t.dims.channels,
            fps: t.fps,
            pulse_amp: t.pulse_amp,
            harmonic_amp: t.harmonic_amp,
            noise_std: t.noise_std,
            common_noise_std: t.common_noise_std,
            skin_fraction: t.skin_fraction,
            freq_jitter: t.freq_jitter,
            distractor_amp_max: d.distractor_amp_max,
            unlabeled_noise_scale: d.unlabeled_noise_scale,
        }
    }
}

impl Default for BandSection {
    fn default() -> Self {
        let b = BandConfig::default();
        Self {
            f_low: b.f_low,
            f_high: b.f_high,
            delta_f: b.delta_f,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::desk();
        let s = CurriculumSchedule::increasing(t.e_total);
        Self {
            e_total: t.e_total,
            e_pre: t.e_pre,
            batch_supervised: t.batch_supervised,
            batch_semi: t.batch_semi,
            learning_rate: t.learning_rate,
            lr_decay_epoch: None,
            lr_decay_rate: None,
            lambda: t.loss.lambda,
            weak_shift_max: t.loss.weak_shift_max,
            stop_gradient_weak: t.loss.stop_gradient_weak,
            schedule: "inc".into(),
            m: s.m,
            n: s.n,
            criterion: "snr".into(),
            consistency: "both".into(),
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelSpec::default();
        Self {
            hidden: m.hidden,
            kernel: m.kernel,
        }
    }
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            data: "data".into(),
            out: "runs".into(),
        }
    }
}

/// Parsed `--schedule` value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleArg {
    Increasing,
    Decreasing,
    Fixed(f64),
}

impl ScheduleArg {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "inc" => Ok(Self::Increasing),
            "dec" => Ok(Self::Decreasing),
            _ => {
                let r = s
                    .strip_prefix("fixed:")
                    .and_then(|r| r.parse::<f64>().ok())
                    .filter(|r| (0.0..=1.0).contains(r))
                    .ok_or_else(|| Error::Config(format!("schedule: expected inc, dec or fixed:<r> with r in [0,1], got {s:?}")))?;
                Ok(Self::Fixed(r))
            }
        }
    }

    pub fn label(self) -> String {
        match self {
            Self::Increasing => "inc".into(),
            Self::Decreasing => "dec".into(),
            Self::Fixed(r) => format!("fixed:{r}"),
        }
    }
}

pub fn parse_criterion(s: &str) -> Result<CriterionKind> {
    match s {
        "snr" => Ok(CriterionKind::Snr),
        "ipr" => Ok(CriterionKind::NegIpr),
        _ => Err(Error::Config(format!("criterion: expected snr or ipr, got {s:?}"))),
    }
}

pub fn criterion_label(c: CriterionKind) -> &'static str {
    match c {
        CriterionKind::Snr => "snr",
        CriterionKind::NegIpr => "ipr",
    }
}

fn parse_consistency(s: &str) -> Result<ConsistencyOn> {
    match s {
        "both" => Ok(ConsistencyOn::Both),
        "labeled" => Ok(ConsistencyOn::Labeled),
        "unlabeled" => Ok(ConsistencyOn::Unlabeled),
        "none" => Ok(ConsistencyOn::None),
        _ => Err(Error::Config(format!(
            "train.consistency: expected both, labeled, unlabeled or none, got {s:?}"
        ))),
    }
}

fn parse_data_protocol(s: &str) -> Result<DataProtocol> {
    match s {
        "full" => Ok(DataProtocol::Full),
        "partial" => Ok(DataProtocol::Partial),
        "semi" => Ok(DataProtocol::Semi),
        _ => Err(Error::Config(format!("dataset.protocol: expected full, partial or semi, got {s:?}"))),
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let ds = self.dataset_config()?;
        ds.validate().map_err(|e| Error::Config(format!("dataset: {e}")))?;
        let tc = self.train_config()?;
        tc.validate(self.dataset.frames)
            .map_err(|e| Error::Config(format!("train: {e}")))?;
        Ok(())
    }

    pub fn band_config(&self) -> Result<BandConfig> {
        BandConfig::new(self.band.f_low, self.band.f_high, self.band.delta_f)
            .map_err(|e| Error::Config(format!("band: {e}")))
    }

    pub fn dataset_config(&self) -> Result<DatasetConfig> {
        let d = &self.dataset;
        let band = self.band_config()?;
        let bad_key = if band.class_of_bpm(d.hr_min).is_none() || d.hr_min > d.hr_max {
            Some("hr_min")
        } else if band.class_of_bpm(d.hr_max).is_none() {
            Some("hr_max")
        } else {
            None
        };
        if let Some(key) = bad_key {
            return Err(Error::Config(format!(
                "dataset.{key}: hr range [{}, {}] must lie within the band [{}, {}] BPM",
                d.hr_min,
                d.hr_max,
                band.base_bpm(),
                band.base_bpm() as usize + band.n_classes() - 1
            )));
        }
        if d.channels == 0 {
            return Err(Error::Config("dataset.channels must be >= 1".into()));
        }
        let template = SynthSpec {
            dims: ClipDims {
                frames: d.frames,
                width: d.width,
                height: d.height,
                channels: d.channels,
            },
            fps: d.fps,
            pulse_amp: d.pulse_amp,
            harmonic_amp: d.harmonic_amp,
            noise_std: d.noise_std,
            common_noise_std: d.common_noise_std,
            skin_fraction: d.skin_fraction,
            freq_jitter: d.freq_jitter,
            channel_gains: default_gains(d.channels),
            ..SynthSpec::default()
        };
        Ok(DatasetConfig {
            seed: self.seed,
            n_train: d.n_train,
            labeled_fraction: d.labeled_fraction,
            n_validation: d.n_validation,
            n_test: d.n_test,
            protocol: parse_data_protocol(&d.protocol)?,
            hr_min: d.hr_min,
            hr_max: d.hr_max,
            template,
            distractor_amp_max: d.distractor_amp_max,
            unlabeled_noise_scale: d.unlabeled_noise_scale,
            band,
        })
    }

    pub fn schedule(&self) -> Result<CurriculumSchedule> {
        let t = &self.train;
        let direction = match ScheduleArg::parse(&t.schedule)? {
            ScheduleArg::Increasing => pulse_core::curriculum::RatioDirection::Increasing,
            ScheduleArg::Decreasing => pulse_core::curriculum::RatioDirection::Decreasing,
            ScheduleArg::Fixed(r) => pulse_core::curriculum::RatioDirection::Fixed(r),
        };
        Ok(CurriculumSchedule {
            m: t.m,
            n: t.n,
            e_total: t.e_total,
            direction,
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.train;
        let lr_decay = match (t.lr_decay_epoch, t.lr_decay_rate) {
            (Some(from_epoch), Some(learning_rate)) => Some(LrDecay {
                from_epoch,
                learning_rate,
            }),
            (None, None) => None,
            _ => {
                return Err(Error::Config(
                    "train.lr_decay_epoch and train.lr_decay_rate must be set together".into(),
                ))
            }
        };
        Ok(TrainConfig {
            e_total: t.e_total,
            e_pre: t.e_pre,
            batch_supervised: t.batch_supervised,
            batch_semi: t.batch_semi,
            learning_rate: t.learning_rate,
            lr_decay,
            loss: LossConfig {
                lambda: t.lambda,
                band: self.band_config()?,
                weak_shift_max: t.weak_shift_max,
                stop_gradient_weak: t.stop_gradient_weak,
            },
            selection: SelectionPolicy::Curriculum(self.schedule()?),
            criterion: parse_criterion(&t.criterion)?,
            consistency_on: parse_consistency(&t.consistency)?,
            model: ModelSpec {
                in_channels: self.dataset.channels,
                hidden: self.model.hidden.clone(),
                kernel: self.model.kernel,
            },
            seed: self.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = Config::from_toml("").unwrap();
        assert_eq!(cfg, Config::default());
        let tc = cfg.train_config().unwrap();
        assert_eq!(tc, TrainConfig::desk());
        assert_eq!(cfg.dataset_config().unwrap(), DatasetConfig::default());
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let text = Config::default().to_toml();
        assert_eq!(Config::from_toml(&text).unwrap(), Config::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = Config::from_toml("[train]\nlearning_rat = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("learning_rat"), "{err}");
        assert!(Config::from_toml("colour = 1\n").is_err());
    }

    #[test]
    fn bad_hr_range_names_the_key() {
        let err = Config::from_toml("[dataset]\nhr_min = 20\n").unwrap_err();
        assert_eq!(err.exit_code(), crate::error::exit::CONFIG);
        assert!(err.to_string().contains("hr_min"), "{err}");
        let err = Config::from_toml("[dataset]\nhr_max = 200\n").unwrap_err();
        assert!(err.to_string().contains("hr_max"), "{err}");
    }

    #[test]
    fn schedule_args() {
        assert_eq!(ScheduleArg::parse("inc").unwrap(), ScheduleArg::Increasing);
        assert_eq!(ScheduleArg::parse("fixed:0.5").unwrap(), ScheduleArg::Fixed(0.5));
        assert!(ScheduleArg::parse("fixed:1.5").is_err());
        assert!(ScheduleArg::parse("up").is_err());
    }

    #[test]
    fn lr_decay_needs_both_keys() {
        assert!(Config::from_toml("[train]\nlr_decay_epoch = 5\n").is_err());
        let cfg = Config::from_toml("[train]\nlr_decay_epoch = 5\nlr_decay_rate = 1e-5\n").unwrap();
        assert_eq!(cfg.train_config().unwrap().lr_decay.unwrap().from_epoch, 5);
    }
}
