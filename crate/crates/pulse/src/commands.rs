//! Command implementations behind the `pulse` binary.

use std::path::{Path, PathBuf};
use std::thread;

use pulse_core::curriculum::{CriterionKind, CurriculumSchedule, SelectionPolicy};
use pulse_core::signal::ProbeBank;
use pulse_core::synth::SplitCounts;
use pulse_core::train::{evaluate, run, Metrics, Protocol, TrainConfig};

use crate::config::{criterion_label, parse_criterion, Config, ScheduleArg};
use crate::error::{Error, Result};
use crate::rundir::{self, na, RunSummary};
use crate::{checkpoint, loader, signals};

/// Flags shared by the commands; `None` keeps the config value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub schedule: Option<String>,
    pub criterion: Option<String>,
    pub data: Option<PathBuf>,
}

pub fn load_config(path: Option<&Path>, ov: &Overrides) -> Result<Config> {
    let mut cfg = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(seed) = ov.seed {
        cfg.seed = seed;
    }
    if let Some(s) = &ov.schedule {
        ScheduleArg::parse(s)?;
        cfg.train.schedule = s.clone();
    }
    if let Some(c) = &ov.criterion {
        parse_criterion(c)?;
        cfg.train.criterion = c.clone();
    }
    if let Some(d) = &ov.data {
        cfg.paths.data = d.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_protocol(s: &str) -> Result<Protocol> {
    match s {
        "full" => Ok(Protocol::Full),
        "partial" => Ok(Protocol::Partial),
        "semi" => Ok(Protocol::Semi),
        _ => Err(Error::Config(format!("protocol: expected full, partial or semi, got {s:?}"))),
    }
}

pub fn counts_line(c: &SplitCounts) -> String {
    format!(
        "train_labeled={} train_unlabeled={} validation={} test={}",
        c.train_labeled, c.train_unlabeled, c.validation, c.test
    )
}

/// Generates the dataset into `out` (default: the config's data path).
pub fn gen(cfg: &Config, out: Option<&Path>) -> Result<SplitCounts> {
    let dir = out.unwrap_or(&cfg.paths.data);
    let ds = cfg.dataset_config()?;
    let manifest = loader::generate(dir, &ds)?;
    Ok(manifest.counts())
}

pub fn metrics_line(label: &str, m: Option<&Metrics>) -> String {
    match m {
        Some(m) => format!(
            "{label} mae={:.4} rmse={:.4} r={} sd={:.4} n={}",
            m.mae,
            m.rmse,
            m.r.map_or("NA".into(), |r| format!("{r:.4}")),
            m.sd,
            m.n
        ),
        None => format!("{label} n=0"),
    }
}

/// Trains one run and writes its directory. Returns the summary.
pub fn train(cfg: &Config, protocol: Protocol, out: Option<&Path>) -> Result<(PathBuf, RunSummary)> {
    let band = cfg.band_config()?;
    let loaded = loader::load(&cfg.paths.data, &band)?;
    let tc = cfg.train_config()?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| {
        cfg.paths.out.join(format!("{}-{}-s{}", protocol.as_str(), cfg.train.schedule.replace(':', ""), cfg.seed))
    });
    log::info!(
        "training {} on {} labeled / {} unlabeled clips, seed {}",
        protocol.as_str(),
        loaded.data.labeled.len(),
        loaded.data.unlabeled.len(),
        cfg.seed
    );
    let outcome = run(protocol, &loaded.data, &tc, Some(&loaded.audit))?;
    for r in &outcome.train.reports {
        log::info!(
            "epoch {} l_s={:.4} l_c={:.4} k={} mean_snr={} val_mae={}",
            r.epoch,
            r.losses.l_s,
            r.losses.l_c,
            r.k,
            na(r.mean_snr),
            na(r.validation.map(|m| m.mae))
        );
        if r.losses.skipped > 0 {
            log::warn!("epoch {}: skipped {} degenerate samples", r.epoch, r.losses.skipped);
        }
    }
    let n_unl = if protocol == Protocol::Semi { loaded.data.unlabeled.len() } else { 0 };
    let summary = rundir::summary(&outcome, &tc, &cfg.train.schedule, loaded.data.labeled.len(), n_unl);
    rundir::write(&dir, &outcome, &summary)?;
    Ok((dir, summary))
}

/// Scores each input and returns the CSV text.
pub fn score(cfg: &Config, inputs: &[PathBuf]) -> Result<String> {
    let band = cfg.band_config()?;
    let mut scores = Vec::new();
    for p in inputs {
        for (id, s) in signals::load_input(p)? {
            scores.push(signals::score(&id, &s, &band));
        }
    }
    Ok(signals::scores_csv(&scores))
}

/// Evaluates a run directory's checkpoint on one dataset split.
pub fn eval(cfg: &Config, run_dir: &Path, split: &str) -> Result<Metrics> {
    let band = cfg.band_config()?;
    let params = checkpoint::load(run_dir)?;
    let loaded = loader::load(&cfg.paths.data, &band)?;
    let set = match split {
        "test" => &loaded.data.test,
        "validation" => &loaded.data.validation,
        "train_labeled" => &loaded.data.labeled,
        _ => {
            return Err(Error::Config(format!(
                "split: expected test, validation or train_labeled, got {split:?}"
            )))
        }
    };
    let first = set
        .first()
        .ok_or_else(|| Error::Config(format!("split {split} is empty")))?;
    let bank = ProbeBank::new(first.clip.frames(), first.clip.fps(), &band);
    Ok(evaluate(&params, set, &bank)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Schedule,
    Criterion,
    Lambda,
    EPre,
}

impl Axis {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "schedule" => Ok(Self::Schedule),
            "criterion" => Ok(Self::Criterion),
            "lambda" => Ok(Self::Lambda),
            "e_pre" => Ok(Self::EPre),
            _ => Err(Error::Config(format!(
                "axis: expected schedule, criterion, lambda or e_pre, got {s:?}"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Schedule => "schedule",
            Self::Criterion => "criterion",
            Self::Lambda => "lambda",
            Self::EPre => "e_pre",
        }
    }
}

pub const ABLATE_HEADER: &str = "axis,variant,seed,mae,rmse,r,sd";

/// Variants of an axis as `(label, config)` pairs built from `base`.
pub fn variants(axis: Axis, base: &TrainConfig) -> Vec<(String, TrainConfig)> {
    let e = base.e_total;
    let sched = |s: CurriculumSchedule| {
        let mut c = base.clone();
        if let SelectionPolicy::Curriculum(b) = &base.selection {
            c.selection = SelectionPolicy::Curriculum(CurriculumSchedule { m: b.m, n: b.n, ..s });
        }
        c
    };
    match axis {
        Axis::Schedule => vec![
            ("fixed:0.1".into(), sched(CurriculumSchedule::fixed(0.1, e))),
            ("fixed:0.5".into(), sched(CurriculumSchedule::fixed(0.5, e))),
            ("fixed:0.9".into(), sched(CurriculumSchedule::fixed(0.9, e))),
            ("inc".into(), sched(CurriculumSchedule::increasing(e))),
            ("dec".into(), sched(CurriculumSchedule::decreasing(e))),
        ],
        Axis::Criterion => [CriterionKind::Snr, CriterionKind::NegIpr]
            .into_iter()
            .map(|k| {
                (
                    criterion_label(k).to_string(),
                    TrainConfig {
                        criterion: k,
                        ..base.clone()
                    },
                )
            })
            .collect(),
        Axis::Lambda => [1.0, 0.1, 0.01]
            .into_iter()
            .map(|l| {
                let mut c = base.clone();
                c.loss.lambda = l;
                (l.to_string(), c)
            })
            .collect(),
        Axis::EPre => [1usize, 10, 30]
            .into_iter()
            .filter(|&p| {
                let ok = p <= e;
                if !ok {
                    log::warn!("e_pre={p} exceeds e_total={e}; variant skipped");
                }
                ok
            })
            .map(|p| (p.to_string(), TrainConfig { e_pre: p, ..base.clone() }))
            .collect(),
    }
}

/// Runs every variant of `axis` on the shared seeds, one thread per
/// variant, and returns the comparison CSV.
pub fn ablate(cfg: &Config, axis: Axis, seeds: &[u64]) -> Result<String> {
    let band = cfg.band_config()?;
    let loaded = loader::load(&cfg.paths.data, &band)?;
    let base = cfg.train_config()?;
    let data = &loaded.data;
    let results: Vec<Result<(String, Vec<(u64, Metrics)>)>> = thread::scope(|s| {
        let handles: Vec<_> = variants(axis, &base)
            .into_iter()
            .map(|(label, vcfg)| {
                s.spawn(move || -> Result<(String, Vec<(u64, Metrics)>)> {
                    let mut rows = Vec::new();
                    for &seed in seeds {
                        let c = TrainConfig { seed, ..vcfg.clone() };
                        let out = run(Protocol::Semi, data, &c, None)?;
                        let m = out
                            .test
                            .ok_or_else(|| Error::Config("dataset has no test split".into()))?;
                        log::info!("{} {label} seed {seed}: test mae {:.4}", axis.as_str(), m.mae);
                        rows.push((seed, m));
                    }
                    Ok((label, rows))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("variant thread panicked")).collect()
    });

    let mut out = String::from(ABLATE_HEADER);
    out.push('\n');
    for res in results {
        let (label, rows) = res?;
        for (seed, m) in &rows {
            out.push_str(&format!(
                "{},{label},{seed},{},{},{},{}\n",
                axis.as_str(),
                m.mae,
                m.rmse,
                na(m.r),
                m.sd
            ));
        }
        let n = rows.len().max(1) as f64;
        let mae = rows.iter().map(|(_, m)| m.mae).sum::<f64>() / n;
        let rmse = rows.iter().map(|(_, m)| m.rmse).sum::<f64>() / n;
        out.push_str(&format!("{},{label},mean,{mae},{rmse},NA,NA\n", axis.as_str()));
    }
    Ok(out)
}
