//! One function per subcommand. Each reads only what its config names and
//! writes only below `out`.

use std::fs;
use std::path::Path;

use swag_core::baselines::{NaiveAnticipator, NaiveKind, NearestCentroid, RecognitionSource};
use swag_core::data::{load_dataset, save_dataset, Dataset, HorizonGrid, Manifest, Video};
use swag_core::metrics::{evaluate_run, Anticipator, EvalConfig, MatchConfig, MetricsReport, Prediction};
use swag_core::model::{
    load_checkpoint, save_checkpoint, train, DecodeMode, ModelAnticipator, SwagModel, Task, TrainLog,
};
use swag_core::priors::{extract_transition_priors, load_priors, save_priors, TransitionPriorTensor};
use swag_core::simulate::{build_dataset, FeatureModel, SplitCounts, WorkflowGrammar};
use swag_core::{Result, SwagError};

use crate::config::{Method, Recognition, RunConfig};
use crate::report::{report_csv, report_json, summary_csv, summary_markdown};
use crate::ribbon::{build_ribbon, Ribbon};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| SwagError::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    fs::write(path, text).map_err(|e| SwagError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Draw a synthetic dataset into `<data_dir>`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Manifest> {
    let grammar = WorkflowGrammar::by_name(&cfg.grammar)?;
    let features = FeatureModel::random(grammar.num_phases(), cfg.feature_dim, cfg.noise_sigma, cfg.seed);
    let counts = SplitCounts::new(cfg.train_videos, cfg.val_videos, cfg.test_videos);
    let dataset = build_dataset(&grammar, &features, counts, cfg.seed)?;
    let dir = cfg.data_dir();
    create_dir(&dir)?;
    save_dataset(&dir, &dataset)
}

pub fn load_data(cfg: &RunConfig) -> Result<Dataset> {
    load_dataset(&cfg.data_dir())
}

/// Count transition priors over the training split at the model horizon.
pub fn cmd_extract_priors(cfg: &RunConfig) -> Result<TransitionPriorTensor> {
    let dataset = load_data(cfg)?;
    let grid = HorizonGrid::new(cfg.model.horizon);
    let priors = extract_transition_priors(&dataset.train_labels(), &grid, dataset.num_phases, cfg.prior_stride)?;
    let path = cfg.priors_path();
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    save_priors(&priors, &path)?;
    Ok(priors)
}

fn priors_for(cfg: &RunConfig, horizon: usize) -> Result<TransitionPriorTensor> {
    let priors = load_priors(&cfg.priors_path())?;
    if priors.horizon() < horizon {
        return Err(SwagError::Config(format!(
            "priors cover {} minutes, {} needs {horizon}",
            priors.horizon(),
            cfg.method.as_str()
        )));
    }
    Ok(priors)
}

/// Train the configured method; writes the checkpoint and the epoch log.
pub fn cmd_train(cfg: &RunConfig) -> Result<(SwagModel, TrainLog)> {
    if cfg.method.is_naive() {
        return Err(SwagError::Config(format!("{} has nothing to train", cfg.method.as_str())));
    }
    let model_cfg = cfg.model_config()?;
    let dataset = load_data(cfg)?;
    let priors = match cfg.method {
        Method::SpStar => Some(priors_for(cfg, model_cfg.horizon)?),
        _ => None,
    };
    let (model, log) = train(&dataset, model_cfg, priors)?;
    let ckpt = cfg.checkpoint_path();
    if let Some(parent) = ckpt.parent() {
        create_dir(parent)?;
    }
    save_checkpoint(&model, &ckpt)?;
    write(&cfg.train_log_path(), &log.to_text())?;
    Ok((model, log))
}

/// Load the checkpoint for a learned method. A single-pass classification
/// checkpoint can be evaluated as either `sp` or `sp_star`.
pub fn load_model(cfg: &RunConfig) -> Result<SwagModel> {
    let (mode, task) = cfg.method.model_kind().expect("learned method");
    let model = load_checkpoint(&cfg.checkpoint_path())?;
    let c = model.config();
    if (c.decode_mode, c.task) == (mode, task) {
        return Ok(model);
    }
    let single_pass = |m| matches!(m, DecodeMode::Sp | DecodeMode::SpStar);
    if task == Task::Classification && c.task == task && single_pass(mode) && single_pass(c.decode_mode) {
        let priors = match mode {
            DecodeMode::SpStar => Some(priors_for(cfg, c.horizon)?),
            _ => None,
        };
        return model.with_mode(mode, cfg.model.prior_scale, priors);
    }
    Err(SwagError::Config(format!(
        "checkpoint {} holds a {} {} model, not {}",
        cfg.checkpoint_path().display(),
        c.decode_mode.as_str(),
        c.task.as_str(),
        cfg.method.as_str()
    )))
}

/// Cuts a longer-horizon method's future down to the first `horizon` minutes.
struct Truncated {
    inner: Box<dyn Anticipator>,
    horizon: usize,
}

impl Anticipator for Truncated {
    fn name(&self) -> String {
        self.inner.name()
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn predict(&self, video: &Video, t: usize) -> Result<Prediction> {
        let mut p = self.inner.predict(video, t)?;
        p.future.truncate(self.horizon);
        Ok(p)
    }
}

/// The configured method, ready to evaluate on `dataset`.
pub fn build_method(cfg: &RunConfig, dataset: &Dataset) -> Result<Box<dyn Anticipator>> {
    let model = if cfg.method.is_naive() { None } else { Some(load_model(cfg)?) };
    let full = model.as_ref().map_or(cfg.model.horizon, |m| m.config().horizon);
    let horizon = cfg.eval_horizon.unwrap_or(full);
    if horizon == 0 || horizon > full {
        return Err(SwagError::Config(format!("evaluation horizon {horizon} outside 1..={full}")));
    }
    if let Some(model) = model {
        if model.feature_dim() != dataset.feature_dim().unwrap_or(0) || model.num_phases() != dataset.num_phases {
            return Err(SwagError::Domain(format!(
                "checkpoint expects {} phases and {} features, dataset has {} and {:?}",
                model.num_phases(),
                model.feature_dim(),
                dataset.num_phases,
                dataset.feature_dim()
            )));
        }
        let inner: Box<dyn Anticipator> = Box::new(ModelAnticipator::new(model));
        return Ok(if horizon == full {
            inner
        } else {
            Box::new(Truncated { inner, horizon })
        });
    }
    let recognition = match cfg.recognition {
        Recognition::GroundTruth => RecognitionSource::GroundTruth,
        Recognition::Centroid => RecognitionSource::NearestCentroid(NearestCentroid::fit(&dataset.train, dataset.num_phases)?),
        Recognition::Model => {
            let path = cfg
                .recognition_checkpoint
                .as_ref()
                .ok_or_else(|| SwagError::Config("recognition = model needs recognition_checkpoint".into()))?;
            RecognitionSource::Model(Box::new(ModelAnticipator::new(load_checkpoint(path)?)))
        }
    };
    let kind = match cfg.method {
        Method::Naive1 => NaiveKind::Naive1,
        Method::Naive2 => NaiveKind::Naive2 {
            priors: priors_for(cfg, horizon)?,
            seed: cfg.seed,
        },
        Method::Naive2Argmax => NaiveKind::Naive2Argmax {
            priors: priors_for(cfg, horizon)?,
        },
        _ => unreachable!("learned methods handled above"),
    };
    Ok(Box::new(NaiveAnticipator {
        kind,
        recognition,
        horizon,
    }))
}

pub fn eval_config(cfg: &RunConfig, num_phases: usize) -> Result<EvalConfig> {
    let matching = MatchConfig {
        iou_threshold: cfg.iou_threshold,
        eos_weight: cfg.eos_weight,
        eos_cap_minutes: cfg.eos_cap_minutes,
        ..MatchConfig::new(num_phases)
    };
    matching.validate()?;
    if cfg.eval_interval == 0 {
        return Err(SwagError::Config("eval_interval must be positive".into()));
    }
    Ok(EvalConfig {
        matching,
        interval: cfg.eval_interval,
        pooled_mean_f1: cfg.pooled_mean_f1,
        jobs: cfg.jobs.max(1),
    })
}

pub fn split<'a>(cfg: &RunConfig, dataset: &'a Dataset) -> Result<&'a [Video]> {
    match cfg.split.as_str() {
        "val" => Ok(&dataset.val),
        "test" => Ok(&dataset.test),
        other => Err(SwagError::Config(format!("unknown split `{other}` (expected val|test)"))),
    }
}

/// Evaluate and write `reports/<method>.json` and `reports/<method>.csv`.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<MetricsReport> {
    let dataset = load_data(cfg)?;
    let method = build_method(cfg, &dataset)?;
    let report = evaluate_run(method.as_ref(), split(cfg, &dataset)?, &eval_config(cfg, dataset.num_phases)?)?;
    let dir = cfg.reports_dir();
    write(&dir.join(format!("{}.json", cfg.method.as_str())), &report_json(&report))?;
    write(&dir.join(format!("{}.csv", cfg.method.as_str())), &report_csv(&report))?;
    Ok(report)
}

/// Render one video's predictions as CSV and SVG under `ribbons/`.
pub fn cmd_ribbon(cfg: &RunConfig) -> Result<Ribbon> {
    let dataset = load_data(cfg)?;
    let videos = split(cfg, &dataset)?;
    let video = match &cfg.ribbon_video {
        Some(id) => videos
            .iter()
            .find(|v| v.id() == id)
            .ok_or_else(|| SwagError::Domain(format!("no video `{id}` in the {} split", cfg.split)))?,
        None => videos
            .first()
            .ok_or_else(|| SwagError::Domain(format!("the {} split is empty", cfg.split)))?,
    };
    let method = build_method(cfg, &dataset)?;
    let ribbon = build_ribbon(
        method.as_ref(),
        video,
        dataset.num_phases,
        cfg.ribbon_from,
        cfg.ribbon_to,
        cfg.eval_interval,
    )?;
    let stem = cfg.ribbons_dir().join(format!("{}_{}", cfg.method.as_str(), video.id()));
    write(&stem.with_extension("csv"), &ribbon.to_csv())?;
    write(&stem.with_extension("svg"), &ribbon.to_svg())?;
    Ok(ribbon)
}

/// Collect every `reports/*.json` into `summary.csv` and `summary.md`.
pub fn cmd_report(cfg: &RunConfig) -> Result<Vec<MetricsReport>> {
    let dir = cfg.reports_dir();
    let entries = fs::read_dir(&dir).map_err(|e| SwagError::Io {
        path: dir.clone(),
        source: e,
    })?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let reports = paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| SwagError::Io {
                path: p.clone(),
                source: e,
            })?;
            serde_json::from_str(&text).map_err(|e| SwagError::Format {
                context: p.display().to_string(),
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<MetricsReport>>>()?;
    if reports.is_empty() {
        return Err(SwagError::Domain(format!("no reports in {}", dir.display())));
    }
    write(&dir.join("summary.csv"), &summary_csv(&reports))?;
    write(&dir.join("summary.md"), &summary_markdown(&reports))?;
    Ok(reports)
}
