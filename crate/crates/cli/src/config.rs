//! Flat `key = value` run configuration.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use swag_core::model::{DecodeMode, IntervalPooling, SwagConfig, Task};
use swag_core::{Result, SwagError};

/// Every method the runner can train or evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Naive1,
    Naive2,
    Naive2Argmax,
    Sp,
    SpStar,
    Ar,
    SpR2c,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Naive1,
        Method::Naive2,
        Method::Naive2Argmax,
        Method::Sp,
        Method::SpStar,
        Method::Ar,
        Method::SpR2c,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|m| m.as_str()).collect();
                SwagError::Config(format!("unknown method `{s}` (expected {})", names.join("|")))
            })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Naive1 => "naive1",
            Method::Naive2 => "naive2",
            Method::Naive2Argmax => "naive2_argmax",
            Method::Sp => "sp",
            Method::SpStar => "sp_star",
            Method::Ar => "ar",
            Method::SpR2c => "sp_r2c",
        }
    }

    pub fn is_naive(self) -> bool {
        matches!(self, Method::Naive1 | Method::Naive2 | Method::Naive2Argmax)
    }

    pub fn needs_priors(self) -> bool {
        matches!(self, Method::Naive2 | Method::Naive2Argmax | Method::SpStar)
    }

    /// Decoder mode and task of a learned method.
    pub fn model_kind(self) -> Option<(DecodeMode, Task)> {
        match self {
            Method::Sp => Some((DecodeMode::Sp, Task::Classification)),
            Method::SpStar => Some((DecodeMode::SpStar, Task::Classification)),
            Method::Ar => Some((DecodeMode::Ar, Task::Classification)),
            Method::SpR2c => Some((DecodeMode::Sp, Task::Regression)),
            _ => None,
        }
    }
}

/// Where naive baselines take the current phase from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Recognition {
    GroundTruth,
    Centroid,
    Model,
}

impl Recognition {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "gt" => Ok(Self::GroundTruth),
            "centroid" => Ok(Self::Centroid),
            "model" => Ok(Self::Model),
            _ => Err(SwagError::Config(format!("unknown recognition `{s}` (expected gt|centroid|model)"))),
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Self::GroundTruth => "gt",
            Self::Centroid => "centroid",
            Self::Model => "model",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: SwagConfig,
    pub method: Method,
    pub seed: u64,
    pub out: PathBuf,
    pub grammar: String,
    pub train_videos: usize,
    pub val_videos: usize,
    pub test_videos: usize,
    pub feature_dim: usize,
    pub noise_sigma: f64,
    pub data_dir: Option<PathBuf>,
    pub priors_path: Option<PathBuf>,
    pub prior_stride: usize,
    pub checkpoint: Option<PathBuf>,
    pub recognition: Recognition,
    pub recognition_checkpoint: Option<PathBuf>,
    pub split: String,
    pub jobs: usize,
    pub eval_interval: usize,
    pub eval_horizon: Option<usize>,
    pub pooled_mean_f1: bool,
    pub iou_threshold: f64,
    pub eos_weight: f64,
    pub eos_cap_minutes: usize,
    pub ribbon_video: Option<String>,
    pub ribbon_from: usize,
    pub ribbon_to: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: SwagConfig::default(),
            method: Method::Sp,
            seed: 0,
            out: PathBuf::from("runs"),
            grammar: "structured".into(),
            train_videos: 10,
            val_videos: 4,
            test_videos: 7,
            feature_dim: 16,
            noise_sigma: 1.0,
            data_dir: None,
            priors_path: None,
            prior_stride: 1,
            checkpoint: None,
            recognition: Recognition::Centroid,
            recognition_checkpoint: None,
            split: "test".into(),
            jobs: 1,
            eval_interval: 60,
            eval_horizon: None,
            pooled_mean_f1: false,
            iou_threshold: 0.25,
            eos_weight: 0.5,
            eos_cap_minutes: 4,
            ribbon_video: None,
            ribbon_from: 0,
            ribbon_to: None,
        }
    }
}

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("method", "naive1 | naive2 | naive2_argmax | sp | sp_star | ar | sp_r2c"),
    ("seed", "master seed for simulation, training and sampling"),
    ("out", "output directory; every artifact is written below it"),
    ("grammar", "simulated workflow grammar: structured | variable"),
    ("train_videos", "simulated training videos"),
    ("val_videos", "simulated validation videos"),
    ("test_videos", "simulated test videos"),
    ("feature_dim", "simulated feature dimension"),
    ("noise_sigma", "standard deviation of simulated feature noise"),
    ("data_dir", "dataset directory (default <out>/data)"),
    ("priors", "transition prior file (default <out>/priors.json)"),
    ("prior_stride", "seconds between counted time points when extracting priors"),
    ("checkpoint", "model checkpoint (default <out>/checkpoints/<method>.swag)"),
    ("recognition", "current-phase source for naive methods: gt | centroid | model"),
    ("recognition_checkpoint", "checkpoint used when recognition = model"),
    ("split", "split evaluated by evaluate and ribbon: val | test"),
    ("jobs", "evaluation worker threads"),
    ("eval_interval", "seconds between evaluated time points"),
    ("eval_horizon", "evaluate only the first n minutes (empty = full horizon)"),
    ("pooled_mean_f1", "pool all minutes for the mean F1 instead of averaging horizons"),
    ("iou_threshold", "segment match threshold for SegF1"),
    ("eos_weight", "weight of end-of-surgery segments in SegF1"),
    ("eos_cap_minutes", "minutes past the first true EOS minute scored by SegF1"),
    ("ribbon_video", "video rendered by ribbon (default: first video of the split)"),
    ("ribbon_from", "first ribbon minute"),
    ("ribbon_to", "last ribbon minute (empty = end of video)"),
    ("context_seconds", "L, seconds of features seen by the encoder"),
    ("window", "W, windowed self-attention block size"),
    ("context_tokens", "M, compressed context tokens"),
    ("pooled_dim", "d, width of the pooled key features"),
    ("model_dim", "D, transformer width"),
    ("heads", "attention heads"),
    ("encoder_layers", "windowed encoder layers"),
    ("decoder_layers", "decoder layers"),
    ("ffn_dim", "decoder feed-forward width"),
    ("horizon", "N, anticipated minutes"),
    ("prior_scale", "alpha, weight of the prior term in sp_star query tokens"),
    ("interval_pooling", "ar context pooling: cumulative | disjoint"),
    ("lr", "peak learning rate"),
    ("momentum", "SGD momentum"),
    ("weight_decay", "L2 weight decay"),
    ("grad_clip", "global gradient-norm clip"),
    ("warmup_epochs", "linear warm-up epochs before cosine decay"),
    ("epochs", "training epochs"),
    ("batch_size", "windows per optimizer step"),
    ("train_stride", "seconds between training windows within a video"),
    ("class_weights", "comma-separated loss weights for the C + 1 classes (empty = uniform)"),
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| SwagError::Config(format!("`{key}`: cannot parse `{value}`: {e}")))
}

fn optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>>
where
    T::Err: Display,
{
    if value.is_empty() {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn show<T: Display>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

fn show_path(v: &Option<PathBuf>) -> String {
    v.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    /// Set one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        let path = || (!value.is_empty()).then(|| PathBuf::from(value));
        match key {
            "method" => self.method = Method::parse(value)?,
            "seed" => self.seed = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "grammar" => self.grammar = value.to_string(),
            "train_videos" => self.train_videos = parse(key, value)?,
            "val_videos" => self.val_videos = parse(key, value)?,
            "test_videos" => self.test_videos = parse(key, value)?,
            "feature_dim" => self.feature_dim = parse(key, value)?,
            "noise_sigma" => self.noise_sigma = parse(key, value)?,
            "data_dir" => self.data_dir = path(),
            "priors" => self.priors_path = path(),
            "prior_stride" => self.prior_stride = parse(key, value)?,
            "checkpoint" => self.checkpoint = path(),
            "recognition" => self.recognition = Recognition::parse(value)?,
            "recognition_checkpoint" => self.recognition_checkpoint = path(),
            "split" => self.split = value.to_string(),
            "jobs" => self.jobs = parse(key, value)?,
            "eval_interval" => self.eval_interval = parse(key, value)?,
            "eval_horizon" => self.eval_horizon = optional(key, value)?,
            "pooled_mean_f1" => self.pooled_mean_f1 = parse(key, value)?,
            "iou_threshold" => self.iou_threshold = parse(key, value)?,
            "eos_weight" => self.eos_weight = parse(key, value)?,
            "eos_cap_minutes" => self.eos_cap_minutes = parse(key, value)?,
            "ribbon_video" => self.ribbon_video = (!value.is_empty()).then(|| value.to_string()),
            "ribbon_from" => self.ribbon_from = parse(key, value)?,
            "ribbon_to" => self.ribbon_to = optional(key, value)?,
            "context_seconds" => m.context_seconds = parse(key, value)?,
            "window" => m.window = parse(key, value)?,
            "context_tokens" => m.context_tokens = parse(key, value)?,
            "pooled_dim" => m.pooled_dim = parse(key, value)?,
            "model_dim" => m.model_dim = parse(key, value)?,
            "heads" => m.heads = parse(key, value)?,
            "encoder_layers" => m.encoder_layers = parse(key, value)?,
            "decoder_layers" => m.decoder_layers = parse(key, value)?,
            "ffn_dim" => m.ffn_dim = parse(key, value)?,
            "horizon" => m.horizon = parse(key, value)?,
            "prior_scale" => m.prior_scale = parse(key, value)?,
            "interval_pooling" => m.interval_pooling = IntervalPooling::parse(value)?,
            "lr" => m.lr = parse(key, value)?,
            "momentum" => m.momentum = parse(key, value)?,
            "weight_decay" => m.weight_decay = parse(key, value)?,
            "grad_clip" => m.grad_clip = parse(key, value)?,
            "warmup_epochs" => m.warmup_epochs = parse(key, value)?,
            "epochs" => m.epochs = parse(key, value)?,
            "batch_size" => m.batch_size = parse(key, value)?,
            "train_stride" => m.train_stride = parse(key, value)?,
            "class_weights" => {
                m.class_weights = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse(key, s))
                    .collect::<Result<_>>()?
            }
            _ => return Err(SwagError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Text form of one key, as `set` accepts it.
    pub fn get(&self, key: &str) -> Option<String> {
        let m = &self.model;
        Some(match key {
            "method" => self.method.as_str().into(),
            "seed" => self.seed.to_string(),
            "out" => self.out.display().to_string(),
            "grammar" => self.grammar.clone(),
            "train_videos" => self.train_videos.to_string(),
            "val_videos" => self.val_videos.to_string(),
            "test_videos" => self.test_videos.to_string(),
            "feature_dim" => self.feature_dim.to_string(),
            "noise_sigma" => self.noise_sigma.to_string(),
            "data_dir" => show_path(&self.data_dir),
            "priors" => show_path(&self.priors_path),
            "prior_stride" => self.prior_stride.to_string(),
            "checkpoint" => show_path(&self.checkpoint),
            "recognition" => self.recognition.as_str().into(),
            "recognition_checkpoint" => show_path(&self.recognition_checkpoint),
            "split" => self.split.clone(),
            "jobs" => self.jobs.to_string(),
            "eval_interval" => self.eval_interval.to_string(),
            "eval_horizon" => show(&self.eval_horizon),
            "pooled_mean_f1" => self.pooled_mean_f1.to_string(),
            "iou_threshold" => self.iou_threshold.to_string(),
            "eos_weight" => self.eos_weight.to_string(),
            "eos_cap_minutes" => self.eos_cap_minutes.to_string(),
            "ribbon_video" => self.ribbon_video.clone().unwrap_or_default(),
            "ribbon_from" => self.ribbon_from.to_string(),
            "ribbon_to" => show(&self.ribbon_to),
            "context_seconds" => m.context_seconds.to_string(),
            "window" => m.window.to_string(),
            "context_tokens" => m.context_tokens.to_string(),
            "pooled_dim" => m.pooled_dim.to_string(),
            "model_dim" => m.model_dim.to_string(),
            "heads" => m.heads.to_string(),
            "encoder_layers" => m.encoder_layers.to_string(),
            "decoder_layers" => m.decoder_layers.to_string(),
            "ffn_dim" => m.ffn_dim.to_string(),
            "horizon" => m.horizon.to_string(),
            "prior_scale" => m.prior_scale.to_string(),
            "interval_pooling" => m.interval_pooling.as_str().into(),
            "lr" => m.lr.to_string(),
            "momentum" => m.momentum.to_string(),
            "weight_decay" => m.weight_decay.to_string(),
            "grad_clip" => m.grad_clip.to_string(),
            "warmup_epochs" => m.warmup_epochs.to_string(),
            "epochs" => m.epochs.to_string(),
            "batch_size" => m.batch_size.to_string(),
            "train_stride" => m.train_stride.to_string(),
            "class_weights" => m
                .class_weights
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(","),
            _ => return None,
        })
    }

    /// Parse a config file body. Blank lines and `#` comments are skipped;
    /// repeating a key is an error.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| SwagError::Config(format!("line {}: expected key = value", i + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(SwagError::Config(format!("line {}: `{key}` set twice", i + 1)));
            }
            cfg.set(key, value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SwagError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse_text(&text)
    }

    /// Every key with its current value and description, in a form
    /// `parse_text` reads back.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|(k, doc)| format!("# {doc}\n{k} = {}\n", self.get(k).expect("documented key")))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Model hyper-parameters for the configured method.
    pub fn model_config(&self) -> Result<SwagConfig> {
        let (mode, task) = self
            .method
            .model_kind()
            .ok_or_else(|| SwagError::Config(format!("{} has no model", self.method.as_str())))?;
        Ok(SwagConfig {
            decode_mode: mode,
            task,
            seed: self.seed,
            ..self.model.clone()
        })
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| self.out.join("data"))
    }

    pub fn priors_path(&self) -> PathBuf {
        self.priors_path.clone().unwrap_or_else(|| self.out.join("priors.json"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.out.join("checkpoints").join(format!("{}.swag", self.method.as_str())))
    }

    pub fn train_log_path(&self) -> PathBuf {
        self.out.join("logs").join(format!("{}_train.tsv", self.method.as_str()))
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.out.join("reports")
    }

    pub fn ribbons_dir(&self) -> PathBuf {
        self.out.join("ribbons")
    }
}
