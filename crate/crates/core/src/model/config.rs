use serde::{Deserialize, Serialize};

use crate::data::SECONDS_PER_MINUTE;
use crate::error::{Result, SwagError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    /// All future tokens in one pass.
    Sp,
    /// Single pass with prior-initialized tokens.
    SpStar,
    /// Greedy token-by-token generation under a causal mask.
    Ar,
}

impl DecodeMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sp" => Ok(Self::Sp),
            "sp_star" | "sp*" => Ok(Self::SpStar),
            "ar" => Ok(Self::Ar),
            other => Err(SwagError::Config(format!("unknown decode mode {other:?}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sp => "sp",
            Self::SpStar => "sp_star",
            Self::Ar => "ar",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Regression,
}

impl Task {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(Self::Classification),
            "regression" => Ok(Self::Regression),
            other => Err(SwagError::Config(format!("unknown task {other:?}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Classification => "classification",
            Self::Regression => "regression",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalPooling {
    /// Token `m` pools everything from the window start to minute `m + 1`.
    Cumulative,
    /// Token `m` pools only minute `m`.
    Disjoint,
}

impl IntervalPooling {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cumulative" => Ok(Self::Cumulative),
            "disjoint" => Ok(Self::Disjoint),
            other => Err(SwagError::Config(format!("unknown interval pooling {other:?}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Cumulative => "cumulative",
            Self::Disjoint => "disjoint",
        }
    }
}

/// Architecture and optimization settings. Times are in seconds except the
/// horizon, which counts minutes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwagConfig {
    pub context_seconds: usize,
    pub window: usize,
    pub context_tokens: usize,
    pub pooled_dim: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub ffn_dim: usize,
    pub horizon: usize,
    pub decode_mode: DecodeMode,
    pub task: Task,
    pub prior_scale: f64,
    pub interval_pooling: IntervalPooling,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub warmup_epochs: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seconds between training samples within a video.
    pub train_stride: usize,
    pub seed: u64,
    /// One weight per output class including EOS; empty means uniform.
    pub class_weights: Vec<f64>,
}

impl Default for SwagConfig {
    fn default() -> Self {
        Self {
            context_seconds: 1440,
            window: 20,
            context_tokens: 24,
            pooled_dim: 32,
            model_dim: 64,
            heads: 2,
            encoder_layers: 1,
            decoder_layers: 2,
            ffn_dim: 128,
            horizon: 20,
            decode_mode: DecodeMode::Sp,
            task: Task::Classification,
            prior_scale: 1.0,
            interval_pooling: IntervalPooling::Cumulative,
            lr: 0.02,
            momentum: 0.9,
            weight_decay: 1e-4,
            grad_clip: 1.0,
            warmup_epochs: 1,
            epochs: 10,
            batch_size: 8,
            train_stride: 60,
            seed: 0,
            class_weights: Vec::new(),
        }
    }
}

impl SwagConfig {
    /// Small dimensions that train in well under a minute on one core.
    pub fn toy() -> Self {
        Self {
            context_seconds: 600,
            context_tokens: 10,
            pooled_dim: 16,
            model_dim: 32,
            ffn_dim: 64,
            decoder_layers: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self, num_phases: usize) -> Result<()> {
        let fail = |m: String| Err(SwagError::Config(m));
        if self.context_seconds == 0 || self.window == 0 || self.context_seconds % self.window != 0 {
            return fail(format!(
                "context length {} is not a positive multiple of window {}",
                self.context_seconds, self.window
            ));
        }
        if self.context_tokens == 0 || self.context_tokens > self.context_seconds {
            return fail(format!("context tokens {} outside 1..={}", self.context_tokens, self.context_seconds));
        }
        if self.pooled_dim == 0 || self.ffn_dim == 0 {
            return fail("pooled and feed-forward dims must be positive".into());
        }
        if self.model_dim == 0 || self.model_dim % 2 != 0 {
            return fail(format!("model dim {} must be positive and even", self.model_dim));
        }
        if self.heads == 0 || self.model_dim % self.heads != 0 {
            return fail(format!("model dim {} not divisible by {} heads", self.model_dim, self.heads));
        }
        if self.horizon == 0 {
            return fail("horizon must be at least one minute".into());
        }
        if self.decode_mode == DecodeMode::Ar {
            if self.task == Task::Regression {
                return fail("regression uses single-pass decoding".into());
            }
            if self.context_seconds != self.context_tokens * SECONDS_PER_MINUTE {
                return fail(format!(
                    "interval pooling needs context length = 60 x tokens, got {} and {}",
                    self.context_seconds, self.context_tokens
                ));
            }
        }
        if !(self.prior_scale >= 0.0 && self.prior_scale.is_finite()) {
            return fail(format!("prior scale {} must be finite and non-negative", self.prior_scale));
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return fail("invalid optimizer settings".into());
        }
        if self.batch_size == 0 || self.train_stride == 0 {
            return fail("batch size and training stride must be positive".into());
        }
        if !self.class_weights.is_empty()
            && (self.class_weights.len() != num_phases + 1 || self.class_weights.iter().any(|w| !(*w >= 0.0)))
        {
            return fail(format!("expected {} non-negative class weights", num_phases + 1));
        }
        Ok(())
    }

    /// Weights over the `C + 1` output classes.
    pub fn output_weights(&self, num_phases: usize) -> Vec<f64> {
        if self.class_weights.is_empty() {
            vec![1.0; num_phases + 1]
        } else {
            self.class_weights.clone()
        }
    }

    /// Number of decoder input tokens in single-pass mode.
    pub fn query_tokens(&self) -> usize {
        match self.task {
            Task::Classification => self.horizon,
            Task::Regression => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SwagConfig::default().validate(7).unwrap();
        SwagConfig::toy().validate(7).unwrap();
        let ar = SwagConfig {
            decode_mode: DecodeMode::Ar,
            ..SwagConfig::toy()
        };
        ar.validate(7).unwrap();
    }

    #[test]
    fn window_must_divide_context() {
        let c = SwagConfig {
            window: 7,
            ..SwagConfig::toy()
        };
        assert!(c.validate(7).is_err());
    }

    #[test]
    fn ar_needs_minute_tokens() {
        let c = SwagConfig {
            decode_mode: DecodeMode::Ar,
            context_tokens: 12,
            ..SwagConfig::toy()
        };
        assert!(c.validate(7).is_err());
    }
}
