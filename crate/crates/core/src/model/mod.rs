//! The anticipation network, its training loop and checkpoint format.

mod checkpoint;
mod config;
mod network;
mod pooling;
mod r2c;
mod train;
mod window;

pub use checkpoint::{load_checkpoint, model_from_bytes, model_to_bytes, save_checkpoint, CHECKPOINT_MAGIC};
pub use config::{DecodeMode, IntervalPooling, SwagConfig, Task};
pub use network::{
    AnticipationOutput, DecoderLayer, EncoderLayer, LossParts, QueryTokens, SwagModel, Targets,
};
pub use pooling::{interval_pool, key_pool, Pooled};
pub use r2c::r2c;
pub use train::{train, validation_score, EpochLog, TrainLog};
pub use window::{feature_window, targets_at};

use crate::data::Video;
use crate::error::Result;
use crate::metrics::{Anticipator, Prediction};

/// Wraps a trained model for evaluation.
#[derive(Clone, Debug)]
pub struct ModelAnticipator {
    pub model: SwagModel,
}

impl ModelAnticipator {
    pub fn new(model: SwagModel) -> Self {
        Self { model }
    }

    pub fn output(&self, video: &Video, t: usize) -> Result<AnticipationOutput> {
        let x = feature_window(video, t, self.model.config().context_seconds);
        self.model.forward(&x, None)
    }

    pub fn recognize(&self, video: &Video, t: usize) -> Result<usize> {
        Ok(self.output(video, t)?.current_class())
    }
}

impl Anticipator for ModelAnticipator {
    fn name(&self) -> String {
        let c = self.model.config();
        match c.task {
            Task::Regression => "sp_r2c".into(),
            Task::Classification => c.decode_mode.as_str().into(),
        }
    }

    fn horizon(&self) -> usize {
        self.model.config().horizon
    }

    fn predict(&self, video: &Video, t: usize) -> Result<Prediction> {
        let out = self.output(video, t)?;
        let current = out.current_class();
        let horizon = self.horizon();
        let (future, rsd) = match &out.remaining {
            Some(r) => (r2c(r, current, horizon), r.last().copied()),
            None => (out.future_labels().expect("classification output"), None),
        };
        Ok(Prediction {
            current,
            future,
            remaining: out.remaining,
            rsd,
        })
    }
}
