//! The meta-tuning loop.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Scorer;
use crate::error::{Error, Result};
use crate::sampler::Sampler;

pub const DEFAULT_STEPS: usize = 5000;
pub const DEFAULT_BATCH_SIZE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainRunConfig {
    pub steps: usize,
    pub batch_size: usize,
    /// 0 means only checkpoint at the end.
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        TrainRunConfig {
            steps: DEFAULT_STEPS,
            batch_size: DEFAULT_BATCH_SIZE,
            checkpoint_every: 0,
            seed: 0,
        }
    }
}

impl TrainRunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidArgument("steps must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSeries {
    /// Step index of every checkpoint, ascending.
    pub checkpoints: Vec<usize>,
    /// Loss returned by each training step.
    pub losses: Vec<f64>,
    pub steps_completed: usize,
    /// Set when the sampler ran dry before `steps` were done.
    pub exhausted: bool,
}

/// File name of the checkpoint written at `step`.
pub fn checkpoint_path(dir: &Path, step: usize) -> PathBuf {
    dir.join(format!("checkpoint-{step:07}.bin"))
}

/// Trains `scorer` on `config.steps` batches from `sampler`.
///
/// `on_checkpoint(step, scorer)` runs every `checkpoint_every` steps and once
/// at the final step. If the sampler runs dry the last (possibly short) batch
/// is still trained on, a final checkpoint is taken and the series is flagged.
pub fn run_meta_tuning<S, F>(
    scorer: &mut S,
    sampler: &mut Sampler<'_>,
    config: &TrainRunConfig,
    mut on_checkpoint: F,
) -> Result<CheckpointSeries>
where
    S: Scorer + ?Sized,
    F: FnMut(usize, &mut S) -> Result<()>,
{
    config.validate()?;
    let mut series = CheckpointSeries {
        checkpoints: Vec::new(),
        losses: Vec::with_capacity(config.steps),
        steps_completed: 0,
        exhausted: false,
    };

    for step in 1..=config.steps {
        let batch = sampler.next_batch(config.batch_size)?;
        if batch.instances.is_empty() {
            series.exhausted = true;
            break;
        }
        series.losses.push(scorer.train_batch(&batch.instances)?);
        series.steps_completed = step;
        if batch.exhausted {
            series.exhausted = true;
            break;
        }
        if config.checkpoint_every > 0 && step % config.checkpoint_every == 0 {
            on_checkpoint(step, scorer)?;
            series.checkpoints.push(step);
        }
    }

    let last = series.steps_completed;
    if last > 0 && series.checkpoints.last() != Some(&last) {
        on_checkpoint(last, scorer)?;
        series.checkpoints.push(last);
    }
    Ok(series)
}
