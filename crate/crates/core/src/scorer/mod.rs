//! Scorers: anything that maps (context, question) to P(Yes) and can be
//! trained on Yes/No instances.

use std::path::Path;
use std::str::FromStr;

use crate::corpus::QaInstance;
use crate::error::{Error, Result};

pub mod external;
pub mod native;
pub mod protocol;
pub mod train;

pub use external::{external_connect, ExternalOptions, ExternalScorer};
pub use native::{NativeConfig, NativeScorer};
pub use train::{run_meta_tuning, CheckpointSeries, TrainRunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prompt<'a> {
    pub context: &'a str,
    pub question: &'a str,
}

impl<'a> From<&'a QaInstance> for Prompt<'a> {
    fn from(q: &'a QaInstance) -> Self {
        Prompt {
            context: &q.context,
            question: &q.question,
        }
    }
}

/// The contract every model honours. Returned probabilities lie in `[0, 1]`
/// and are deterministic for a fixed model state.
pub trait Scorer {
    fn score_batch(&mut self, prompts: &[Prompt<'_>]) -> Result<Vec<f64>>;

    /// One optimisation step on `batch`; returns the batch loss.
    fn train_batch(&mut self, batch: &[QaInstance]) -> Result<f64>;

    fn save(&mut self, path: &Path) -> Result<()>;

    fn load(&mut self, path: &Path) -> Result<()>;

    fn is_trainable(&self) -> bool {
        true
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn score_batch(&mut self, prompts: &[Prompt<'_>]) -> Result<Vec<f64>> {
        (**self).score_batch(prompts)
    }

    fn train_batch(&mut self, batch: &[QaInstance]) -> Result<f64> {
        (**self).train_batch(batch)
    }

    fn save(&mut self, path: &Path) -> Result<()> {
        (**self).save(path)
    }

    fn load(&mut self, path: &Path) -> Result<()> {
        (**self).load(path)
    }

    fn is_trainable(&self) -> bool {
        (**self).is_trainable()
    }
}

/// `native` or `external:<command line>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScorerSpec {
    Native,
    External(String),
}

impl FromStr for ScorerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "native" {
            return Ok(ScorerSpec::Native);
        }
        match s.strip_prefix("external:") {
            Some(cmd) if !cmd.trim().is_empty() => Ok(ScorerSpec::External(cmd.to_string())),
            _ => Err(Error::InvalidArgument(format!(
                "unknown scorer {s:?} (expected native or external:<command>)"
            ))),
        }
    }
}

impl std::fmt::Display for ScorerSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScorerSpec::Native => f.write_str("native"),
            ScorerSpec::External(cmd) => write!(f, "external:{cmd}"),
        }
    }
}

impl ScorerSpec {
    pub fn open(&self, native: NativeConfig, external: ExternalOptions) -> Result<Box<dyn Scorer>> {
        Ok(match self {
            ScorerSpec::Native => Box::new(NativeScorer::new(native)),
            ScorerSpec::External(cmd) => Box::new(external_connect(cmd, external)?),
        })
    }
}
