//! Meta-tuning pipeline for zero-shot text classification.
//!
//! Classification datasets are unified into a Yes/No question-answering
//! format ([`corpus`]), grouped by tag set to build unseen-task splits
//! ([`grouping`]), streamed as a balanced training distribution ([`sampler`]),
//! used to train pluggable scorers ([`scorer`]) and evaluated with
//! per-description AUC-ROC and paired comparison statistics ([`metrics`]).
//! [`synth`] generates corpora with known ground truth.

pub mod corpus;
pub mod error;
pub mod grouping;
pub mod metrics;
pub mod rng;
pub mod sampler;
pub mod scorer;
pub mod synth;

pub use corpus::{load_corpus, to_qa_instances, validate_corpus, write_corpus, Answer, Corpus, QaInstance};
pub use error::{Error, Result};
pub use grouping::{group_by_tags, make_splits, plan_for, SplitMode, SplitPlan};
pub use sampler::Sampler;
pub use scorer::{NativeConfig, NativeScorer, Scorer};
