//! The balanced meta-tuning stream.
//!
//! Each draw picks a training dataset uniformly, then one of its descriptions
//! uniformly, then Yes or No with probability 1/2, then an unseen example with
//! that gold answer. A (description, example) pair is never emitted twice.
//!
//! When pools run dry: an empty answer pool falls back to the other answer, an
//! exhausted description drops out of its dataset's rotation, and an exhausted
//! dataset drops out of the stream.

use crate::corpus::{Corpus, Dataset, LabelDescription, QaInstance};
use crate::error::{Error, Result};
use crate::grouping::SplitPlan;
use crate::rng::StreamRng;

#[derive(Debug)]
struct DescriptionPool<'a> {
    description: &'a LabelDescription,
    yes: Vec<usize>,
    no: Vec<usize>,
}

impl DescriptionPool<'_> {
    fn is_empty(&self) -> bool {
        self.yes.is_empty() && self.no.is_empty()
    }
}

#[derive(Debug)]
struct DatasetPool<'a> {
    dataset: &'a Dataset,
    descriptions: Vec<DescriptionPool<'a>>,
}

/// A batch from [`Sampler::next_batch`]. `exhausted` is set when the pool ran
/// out before the requested size was reached.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub instances: Vec<QaInstance>,
    pub exhausted: bool,
}

/// Sequential, single-consumer sampler over the training side of a plan.
#[derive(Debug)]
pub struct Sampler<'a> {
    seed: u64,
    rng: StreamRng,
    active: Vec<DatasetPool<'a>>,
    emitted: usize,
}

impl<'a> Sampler<'a> {
    pub fn new(corpus: &'a Corpus, plan: &SplitPlan, seed: u64) -> Result<Self> {
        Self::over(corpus, &plan.train_dataset_ids, seed)
    }

    /// Sampler over an explicit list of training datasets.
    pub fn over<S: AsRef<str>>(corpus: &'a Corpus, dataset_ids: &[S], seed: u64) -> Result<Self> {
        let mut ids: Vec<&str> = dataset_ids.iter().map(AsRef::as_ref).collect();
        ids.sort_unstable();
        ids.dedup();

        let mut active = Vec::new();
        for id in ids {
            let dataset = corpus.dataset(id)?;
            let descriptions: Vec<_> = dataset
                .descriptions()
                .map(|description| {
                    let (mut yes, mut no) = (Vec::new(), Vec::new());
                    for (i, ex) in dataset.examples.iter().enumerate() {
                        if ex.gold_labels.contains(&description.label_id) {
                            yes.push(i);
                        } else {
                            no.push(i);
                        }
                    }
                    DescriptionPool { description, yes, no }
                })
                .filter(|p| !p.is_empty())
                .collect();
            if !descriptions.is_empty() {
                active.push(DatasetPool { dataset, descriptions });
            }
        }
        if active.is_empty() {
            return Err(Error::EmptyTrainingPool);
        }
        Ok(Sampler {
            seed,
            rng: StreamRng::new(seed),
            active,
            emitted: 0,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Instances emitted so far.
    pub fn emitted(&self) -> usize {
        self.emitted
    }

    /// Pairs not yet emitted.
    pub fn remaining(&self) -> usize {
        self.active
            .iter()
            .flat_map(|d| &d.descriptions)
            .map(|p| p.yes.len() + p.no.len())
            .sum()
    }

    pub fn is_exhausted(&self) -> bool {
        self.active.is_empty()
    }

    fn draw(&mut self) -> Option<QaInstance> {
        if self.active.is_empty() {
            return None;
        }
        let di = self.rng.below(self.active.len());
        let pool = &mut self.active[di];
        let dataset = pool.dataset;
        let qi = self.rng.below(pool.descriptions.len());
        let desc = &mut pool.descriptions[qi];
        let want_yes = self.rng.coin();
        let bucket = match (want_yes, desc.yes.is_empty(), desc.no.is_empty()) {
            (true, false, _) | (false, _, true) => &mut desc.yes,
            _ => &mut desc.no,
        };
        let ei = self.rng.below(bucket.len());
        let example = &dataset.examples[bucket.swap_remove(ei)];
        let instance = QaInstance::new(desc.description, example);

        if desc.is_empty() {
            pool.descriptions.remove(qi);
            if pool.descriptions.is_empty() {
                self.active.remove(di);
            }
        }
        self.emitted += 1;
        Some(instance)
    }

    /// Draws up to `n` instances.
    pub fn next_batch(&mut self, n: usize) -> Result<Batch> {
        if n == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        let mut instances = Vec::with_capacity(n);
        while instances.len() < n {
            match self.draw() {
                Some(inst) => instances.push(inst),
                None => {
                    return Ok(Batch {
                        instances,
                        exhausted: true,
                    })
                }
            }
        }
        Ok(Batch {
            instances,
            exhausted: false,
        })
    }
}
