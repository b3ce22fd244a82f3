//! Hashed-feature logistic scorer.
//!
//! Binary features of a (context, question) pair:
//!
//! * `C:<tok>` context unigrams and `CB:<tok> <tok>` context bigrams
//! * `Q:<tok>` question unigrams
//! * `X:<q>|<c>` every question unigram crossed with every context unigram
//!
//! Tokens are lowercased alphanumeric runs. Each feature string is hashed with
//! 64-bit FNV-1a (offset basis xor salt), then passed through the splitmix64
//! finalizer; the low 20 bits pick the bucket and the top bit of a second
//! finalized hash picks the sign. Values are scaled by `1/sqrt(nnz)` where
//! `nnz` counts distinct feature strings.

use std::collections::BTreeSet;
use std::fs;
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Prompt, Scorer};
use crate::corpus::QaInstance;
use crate::error::{Error, Result};

pub const HASH_BITS: u32 = 20;
pub const DIM: usize = 1 << HASH_BITS;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const SIGN_KEY: u64 = 0x9e37_79b9_7f4a_7c15;
const CHECKPOINT_MAGIC: &[u8; 8] = b"MTNATIVE";
const CHECKPOINT_VERSION: u32 = 1;

/// Lowercase, split on any non-alphanumeric run.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Bucket and sign of the feature whose string is the concatenation of `parts`.
pub fn feature_slot(salt: u64, parts: &[&str]) -> (u32, f64) {
    let mut h = FnvHasher::with_key(FNV_OFFSET ^ salt);
    for p in parts {
        h.write(p.as_bytes());
    }
    let h = h.finish();
    let bucket = (splitmix(h) & (DIM as u64 - 1)) as u32;
    let sign = if splitmix(h ^ SIGN_KEY) >> 63 == 0 { 1.0 } else { -1.0 };
    (bucket, sign)
}

/// Sparse feature vector, sorted by bucket with collisions summed.
#[derive(Debug, Clone, PartialEq)]
pub struct Features(pub Vec<(u32, f64)>);

impl Features {
    pub fn extract(salt: u64, context: &str, question: &str) -> Self {
        let ctx_tokens = tokenize(context);
        let ctx: BTreeSet<&str> = ctx_tokens.iter().map(String::as_str).collect();
        let bigrams: BTreeSet<(&str, &str)> = ctx_tokens
            .windows(2)
            .map(|w| (w[0].as_str(), w[1].as_str()))
            .collect();
        let q_tokens = tokenize(question);
        let q: BTreeSet<&str> = q_tokens.iter().map(String::as_str).collect();

        let mut slots = Vec::with_capacity(ctx.len() + bigrams.len() + q.len() * (1 + ctx.len()));
        slots.extend(ctx.iter().map(|c| feature_slot(salt, &["C:", c])));
        slots.extend(bigrams.iter().map(|(a, b)| feature_slot(salt, &["CB:", a, " ", b])));
        for qt in &q {
            slots.push(feature_slot(salt, &["Q:", qt]));
            slots.extend(ctx.iter().map(|c| feature_slot(salt, &["X:", qt, "|", c])));
        }
        if slots.is_empty() {
            return Features(Vec::new());
        }

        let scale = 1.0 / (slots.len() as f64).sqrt();
        slots.sort_unstable_by_key(|&(b, _)| b);
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(slots.len());
        for (b, s) in slots {
            match merged.last_mut() {
                Some((last, v)) if *last == b => *v += s,
                _ => merged.push((b, s)),
            }
        }
        merged.retain(|&(_, v)| v != 0.0);
        for (_, v) in &mut merged {
            *v *= scale;
        }
        Features(merged)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-ln p(target | z)` for a logistic model, computed without overflow.
pub fn bce_with_logit(z: f64, target: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p() - target * z
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NativeConfig {
    pub learning_rate: f64,
    /// L2 penalty applied to the weights touched by a batch.
    pub l2: f64,
    pub salt: u64,
}

impl Default for NativeConfig {
    fn default() -> Self {
        NativeConfig {
            learning_rate: 0.05,
            l2: 0.0,
            salt: 0,
        }
    }
}

/// Gradient of the mean batch loss. Weight entries are sorted by bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<(u32, f64)>,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NativeScorer {
    config: NativeConfig,
    weights: Vec<f64>,
    bias: f64,
}

impl NativeScorer {
    /// Zero-initialized model: every input scores exactly 0.5.
    pub fn new(config: NativeConfig) -> Self {
        NativeScorer {
            config,
            weights: vec![0.0; DIM],
            bias: 0.0,
        }
    }

    pub fn config(&self) -> &NativeConfig {
        &self.config
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn set_bias(&mut self, bias: f64) {
        self.bias = bias;
    }

    pub fn features(&self, context: &str, question: &str) -> Features {
        Features::extract(self.config.salt, context, question)
    }

    pub fn logit(&self, x: &Features) -> f64 {
        self.bias + x.0.iter().map(|&(b, v)| self.weights[b as usize] * v).sum::<f64>()
    }

    pub fn predict(&self, context: &str, question: &str) -> f64 {
        sigmoid(self.logit(&self.features(context, question)))
    }

    pub fn predict_all(&self, prompts: &[Prompt<'_>]) -> Vec<f64> {
        prompts
            .par_iter()
            .with_min_len(64)
            .map(|p| self.predict(p.context, p.question))
            .collect()
    }

    fn encode(&self, batch: &[QaInstance]) -> Vec<(Features, f64)> {
        batch
            .iter()
            .map(|q| (self.features(&q.context, &q.question), q.answer.target()))
            .collect()
    }

    fn mean_loss(&self, encoded: &[(Features, f64)]) -> f64 {
        let total: f64 = encoded
            .iter()
            .map(|(x, y)| bce_with_logit(self.logit(x), *y))
            .sum();
        total / encoded.len() as f64
    }

    fn gradient_of(&self, encoded: &[(Features, f64)]) -> Gradient {
        let n = encoded.len() as f64;
        let mut entries = Vec::new();
        let mut bias = 0.0;
        for (x, y) in encoded {
            let residual = (sigmoid(self.logit(x)) - y) / n;
            bias += residual;
            entries.extend(x.0.iter().map(|&(b, v)| (b, residual * v)));
        }
        entries.sort_by_key(|&(b, _)| b);
        let mut weights: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
        for (b, g) in entries {
            match weights.last_mut() {
                Some((last, acc)) if *last == b => *acc += g,
                _ => weights.push((b, g)),
            }
        }
        if self.config.l2 > 0.0 {
            for (b, g) in &mut weights {
                *g += self.config.l2 * self.weights[*b as usize];
            }
        }
        Gradient { weights, bias }
    }

    /// Mean binary cross-entropy of the batch under the current weights
    /// (plus the L2 term over touched weights, when enabled).
    pub fn loss(&self, batch: &[QaInstance]) -> f64 {
        if batch.is_empty() {
            return 0.0;
        }
        let encoded = self.encode(batch);
        let mut loss = self.mean_loss(&encoded);
        if self.config.l2 > 0.0 {
            let touched: BTreeSet<u32> = encoded.iter().flat_map(|(x, _)| x.0.iter().map(|&(b, _)| b)).collect();
            loss += 0.5 * self.config.l2 * touched.iter().map(|&b| self.weights[b as usize].powi(2)).sum::<f64>();
        }
        loss
    }

    /// Analytic gradient of [`NativeScorer::loss`].
    pub fn gradient(&self, batch: &[QaInstance]) -> Gradient {
        self.gradient_of(&self.encode(batch))
    }

    /// One SGD step; returns the loss before the update.
    pub fn train_step(&mut self, batch: &[QaInstance]) -> f64 {
        if batch.is_empty() {
            return 0.0;
        }
        let encoded = self.encode(batch);
        let loss = self.mean_loss(&encoded);
        let grad = self.gradient_of(&encoded);
        let lr = self.config.learning_rate;
        for (b, g) in grad.weights {
            self.weights[b as usize] -= lr * g;
        }
        self.bias -= lr * grad.bias;
        loss
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let nonzero: Vec<(u32, f64)> = self
            .weights
            .iter()
            .enumerate()
            .filter(|(_, w)| w.to_bits() != 0)
            .map(|(i, &w)| (i as u32, w))
            .collect();
        let mut out = Vec::with_capacity(56 + nonzero.len() * 12);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&HASH_BITS.to_le_bytes());
        out.extend_from_slice(&self.config.salt.to_le_bytes());
        out.extend_from_slice(&self.config.learning_rate.to_le_bytes());
        out.extend_from_slice(&self.config.l2.to_le_bytes());
        out.extend_from_slice(&self.bias.to_le_bytes());
        out.extend_from_slice(&(nonzero.len() as u64).to_le_bytes());
        for (i, w) in nonzero {
            out.extend_from_slice(&i.to_le_bytes());
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader(bytes);
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a native scorer checkpoint".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let bits = r.u32()?;
        if bits != HASH_BITS {
            return Err(Error::Checkpoint(format!("checkpoint uses 2^{bits} buckets, expected 2^{HASH_BITS}")));
        }
        let config = NativeConfig {
            salt: r.u64()?,
            learning_rate: r.f64()?,
            l2: r.f64()?,
        };
        let mut model = NativeScorer::new(config);
        model.bias = r.f64()?;
        let nnz = r.u64()?;
        for _ in 0..nnz {
            let i = r.u32()? as usize;
            let w = r.f64()?;
            *model
                .weights
                .get_mut(i)
                .ok_or_else(|| Error::Checkpoint(format!("bucket {i} out of range")))? = w;
        }
        if !r.0.is_empty() {
            return Err(Error::Checkpoint("trailing bytes after weights".into()));
        }
        Ok(model)
    }
}

struct ByteReader<'a>(&'a [u8]);

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.0.len() < n {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Scorer for NativeScorer {
    fn score_batch(&mut self, prompts: &[Prompt<'_>]) -> Result<Vec<f64>> {
        Ok(self.predict_all(prompts))
    }

    fn train_batch(&mut self, batch: &[QaInstance]) -> Result<f64> {
        Ok(self.train_step(batch))
    }

    fn save(&mut self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    fn load(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        *self = NativeScorer::from_bytes(&bytes)?;
        Ok(())
    }
}
