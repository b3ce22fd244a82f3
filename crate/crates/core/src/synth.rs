//! Synthetic multi-task corpora with known ground truth.
//!
//! Every task draws its labels' keywords from one shared keyword pool, so
//! labels within a task have disjoint keywords while the same keyword
//! reappears in other tasks and groups. A description asks about (a rotating
//! window of) its label's keywords; a positive example contains at least two of
//! them among distractor tokens. Whether the question's keywords occur in the
//! context is therefore a signal that transfers to held-out groups.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{write_corpus, Corpus, Dataset, Example, Label, LabelDescription};
use crate::error::{Error, Result};
use crate::rng::StreamRng;

pub const CONFIG_FILE: &str = "synth.json";

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const WORD_SPACE: usize = 70 * 70 * 70;

/// Paraphrase templates; `{}` is replaced by the keywords joined with " or ".
const TEMPLATES: [&str; 3] = [
    "is this text about {}?",
    "does this passage mention {}?",
    "does the text discuss any of {}?",
];

fn default_pool() -> usize {
    48
}
fn default_per_example() -> usize {
    2
}
fn default_context_length() -> usize {
    10
}
fn default_distractors() -> usize {
    400
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_groups: usize,
    pub tasks_per_group: usize,
    pub labels_per_task: usize,
    pub keywords_per_label: usize,
    pub examples_per_label: usize,
    /// 1 to 3.
    pub paraphrases_per_label: usize,
    /// Probability that a context token is replaced by a distractor.
    pub noise_rate: f64,
    #[serde(default = "default_pool")]
    pub keyword_pool_size: usize,
    /// Keywords named by each description; all of the label's when absent.
    #[serde(default)]
    pub keywords_per_description: Option<usize>,
    #[serde(default = "default_per_example")]
    pub keywords_per_example: usize,
    #[serde(default = "default_context_length")]
    pub context_length: usize,
    #[serde(default = "default_distractors")]
    pub distractor_vocab_size: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_groups: 4,
            tasks_per_group: 2,
            labels_per_task: 3,
            keywords_per_label: 4,
            examples_per_label: 50,
            paraphrases_per_label: 2,
            noise_rate: 0.1,
            keyword_pool_size: default_pool(),
            keywords_per_description: None,
            keywords_per_example: default_per_example(),
            context_length: default_context_length(),
            distractor_vocab_size: default_distractors(),
        }
    }
}

impl SynthConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::malformed(path, None, e))
    }

    pub fn keywords_per_description(&self) -> usize {
        self.keywords_per_description.unwrap_or(self.keywords_per_label)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        for (name, v) in [
            ("n_groups", self.n_groups),
            ("tasks_per_group", self.tasks_per_group),
            ("labels_per_task", self.labels_per_task),
            ("keywords_per_label", self.keywords_per_label),
            ("examples_per_label", self.examples_per_label),
            ("paraphrases_per_label", self.paraphrases_per_label),
            ("distractor_vocab_size", self.distractor_vocab_size),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.paraphrases_per_label > TEMPLATES.len() {
            return bad(format!("paraphrases_per_label must be at most {}", TEMPLATES.len()));
        }
        if !(0.0..=0.9).contains(&self.noise_rate) {
            return bad(format!("noise_rate {} outside [0, 0.9]", self.noise_rate));
        }
        let k = self.keywords_per_label;
        let per_desc = self.keywords_per_description();
        let per_ex = self.keywords_per_example;
        if per_ex < 2 || per_ex > k {
            return bad(format!("keywords_per_example must be in 2..={k}"));
        }
        if per_desc == 0 || per_desc > k {
            return bad(format!("keywords_per_description must be in 1..={k}"));
        }
        if per_desc + per_ex < k + 2 {
            return bad(format!(
                "keywords_per_description + keywords_per_example must be at least keywords_per_label + 2 \
                 so every positive shares 2 keywords with each description"
            ));
        }
        if self.context_length < per_ex {
            return bad("context_length shorter than keywords_per_example".into());
        }
        let needed = self.labels_per_task * k;
        if needed > self.keyword_pool_size {
            return Err(Error::VocabularyTooSmall {
                needed,
                available: self.keyword_pool_size,
            });
        }
        if self.keyword_pool_size + self.distractor_vocab_size > WORD_SPACE {
            return Err(Error::VocabularyTooSmall {
                needed: self.keyword_pool_size + self.distractor_vocab_size,
                available: WORD_SPACE,
            });
        }
        Ok(())
    }
}

/// Pseudo-word number `i`: three consonant-vowel syllables.
fn word(i: usize) -> String {
    // 7919 is coprime to 70^3, so this is a permutation of the word space
    let mut n = (i * 7919 + 13) % WORD_SPACE;
    let mut out = String::with_capacity(6);
    for _ in 0..3 {
        let syl = n % 70;
        n /= 70;
        out.push(CONSONANTS[syl / 5] as char);
        out.push(VOWELS[syl % 5] as char);
    }
    out
}

pub fn keyword(i: usize) -> String {
    word(i)
}

pub fn distractor(config: &SynthConfig, i: usize) -> String {
    word(config.keyword_pool_size + i)
}

fn dataset_id(group: usize, task: usize) -> String {
    format!("g{group}-t{task}")
}

/// Keywords a description names: a window rotated by the paraphrase index.
fn description_window(keywords: &[usize], per_desc: usize, paraphrase: usize) -> Vec<usize> {
    (0..per_desc)
        .map(|j| keywords[(paraphrase + j) % keywords.len()])
        .collect()
}

fn generate_task(config: &SynthConfig, rng: &mut StreamRng, group: usize, task: usize) -> Dataset {
    let id = dataset_id(group, task);
    let k = config.keywords_per_label;

    let mut pool: Vec<usize> = (0..config.keyword_pool_size).collect();
    rng.shuffle(&mut pool);
    let label_keywords: Vec<&[usize]> = (0..config.labels_per_task)
        .map(|l| &pool[l * k..(l + 1) * k])
        .collect();

    let labels = label_keywords
        .iter()
        .enumerate()
        .map(|(l, kws)| {
            let label_id = format!("l{l}");
            let descriptions = (0..config.paraphrases_per_label)
                .map(|p| {
                    let window = description_window(kws, config.keywords_per_description(), p);
                    let words: Vec<String> = window.iter().map(|&w| keyword(w)).collect();
                    LabelDescription {
                        id: format!("{label_id}-q{p}"),
                        label_id: label_id.clone(),
                        dataset_id: id.clone(),
                        question: TEMPLATES[p].replace("{}", &words.join(" or ")),
                        synthesized: false,
                    }
                })
                .collect();
            Label {
                name: format!("about {}", keyword(kws[0])),
                id: label_id,
                dataset_id: id.clone(),
                null: false,
                descriptions,
            }
        })
        .collect();

    let mut drafts: Vec<(usize, String)> = Vec::new();
    for (l, kws) in label_keywords.iter().enumerate() {
        for _ in 0..config.examples_per_label {
            let mut own: Vec<usize> = kws.to_vec();
            rng.shuffle(&mut own);
            let mut tokens: Vec<String> = own[..config.keywords_per_example]
                .iter()
                .map(|&w| keyword(w))
                .collect();
            while tokens.len() < config.context_length {
                tokens.push(distractor(config, rng.below(config.distractor_vocab_size)));
            }
            rng.shuffle(&mut tokens);
            for t in &mut tokens {
                if rng.chance(config.noise_rate) {
                    *t = distractor(config, rng.below(config.distractor_vocab_size));
                }
            }
            drafts.push((l, tokens.join(" ")));
        }
    }
    rng.shuffle(&mut drafts);
    let width = drafts.len().to_string().len();
    let examples = drafts
        .into_iter()
        .enumerate()
        .map(|(i, (l, text))| Example {
            id: format!("e{i:0width$}"),
            dataset_id: id.clone(),
            text,
            gold_labels: [format!("l{l}")].into_iter().collect(),
        })
        .collect();

    Dataset {
        name: format!("synthetic task {task} of family {group}"),
        tags: ["synthetic".to_string(), format!("family-{group}")].into_iter().collect(),
        eval_allowed: true,
        labels,
        examples,
        id,
    }
}

/// Builds the corpus in memory.
pub fn generate(config: &SynthConfig) -> Result<Corpus> {
    config.validate()?;
    let mut rng = StreamRng::new(config.seed);
    let mut datasets = Vec::new();
    for g in 0..config.n_groups {
        for t in 0..config.tasks_per_group {
            datasets.push(generate_task(config, &mut rng, g, t));
        }
    }
    Corpus::new(datasets)
}

/// Builds the corpus and writes it, plus a copy of the config, under `out_dir`.
pub fn generate_synthetic_corpus(config: &SynthConfig, out_dir: &Path) -> Result<Corpus> {
    let corpus = generate(config)?;
    write_corpus(&corpus, out_dir)?;
    let path = out_dir.join(CONFIG_FILE);
    let mut text = serde_json::to_string_pretty(config).expect("config serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(corpus)
}

/// Dataset ids belonging to synthetic group `group`.
pub fn group_dataset_ids(config: &SynthConfig, group: usize) -> Vec<String> {
    (0..config.tasks_per_group).map(|t| dataset_id(group, t)).collect()
}
