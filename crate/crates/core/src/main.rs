use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use metatune::corpus::{load_corpus, validate_corpus};
use metatune::grouping::{make_splits, plan_for, splits_to_json, SplitMode};
use metatune::metrics::benchmark::{predict_labels, BenchmarkMetric, DEFAULT_YES_THRESHOLD};
use metatune::metrics::curve::{relative_auc_curve, DEFAULT_REFERENCE_STEP};
use metatune::metrics::delta::{
    pair_aucs, scatter_data, summarize, verdict, write_scatter_csv, StatsRecord, VerdictRecord, Weighting,
    DEFAULT_THRESHOLDS,
};
use metatune::metrics::table::{mean_auc, read_eval_csv, write_eval_csv};
use metatune::metrics::eval_descriptions;
use metatune::sampler::Sampler;
use metatune::scorer::external::ExternalOptions;
use metatune::scorer::train::{checkpoint_path, run_meta_tuning, TrainRunConfig, DEFAULT_BATCH_SIZE, DEFAULT_STEPS};
use metatune::scorer::{NativeConfig, Scorer, ScorerSpec};
use metatune::synth::{generate_synthetic_corpus, SynthConfig};
use metatune::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "metatune", version, about = "Meta-tuning pipeline for zero-shot classification")]
struct Cli {
    /// Worker threads for scoring (default: logical CPUs).
    #[arg(long, global = true, env = "METATUNE_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and check a corpus, print per-dataset counts and warnings.
    Validate {
        #[arg(long)]
        corpus: PathBuf,
        /// Print the full report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Write one split plan per evaluable dataset.
    Split {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "unseen")]
        mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the first training instances of a split as JSON lines.
    SamplePreview {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        split_id: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        n: usize,
    },
    /// Meta-tune a scorer on a split's training datasets.
    Train {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = DEFAULT_STEPS)]
        steps: usize,
        #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
        batch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// 0 writes only the final checkpoint.
        #[arg(long, default_value_t = 0)]
        checkpoint_every: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 0.0)]
        l2: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-description AUC on a split's held-out dataset.
    Eval {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Average each label's descriptions before computing AUC.
        #[arg(long)]
        ensemble: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Paired comparison of two eval tables.
    Compare {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        cand: PathBuf,
        #[arg(long, default_value = "description")]
        weighting: WeightingArg,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_THRESHOLDS.to_vec())]
        thresholds: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write per-description points for plotting.
        #[arg(long)]
        scatter: bool,
    },
    /// Single-label classification metric on a split's held-out dataset.
    Benchmark {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "weighted-f1")]
        metric: BenchmarkMetric,
        #[arg(long, default_value_t = DEFAULT_YES_THRESHOLD)]
        yes_threshold: f64,
        #[arg(long)]
        null_label: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean AUC over a checkpoint series, relative to a reference step.
    Curve {
        /// Comma-separated `step:eval.csv` pairs.
        #[arg(long, value_delimiter = ',', required = true)]
        evals: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_REFERENCE_STEP)]
        relative_step: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic corpus from a config file.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Args)]
struct Target {
    #[arg(long)]
    corpus: PathBuf,
    /// `unseen:<dataset>`, `similar:<dataset>` or a bare dataset id (unseen).
    #[arg(long)]
    split_id: String,
    /// `native` or `external:<command line>`.
    #[arg(long, default_value = "native")]
    scorer: ScorerSpec,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Unseen,
    Similar,
}

impl From<ModeArg> for SplitMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Unseen => SplitMode::Unseen,
            ModeArg::Similar => SplitMode::Similar,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum WeightingArg {
    Description,
    Label,
    Dataset,
    All,
}

#[derive(Debug, Serialize)]
struct RunManifest {
    command: &'static str,
    config: serde_json::Value,
    seed: Option<u64>,
    corpus: Option<PathBuf>,
    split_id: Option<String>,
    scorer: Option<String>,
    outputs: Vec<String>,
    version: &'static str,
    created_unix: u64,
}

impl RunManifest {
    fn new(command: &'static str, config: serde_json::Value) -> Self {
        RunManifest {
            command,
            config,
            seed: None,
            corpus: None,
            split_id: None,
            scorer: None,
            outputs: Vec::new(),
            version: env!("CARGO_PKG_VERSION"),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    fn target(mut self, t: &Target) -> Self {
        self.corpus = Some(t.corpus.clone());
        self.split_id = Some(t.split_id.clone());
        self.scorer = Some(t.scorer.to_string());
        self
    }

    fn write(mut self, out: &Path, outputs: &[&str]) -> Result<()> {
        self.outputs = outputs.iter().map(|s| s.to_string()).collect();
        let text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        write_text(&out.join("manifest.json"), &text)
    }
}

fn io_err(path: &Path, source: io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut text = text.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &serde_json::to_string_pretty(value).expect("output serializes"))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes).as_slice()))
}

fn open_scorer(spec: &ScorerSpec, native: NativeConfig, checkpoint: Option<&Path>) -> Result<Box<dyn Scorer>> {
    let mut scorer = spec.open(native, ExternalOptions::default())?;
    if let Some(path) = checkpoint {
        scorer.load(path)?;
    }
    Ok(scorer)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Error::InvalidArgument("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }

    match cli.command {
        Command::Validate { corpus, json } => {
            let c = load_corpus(&corpus)?;
            let report = validate_corpus(&c);
            let mut stdout = io::stdout().lock();
            if json {
                let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else {
                for d in &report.datasets {
                    let _ = writeln!(
                        stdout,
                        "{}: {} labels, {} descriptions, {} examples",
                        d.dataset_id, d.n_labels, d.n_descriptions, d.n_examples
                    );
                }
            }
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
        }

        Command::Split { corpus, mode, out } => {
            let c = load_corpus(&corpus)?;
            let mode = SplitMode::from(mode);
            let plans = make_splits(&c, mode)?;
            create_dir(&out)?;
            write_text(&out.join("splits.json"), &splits_to_json(mode, &plans))?;
            let mut m = RunManifest::new("split", serde_json::json!({ "mode": mode }));
            m.corpus = Some(corpus);
            m.write(&out, &["splits.json"])?;
        }

        Command::SamplePreview { corpus, split_id, seed, n } => {
            let c = load_corpus(&corpus)?;
            let plan = plan_for(&c, &split_id)?;
            let mut sampler = Sampler::new(&c, &plan, seed)?;
            let mut stdout = io::stdout().lock();
            if n > 0 {
                for qa in sampler.next_batch(n)?.instances {
                    let _ = writeln!(stdout, "{}", serde_json::to_string(&qa).expect("instance serializes"));
                }
            }
        }

        Command::Train {
            target,
            steps,
            batch,
            seed,
            checkpoint_every,
            lr,
            l2,
            out,
        } => {
            let c = load_corpus(&target.corpus)?;
            let plan = plan_for(&c, &target.split_id)?;
            let config = TrainRunConfig {
                steps,
                batch_size: batch,
                checkpoint_every,
                seed,
            };
            config.validate()?;
            let native = NativeConfig {
                learning_rate: lr,
                l2,
                ..NativeConfig::default()
            };
            let mut sampler = Sampler::new(&c, &plan, seed)?;
            let mut scorer = open_scorer(&target.scorer, native, None)?;
            if !scorer.is_trainable() {
                return Err(Error::Adapter("scorer is not trainable".into()));
            }
            create_dir(&out)?;
            let series = run_meta_tuning(&mut scorer, &mut sampler, &config, |step, s| {
                s.save(&checkpoint_path(&out, step))
            })?;

            #[derive(Serialize)]
            struct CheckpointRecord {
                step: usize,
                file: String,
                sha256: String,
            }
            let mut checkpoints = Vec::new();
            for &step in &series.checkpoints {
                let path = checkpoint_path(&out, step);
                checkpoints.push(CheckpointRecord {
                    step,
                    file: path.file_name().unwrap().to_string_lossy().into_owned(),
                    sha256: sha256_file(&path)?,
                });
            }
            if series.exhausted {
                eprintln!(
                    "warning: training pool exhausted after {} of {} steps",
                    series.steps_completed, steps
                );
            }
            write_json(
                &out.join("train.json"),
                &serde_json::json!({
                    "split_id": plan.id(),
                    "steps_completed": series.steps_completed,
                    "exhausted": series.exhausted,
                    "losses": series.losses,
                    "checkpoints": checkpoints,
                }),
            )?;
            if let Some(last) = checkpoints.last() {
                println!("{} {}", last.sha256, last.file);
            }
            let mut outputs = vec!["train.json".to_string()];
            outputs.extend(checkpoints.iter().map(|c| c.file.clone()));
            let outputs: Vec<&str> = outputs.iter().map(String::as_str).collect();
            let mut m = RunManifest::new(
                "train",
                serde_json::json!({
                    "steps": steps, "batch": batch, "checkpoint_every": checkpoint_every,
                    "lr": lr, "l2": l2,
                }),
            )
            .target(&target);
            m.seed = Some(seed);
            m.write(&out, &outputs)?;
        }

        Command::Eval {
            target,
            checkpoint,
            ensemble,
            out,
        } => {
            let c = load_corpus(&target.corpus)?;
            let plan = plan_for(&c, &target.split_id)?;
            let mut scorer = open_scorer(&target.scorer, NativeConfig::default(), checkpoint.as_deref())?;
            let mut eval = eval_descriptions(&mut scorer, &c, &plan)?;
            if ensemble {
                eval = eval.ensembled();
            }
            for ex in &eval.excluded {
                eprintln!("warning: excluded {ex}");
            }
            create_dir(&out)?;
            write_eval_csv(&out.join("eval.csv"), &eval.aucs)?;
            match eval.mean_auc() {
                Some(m) => println!("mean AUC {m:.6} over {} descriptions", eval.aucs.len()),
                None => eprintln!("warning: no description could be evaluated"),
            }
            let mut m = RunManifest::new(
                "eval",
                serde_json::json!({ "checkpoint": checkpoint, "ensemble": ensemble }),
            )
            .target(&target);
            m.split_id = Some(plan.id());
            m.write(&out, &["eval.csv"])?;
        }

        Command::Compare {
            base,
            cand,
            weighting,
            thresholds,
            out,
            scatter,
        } => {
            if thresholds.iter().any(|t| !t.is_finite() || *t < 0.0) {
                return Err(Error::InvalidArgument("thresholds must be non-negative".into()));
            }
            let b = read_eval_csv(&base)?;
            let c = read_eval_csv(&cand)?;
            create_dir(&out)?;
            let mut outputs = vec!["stats.json"];
            let mut v_failed = 0;
            match weighting {
                WeightingArg::All => {
                    let v = verdict(&b, &c, &thresholds)?;
                    let record = VerdictRecord::from(&v);
                    write_json(&out.join("stats.json"), &record.stats)?;
                    write_json(&out.join("verdict.json"), &record)?;
                    outputs.push("verdict.json");
                    if v.better {
                        println!("candidate is better under all {} conditions", 3 * (1 + thresholds.len()));
                    } else {
                        println!("candidate is not better; failed:");
                        for f in &record.failed_conditions {
                            println!("  {f}");
                        }
                        v_failed = record.failed_conditions.len();
                    }
                }
                single => {
                    let w = match single {
                        WeightingArg::Description => Weighting::Description,
                        WeightingArg::Label => Weighting::Label,
                        _ => Weighting::Dataset,
                    };
                    let stats = summarize(&pair_aucs(&b, &c)?, w, &thresholds);
                    println!("E[delta] = {:+.6} over {} descriptions", stats.e_delta, stats.n_descriptions);
                    write_json(&out.join("stats.json"), &StatsRecord::from(&stats))?;
                }
            }
            if scatter {
                write_scatter_csv(&out.join("scatter.csv"), &scatter_data(&b, &c)?)?;
                outputs.push("scatter.csv");
            }
            RunManifest::new(
                "compare",
                serde_json::json!({
                    "base": base, "cand": cand, "weighting": format!("{weighting:?}").to_lowercase(),
                    "thresholds": thresholds,
                }),
            )
            .write(&out, &outputs)?;
            if v_failed > 0 {
                return Err(Error::NotBetter(v_failed));
            }
        }

        Command::Benchmark {
            target,
            checkpoint,
            metric,
            yes_threshold,
            null_label,
            out,
        } => {
            let c = load_corpus(&target.corpus)?;
            let plan = plan_for(&c, &target.split_id)?;
            let dataset = c.dataset(&plan.eval_dataset_id)?;
            let mut scorer = open_scorer(&target.scorer, NativeConfig::default(), checkpoint.as_deref())?;
            let preds = predict_labels(&mut scorer, dataset, yes_threshold, null_label.as_deref())?;
            let value = metric.compute(&preds.preds, &preds.golds)?;
            println!("{metric} {value:.6} over {} examples", preds.preds.len());
            if let Some(out) = out {
                create_dir(&out)?;
                let path = out.join("predictions.csv");
                let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e.into(),
                })?;
                let csv_err = |e: csv::Error| Error::Io {
                    path: path.clone(),
                    source: e.into(),
                };
                w.write_record(["example_id", "pred", "gold"]).map_err(csv_err)?;
                for i in 0..preds.preds.len() {
                    w.write_record([&preds.example_ids[i], &preds.preds[i], &preds.golds[i]])
                        .map_err(csv_err)?;
                }
                w.flush().map_err(|e| io_err(&path, e))?;
                write_json(
                    &out.join("benchmark.json"),
                    &serde_json::json!({ "metric": metric.to_string(), "value": value, "n": preds.preds.len() }),
                )?;
                let mut m = RunManifest::new(
                    "benchmark",
                    serde_json::json!({
                        "checkpoint": checkpoint, "metric": metric.to_string(),
                        "yes_threshold": yes_threshold, "null_label": null_label,
                    }),
                )
                .target(&target);
                m.split_id = Some(plan.id());
                m.write(&out, &["benchmark.json", "predictions.csv"])?;
            }
        }

        Command::Curve {
            evals,
            relative_step,
            out,
        } => {
            let mut series = Vec::new();
            for spec in &evals {
                let (step, file) = spec
                    .split_once(':')
                    .ok_or_else(|| Error::InvalidArgument(format!("expected step:file, got {spec:?}")))?;
                let step: usize = step
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad step in {spec:?}")))?;
                let path = Path::new(file.trim());
                let aucs = read_eval_csv(path)?;
                let m = mean_auc(&aucs)
                    .ok_or_else(|| Error::InvalidArgument(format!("{} has no AUC rows", path.display())))?;
                series.push((step, m));
            }
            let curve = relative_auc_curve(&series, relative_step)?;
            create_dir(&out)?;
            let path = out.join("curve.csv");
            let mut text = String::from("step,mean_auc,relative\n");
            for p in &curve.points {
                text.push_str(&format!("{},{},{}\n", p.step, p.mean_auc, p.relative));
            }
            write_text(&path, &text)?;
            write_json(&out.join("curve.json"), &curve)?;
            match (&curve.kendall, &curve.kendall_error) {
                (Some(k), _) => println!(
                    "kendall tau {:.4} (n={}, p two-sided {:.4}, p less {:.4}, p greater {:.4})",
                    k.tau, k.n, k.p_two_sided, k.p_less, k.p_greater
                ),
                (None, Some(e)) => eprintln!("warning: {e}"),
                _ => {}
            }
            RunManifest::new(
                "curve",
                serde_json::json!({ "evals": evals, "relative_step": relative_step }),
            )
            .write(&out, &["curve.csv", "curve.json"])?;
        }

        Command::Synth { config, out, seed } => {
            let mut cfg = SynthConfig::from_file(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let c = generate_synthetic_corpus(&cfg, &out)?;
            println!("wrote {} datasets to {}", c.len(), out.display());
            let mut m = RunManifest::new("synth", serde_json::to_value(&cfg).expect("config serializes"));
            m.seed = Some(cfg.seed);
            m.write(&out, &["corpus.json", "datasets", "synth.json"])?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
