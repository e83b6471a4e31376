//! Command-line interface: synthetic data generation, training runs over
//! split seeds, the ablation sweep, the MLP baseline, and checkpoint
//! evaluation.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::baseline::{Mlp, MLP_HIDDEN};
use crate::checkpoint::Checkpoint;
use crate::data::{
    generate_synthetic, load_dataset, select, split_samples, write_dataset, write_json, NormalizationStats, Sample,
    SeriesShape, SplitSpec,
};
use crate::error::{Error, Result};
use crate::metrics::{Aggregate, Metrics};
use crate::model::{Hob2sRnn, ModelDims, ModelVariant};
use crate::taxonomy::Taxonomy;
use crate::training::{derive_seed, evaluate, hierarchical_pretrain, train_level, Evaluation, TrainConfig, TrainReport};

#[derive(Debug, Parser)]
#[command(name = "hob2srnn", version, about = "Radar + optical object time series classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Train one variant over several split seeds.
    Train(TrainArgs),
    /// Train every ablation variant on identical splits.
    Ablate(AblateArgs),
    /// Train the MLP baseline over several split seeds.
    BaselineMlp(MlpArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 600)]
    pub objects: usize,
    #[arg(long, default_value_t = 0.5)]
    pub difficulty: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Taxonomy file; the bundled hierarchy when omitted.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Directory holding radar.csv, optical.csv, labels.csv, and optionally
    /// taxonomy.txt; individual flags override.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub radar: Option<PathBuf>,
    #[arg(long)]
    pub optical: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RunArgs {
    #[arg(long, default_value_t = 10)]
    pub seeds: usize,
    /// First split seed; runs use seed-base, seed-base+1, ...
    #[arg(long, default_value_t = 0)]
    pub seed_base: u64,
    #[arg(long, default_value_t = 2000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 512)]
    pub hidden: usize,
    /// Attention projection width; defaults to the hidden width.
    #[arg(long)]
    pub attention: Option<usize>,
    #[arg(long, default_value_t = 64)]
    pub fc1: usize,
    #[arg(long, default_value_t = 128)]
    pub fc2: usize,
    /// Epochs at each non-leaf level.
    #[arg(long, default_value_t = 300)]
    pub level_epochs: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "full")]
    pub variant: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct MlpArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = MLP_HIDDEN)]
    pub hidden: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Write the evaluation as JSON to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Ablate(a) => cmd_ablate(&a),
        Command::BaselineMlp(a) => cmd_baseline_mlp(&a),
        Command::Eval(a) => cmd_eval(&a),
    }
}

fn read_taxonomy(path: Option<&Path>) -> Result<Taxonomy> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Taxonomy::parse(&text).map_err(|e| Error::Load {
                file: p.display().to_string(),
                message: e.to_string(),
            })
        }
        None => Ok(Taxonomy::reunion()),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let tax = read_taxonomy(a.taxonomy.as_deref())?;
    let shape = SeriesShape::REUNION;
    let samples = generate_synthetic(a.objects, &tax, shape, a.seed, a.difficulty)?;
    write_dataset(&a.out, &samples, &tax)?;
    write_text(&a.out.join("taxonomy.txt"), &tax.to_text())?;
    write_json(
        &a.out.join("manifest.json"),
        &json!({
            "command": "synth",
            "version": env!("CARGO_PKG_VERSION"),
            "objects": a.objects,
            "difficulty": a.difficulty,
            "seed": a.seed,
            "shape": shape,
            "level_class_counts": tax.level_class_counts(),
            "files": ["radar.csv", "optical.csv", "labels.csv", "taxonomy.txt"],
        }),
    )?;
    log::info!("wrote {} objects to {}", samples.len(), a.out.display());
    Ok(())
}

struct Dataset {
    samples: Vec<Sample>,
    tax: Taxonomy,
}

impl DataArgs {
    fn resolve(&self, flag: &Option<PathBuf>, file: &str) -> Result<PathBuf> {
        flag.clone()
            .or_else(|| self.data.as_ref().map(|d| d.join(file)))
            .ok_or_else(|| Error::usage(format!("missing --{} (or --data)", file.trim_end_matches(".csv"))))
    }

    fn taxonomy_path(&self) -> Option<PathBuf> {
        self.taxonomy.clone().or_else(|| {
            let p = self.data.as_ref()?.join("taxonomy.txt");
            p.exists().then_some(p)
        })
    }

    fn load_with(&self, tax: Taxonomy) -> Result<Dataset> {
        let samples = load_dataset(
            &self.resolve(&self.radar, "radar.csv")?,
            &self.resolve(&self.optical, "optical.csv")?,
            &self.resolve(&self.labels, "labels.csv")?,
            &tax,
        )?;
        Ok(Dataset { samples, tax })
    }

    fn load(&self) -> Result<Dataset> {
        self.load_with(read_taxonomy(self.taxonomy_path().as_deref())?)
    }
}

impl RunArgs {
    fn seed_list(&self) -> Result<Vec<u64>> {
        if self.seeds == 0 {
            return Err(Error::usage("--seeds must be positive"));
        }
        Ok((0..self.seeds as u64).map(|i| self.seed_base + i).collect())
    }

    fn train_config(&self, level_epochs: usize, seed: u64) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch,
            seed,
            epochs_per_level: level_epochs,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ModelArgs {
    fn dims(&self, shape: SeriesShape) -> ModelDims {
        let mut dims = ModelDims::new(shape.radar_bands, shape.optical_bands)
            .with_enrichment(self.fc1, self.fc2)
            .with_hidden(self.hidden);
        if let Some(a) = self.attention {
            dims.attention = a;
        }
        dims
    }
}

/// Normalised partitions of one split seed.
struct Partitions {
    train: Vec<Sample>,
    val: Vec<Sample>,
    test: Vec<Sample>,
    stats: NormalizationStats,
}

fn partition(samples: &[Sample], seed: u64) -> Result<Partitions> {
    let split = split_samples(samples, &SplitSpec::new(seed))?;
    let train = select(samples, &split.train);
    let stats = NormalizationStats::fit(&train)?;
    Ok(Partitions {
        train: stats.apply(&train),
        val: stats.apply(&select(samples, &split.val)),
        test: stats.apply(&select(samples, &split.test)),
        stats,
    })
}

/// Outcome of one trained model on one split seed.
#[derive(Clone, Debug, Serialize)]
struct RunRecord {
    variant: String,
    seed: u64,
    f1: f64,
    kappa: f64,
    accuracy: f64,
    best_epoch: usize,
    parameters: usize,
    attention_parameters: usize,
}

struct RunOutcome {
    record: RunRecord,
    seconds: f64,
}

fn write_report_log(
    path: &Path,
    header: &[(&str, String)],
    reports: &[TrainReport],
    eval: &Evaluation,
    class_names: &[String],
) -> Result<()> {
    let mut s = String::new();
    for (k, v) in header {
        let _ = writeln!(s, "# {k}: {v}");
    }
    for r in reports {
        for (e, (loss, acc)) in r.train_loss.iter().zip(&r.val_accuracy).enumerate() {
            let _ = writeln!(s, "level {} epoch {e} train_loss {loss:.8} val_accuracy {acc:.6}", r.level);
        }
        let _ = writeln!(
            s,
            "level {} best_epoch {} best_val_accuracy {:.6}",
            r.level, r.best_epoch, r.best_val_accuracy
        );
    }
    let m = eval.metrics;
    let _ = writeln!(s, "test f1 {:.6} accuracy {:.6} kappa {:.6}", m.f1, m.accuracy, m.kappa);
    let _ = writeln!(s, "confusion (rows = true class, columns = predicted)");
    for (name, row) in class_names.iter().zip(eval.confusion.counts()) {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "{name}\t{}", cells.join(" "));
    }
    write_text(path, &s)
}

fn checkpoint_extra(tax: &Taxonomy, stats: &NormalizationStats, seed: u64) -> serde_json::Value {
    json!({
        "taxonomy": tax.to_text(),
        "normalization": stats,
        "split_seed": seed,
    })
}

fn run_hob2s(
    data: &Dataset,
    variant: ModelVariant,
    model: &ModelArgs,
    run: &RunArgs,
    seed: u64,
    dir: &Path,
) -> Result<RunOutcome> {
    let start = Instant::now();
    let parts = partition(&data.samples, seed)?;
    let dims = model.dims(SeriesShape::of(&data.samples[0]));
    let cfg = run.train_config(model.level_epochs, seed)?;
    let (net, reports) =
        hierarchical_pretrain(variant, dims, &data.tax, &parts.train, &parts.val, &cfg, |_, _| {})?;
    let leaf = data.tax.leaf_level();
    let eval = evaluate(&net, &parts.test, leaf, net.n_classes())?;
    let seconds = start.elapsed().as_secs_f64();

    create_dir(dir)?;
    net.to_checkpoint(checkpoint_extra(&data.tax, &parts.stats, seed))
        .save(&dir.join("model.ckpt"))?;
    write_report_log(
        &dir.join("report.log"),
        &[
            ("variant", variant.name()),
            ("split_seed", seed.to_string()),
            ("parameters", net.parameter_count().to_string()),
            ("attention_parameters", net.attention_parameter_count().to_string()),
            (
                "partition",
                format!("{}/{}/{}", parts.train.len(), parts.val.len(), parts.test.len()),
            ),
        ],
        &reports,
        &eval,
        data.tax.leaf_classes(),
    )?;
    let m = eval.metrics;
    Ok(RunOutcome {
        record: RunRecord {
            variant: variant.name(),
            seed,
            f1: m.f1,
            kappa: m.kappa,
            accuracy: m.accuracy,
            best_epoch: reports.last().map_or(0, |r| r.best_epoch),
            parameters: net.parameter_count(),
            attention_parameters: net.attention_parameter_count(),
        },
        seconds,
    })
}

fn run_mlp(data: &Dataset, a: &MlpArgs, seed: u64, dir: &Path) -> Result<RunOutcome> {
    let start = Instant::now();
    let parts = partition(&data.samples, seed)?;
    let leaf = data.tax.leaf_level();
    let n_classes = data.tax.leaf_classes().len();
    let input = SeriesShape::of(&data.samples[0]).variables();
    let mlp = Mlp::new(input, a.hidden, n_classes, derive_seed(seed, 1))?;
    let cfg = a.run.train_config(1, derive_seed(seed, 200 + leaf as u64))?;
    let (_, report) = train_level(&mlp, &parts.train, &parts.val, &cfg, cfg.epochs, leaf)?;
    let eval = evaluate(&mlp, &parts.test, leaf, n_classes)?;
    let seconds = start.elapsed().as_secs_f64();

    create_dir(dir)?;
    mlp.to_checkpoint(checkpoint_extra(&data.tax, &parts.stats, seed))
        .save(&dir.join("model.ckpt"))?;
    write_report_log(
        &dir.join("report.log"),
        &[
            ("variant", "mlp".into()),
            ("split_seed", seed.to_string()),
            ("input_dim", input.to_string()),
            ("parameters", mlp.parameter_count().to_string()),
        ],
        std::slice::from_ref(&report),
        &eval,
        data.tax.leaf_classes(),
    )?;
    let m = eval.metrics;
    Ok(RunOutcome {
        record: RunRecord {
            variant: "mlp".into(),
            seed,
            f1: m.f1,
            kappa: m.kappa,
            accuracy: m.accuracy,
            best_epoch: report.best_epoch,
            parameters: mlp.parameter_count(),
            attention_parameters: 0,
        },
        seconds,
    })
}

/// Runs `job` for every seed, appending run records and timings. Failures
/// are logged and collected so the remaining seeds still run.
fn run_seeds(
    label: &str,
    seeds: &[u64],
    runs: &mut File,
    timing: &mut File,
    failures: &mut Vec<String>,
    mut job: impl FnMut(u64) -> Result<RunOutcome>,
) -> Result<Vec<Metrics>> {
    let mut metrics = Vec::new();
    for &seed in seeds {
        log::info!("{label}: split seed {seed}");
        match job(seed) {
            Ok(out) => {
                writeln!(runs, "{}", serde_json::to_string(&out.record)?).map_err(|e| Error::io("runs.jsonl", e))?;
                writeln!(
                    timing,
                    "{}",
                    json!({"variant": out.record.variant, "seed": seed, "seconds": out.seconds})
                )
                .map_err(|e| Error::io("timing.jsonl", e))?;
                metrics.push(Metrics {
                    f1: out.record.f1,
                    accuracy: out.record.accuracy,
                    kappa: out.record.kappa,
                });
            }
            Err(e) => {
                log::error!("{label} seed {seed}: {e}");
                failures.push(format!("{label} seed {seed}: {e}"));
            }
        }
    }
    Ok(metrics)
}

fn open(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

/// Aligned text table: one row per label with F1, Kappa, and Accuracy.
fn summary_table(rows: &[(String, Aggregate)]) -> String {
    let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max("Model".len());
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<width$}  {:>4}  {:>15}  {:>15}  {:>15}",
        "Model", "Runs", "F1 (%)", "Kappa", "Accuracy (%)"
    );
    for (label, agg) in rows {
        let [f1, acc, kappa] = agg.cells();
        let _ = writeln!(s, "{label:<width$}  {:>4}  {f1:>15}  {kappa:>15}  {acc:>15}", agg.runs);
    }
    s
}

fn summary_json(rows: &[(String, Aggregate)]) -> serde_json::Value {
    serde_json::Value::Array(
        rows.iter()
            .map(|(label, agg)| json!({"model": label, "aggregate": agg}))
            .collect(),
    )
}

fn finish(failures: Vec<String>) -> Result<()> {
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Error::usage(format!("{} run(s) failed:\n  {}", failures.len(), failures.join("\n  "))))
    }
}

fn manifest(command: &str, args: &impl Serialize, seeds: &[u64], data: &Dataset) -> Result<serde_json::Value> {
    Ok(json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "args": serde_json::to_value(args)?,
        "split_seeds": seeds,
        "objects": data.samples.len(),
        "shape": SeriesShape::of(&data.samples[0]),
        "level_class_counts": data.tax.level_class_counts(),
    }))
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let variant: ModelVariant = a.variant.parse()?;
    let seeds = a.run.seed_list()?;
    a.run.train_config(a.model.level_epochs, 0)?;
    let data = a.data.load()?;
    create_dir(&a.out)?;
    write_json(&a.out.join("manifest.json"), &manifest("train", a, &seeds, &data)?)?;

    let mut runs = open(&a.out.join("runs.jsonl"))?;
    let mut timing = open(&a.out.join("timing.jsonl"))?;
    let mut failures = Vec::new();
    let metrics = run_seeds(&variant.name(), &seeds, &mut runs, &mut timing, &mut failures, |seed| {
        run_hob2s(&data, variant, &a.model, &a.run, seed, &a.out.join(format!("seed_{seed}")))
    })?;
    if !metrics.is_empty() {
        let rows = vec![(variant.label(), Aggregate::of(&metrics)?)];
        let table = summary_table(&rows);
        print!("{table}");
        write_text(&a.out.join("summary.txt"), &table)?;
        write_json(&a.out.join("summary.json"), &summary_json(&rows))?;
    }
    finish(failures)
}

pub fn cmd_ablate(a: &AblateArgs) -> Result<()> {
    let seeds = a.run.seed_list()?;
    a.run.train_config(a.model.level_epochs, 0)?;
    let data = a.data.load()?;
    create_dir(&a.out)?;
    write_json(&a.out.join("manifest.json"), &manifest("ablate", a, &seeds, &data)?)?;

    let mut runs = open(&a.out.join("runs.jsonl"))?;
    let mut timing = open(&a.out.join("timing.jsonl"))?;
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    for variant in ModelVariant::ablation_order() {
        let metrics = run_seeds(&variant.name(), &seeds, &mut runs, &mut timing, &mut failures, |seed| {
            let dir = a.out.join(variant.name()).join(format!("seed_{seed}"));
            run_hob2s(&data, variant, &a.model, &a.run, seed, &dir)
        })?;
        if !metrics.is_empty() {
            rows.push((variant.label(), Aggregate::of(&metrics)?));
        }
    }
    let table = summary_table(&rows);
    print!("{table}");
    write_text(&a.out.join("summary.txt"), &table)?;
    write_json(&a.out.join("summary.json"), &summary_json(&rows))?;
    finish(failures)
}

pub fn cmd_baseline_mlp(a: &MlpArgs) -> Result<()> {
    let seeds = a.run.seed_list()?;
    a.run.train_config(1, 0)?;
    let data = a.data.load()?;
    create_dir(&a.out)?;
    write_json(&a.out.join("manifest.json"), &manifest("baseline-mlp", a, &seeds, &data)?)?;

    let mut runs = open(&a.out.join("runs.jsonl"))?;
    let mut timing = open(&a.out.join("timing.jsonl"))?;
    let mut failures = Vec::new();
    let metrics = run_seeds("mlp", &seeds, &mut runs, &mut timing, &mut failures, |seed| {
        run_mlp(&data, a, seed, &a.out.join(format!("seed_{seed}")))
    })?;
    if !metrics.is_empty() {
        let rows = vec![("MLP".to_string(), Aggregate::of(&metrics)?)];
        let table = summary_table(&rows);
        print!("{table}");
        write_text(&a.out.join("summary.txt"), &table)?;
        write_json(&a.out.join("summary.json"), &summary_json(&rows))?;
    }
    finish(failures)
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let extra = ckpt.meta["extra"].clone();
    let tax = match extra["taxonomy"].as_str() {
        Some(text) if a.data.taxonomy_path().is_none() => Taxonomy::parse(text)?,
        _ => read_taxonomy(a.data.taxonomy_path().as_deref())?,
    };
    let stats: NormalizationStats = serde_json::from_value(extra["normalization"].clone())?;
    let data = a.data.load_with(tax)?;
    let samples = stats.apply(&data.samples);
    let leaf = data.tax.leaf_level();
    let n_classes = data.tax.leaf_classes().len();
    let eval = match ckpt.meta["kind"].as_str() {
        Some("hob2srnn") => evaluate(&Hob2sRnn::from_checkpoint(&ckpt)?.0, &samples, leaf, n_classes)?,
        Some("mlp") => evaluate(&Mlp::from_checkpoint(&ckpt)?.0, &samples, leaf, n_classes)?,
        _ => return Err(Error::Checkpoint("unknown model kind".into())),
    };
    let m = eval.metrics;
    println!(
        "objects {}  F1 {:.2}%  Accuracy {:.2}%  Kappa {:.3}",
        samples.len(),
        100.0 * m.f1,
        100.0 * m.accuracy,
        m.kappa
    );
    if let Some(out) = &a.out {
        write_json(out, &serde_json::to_value(&eval)?)?;
    }
    Ok(())
}
