//! Mini-batch training with validation-based model selection, and the
//! coarse-to-fine pretraining schedule over taxonomy levels.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::diffcore::{zero_grads, Adam, ParamRef, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::metrics::{ConfusionMatrix, Metrics};
use crate::model::{total_loss, Hob2sRnn, ModelDims, ModelVariant, SeriesBatch};
use crate::taxonomy::Taxonomy;

/// Largest batch used for inference.
const PREDICT_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Epochs at the leaf level.
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Epochs at each non-leaf level during pretraining.
    pub epochs_per_level: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            epochs: 2000,
            batch_size: 32,
            seed: 0,
            epochs_per_level: 300,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::usage(format!("invalid learning rate {}", self.learning_rate)));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.epochs_per_level == 0 {
            return Err(Error::usage("epochs, batch size, and level epochs must be positive"));
        }
        Ok(())
    }
}

/// History of one [`train_level`] call.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub level: usize,
    /// Mean training loss per epoch.
    pub train_loss: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    /// Zero-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub seconds: f64,
}

/// A model the training loop can drive.
pub trait Classifier {
    fn params(&self) -> Vec<ParamRef>;

    /// Mean loss over `batch` against `targets`.
    fn batch_loss(&self, tape: &mut Tape, batch: &[&Sample], targets: &[usize]) -> Result<Var>;

    fn predict(&self, batch: &[&Sample]) -> Result<Vec<usize>>;

    fn snapshot(&self) -> Vec<Tensor> {
        self.params().iter().map(ParamRef::value).collect()
    }

    fn restore(&self, snapshot: &[Tensor]) -> Result<()> {
        let params = self.params();
        if params.len() != snapshot.len() {
            return Err(Error::usage("snapshot does not match model parameters"));
        }
        for (p, v) in params.iter().zip(snapshot) {
            p.set_value(v.clone())?;
        }
        Ok(())
    }
}

fn series_batch(batch: &[&Sample]) -> Result<SeriesBatch> {
    let pairs: Vec<(&Tensor, &Tensor)> = batch.iter().map(|s| (&s.radar, &s.optical)).collect();
    SeriesBatch::new(&pairs)
}

impl Classifier for Hob2sRnn {
    fn params(&self) -> Vec<ParamRef> {
        Hob2sRnn::params(self)
    }

    fn batch_loss(&self, tape: &mut Tape, batch: &[&Sample], targets: &[usize]) -> Result<Var> {
        let out = self.forward_batch(tape, &series_batch(batch)?)?;
        total_loss(tape, &out, targets)
    }

    fn predict(&self, batch: &[&Sample]) -> Result<Vec<usize>> {
        self.predict_batch(&series_batch(batch)?)
    }
}

/// Predictions for every sample, in chunks.
pub fn predict_all<M: Classifier + ?Sized>(model: &M, samples: &[Sample]) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(PREDICT_CHUNK) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        out.extend(model.predict(&refs)?);
    }
    Ok(out)
}

pub fn accuracy_at<M: Classifier + ?Sized>(model: &M, samples: &[Sample], level: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::usage("accuracy of an empty set"));
    }
    let pred = predict_all(model, samples)?;
    let hits = pred.iter().zip(samples).filter(|(p, s)| **p == s.label(level)).count();
    Ok(hits as f64 / samples.len() as f64)
}

/// Trains at taxonomy `level` and leaves `model` holding the parameters with
/// the highest validation accuracy (earliest epoch on ties). Returns those
/// parameters and the training history.
pub fn train_level<M: Classifier + ?Sized>(
    model: &M,
    train: &[Sample],
    val: &[Sample],
    config: &TrainConfig,
    epochs: usize,
    level: usize,
) -> Result<(Vec<Tensor>, TrainReport)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::usage("empty training set"));
    }
    if val.is_empty() {
        return Err(Error::usage("empty validation set"));
    }
    let start = Instant::now();
    let params = model.params();
    let adam = Adam::with_lr(config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut train_loss = Vec::with_capacity(epochs);
    let mut val_accuracy = Vec::with_capacity(epochs);
    let mut best = (-1.0, 0usize, model.snapshot());
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
            let targets: Vec<usize> = batch.iter().map(|s| s.label(level)).collect();
            zero_grads(&params);
            let mut tape = Tape::new();
            let loss = model.batch_loss(&mut tape, &batch, &targets)?;
            loss_sum += tape.scalar(loss) * chunk.len() as f64;
            tape.backward(loss)?;
            adam.step(&params);
        }
        train_loss.push(loss_sum / train.len() as f64);
        let acc = accuracy_at(model, val, level)?;
        val_accuracy.push(acc);
        if acc > best.0 {
            best = (acc, epoch, model.snapshot());
        }
        log::debug!(
            "level {level} epoch {epoch}: loss {:.6} val acc {acc:.4}",
            train_loss[epoch]
        );
    }
    zero_grads(&params);
    let (best_val_accuracy, best_epoch, snapshot) = best;
    model.restore(&snapshot)?;
    Ok((
        snapshot,
        TrainReport {
            level,
            train_loss,
            val_accuracy,
            best_epoch,
            best_val_accuracy,
            seconds: start.elapsed().as_secs_f64(),
        },
    ))
}

/// Deterministic sub-seed for a labelled purpose.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Points at which [`hierarchical_pretrain`] reports the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    /// Classifiers sized for `level`, before any training at that level.
    LevelStart { level: usize },
    /// Best parameters for `level` restored.
    LevelDone { level: usize },
}

/// Builds a model for `variant` and trains it coarse to fine. Between levels
/// the classifiers are replaced and every other parameter carries over from
/// the best checkpoint of the previous level. Without hierarchical
/// pretraining only the leaf level is trained. `observe` sees the model at
/// each [`Stage`].
pub fn hierarchical_pretrain(
    variant: ModelVariant,
    dims: ModelDims,
    tax: &Taxonomy,
    train: &[Sample],
    val: &[Sample],
    config: &TrainConfig,
    mut observe: impl FnMut(Stage, &Hob2sRnn),
) -> Result<(Hob2sRnn, Vec<TrainReport>)> {
    config.validate()?;
    let leaf = tax.leaf_level();
    let levels: Vec<usize> = if variant.hierarchical_pretrain {
        (0..=leaf).collect()
    } else {
        vec![leaf]
    };
    let counts = tax.level_class_counts();
    let mut model = Hob2sRnn::build(variant, dims, counts[levels[0]], derive_seed(config.seed, 1))?;
    let mut reports = Vec::with_capacity(levels.len());
    for (i, &level) in levels.iter().enumerate() {
        if i > 0 {
            model = model.swap_classifiers(counts[level], derive_seed(config.seed, 100 + level as u64))?;
        }
        observe(Stage::LevelStart { level }, &model);
        let epochs = if level == leaf { config.epochs } else { config.epochs_per_level };
        let level_config = TrainConfig {
            seed: derive_seed(config.seed, 200 + level as u64),
            ..*config
        };
        let (_, report) = train_level(&model, train, val, &level_config, epochs, level)?;
        log::info!(
            "level {level}: best val acc {:.4} at epoch {} ({:.1}s)",
            report.best_val_accuracy,
            report.best_epoch,
            report.seconds
        );
        observe(Stage::LevelDone { level }, &model);
        reports.push(report);
    }
    Ok((model, reports))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
}

/// Confusion matrix and metrics of `model` on `samples` at `level`.
pub fn evaluate<M: Classifier + ?Sized>(
    model: &M,
    samples: &[Sample],
    level: usize,
    n_classes: usize,
) -> Result<Evaluation> {
    let pred = predict_all(model, samples)?;
    let truth: Vec<usize> = samples.iter().map(|s| s.label(level)).collect();
    let confusion = ConfusionMatrix::from_predictions(&truth, &pred, n_classes)?;
    let metrics = confusion.metrics()?;
    Ok(Evaluation { confusion, metrics })
}
