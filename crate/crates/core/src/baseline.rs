//! Multi-layer perceptron over the flattened radar and optical series.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::checkpoint::Checkpoint;
use crate::data::Sample;
use crate::diffcore::{ParamRef, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::layers::{Activation, DenseLayer};
use crate::training::Classifier;

pub const MLP_HIDDEN: usize = 512;

#[derive(Clone, Debug)]
pub struct Mlp {
    pub hidden1: DenseLayer,
    pub hidden2: DenseLayer,
    pub output: DenseLayer,
}

impl Mlp {
    /// Two tanh hidden layers of width `hidden` and a softmax output.
    pub fn new(input: usize, hidden: usize, n_classes: usize, seed: u64) -> Result<Self> {
        if input == 0 || hidden == 0 || n_classes < 2 {
            return Err(Error::usage(format!(
                "invalid MLP shape: input {input}, hidden {hidden}, classes {n_classes}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Mlp {
            hidden1: DenseLayer::new(input, hidden, Activation::Tanh, &mut rng),
            hidden2: DenseLayer::new(hidden, hidden, Activation::Tanh, &mut rng),
            output: DenseLayer::new(hidden, n_classes, Activation::Identity, &mut rng),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.hidden1.input_dim()
    }

    pub fn n_classes(&self) -> usize {
        self.output.output_dim()
    }

    pub fn parameter_count(&self) -> usize {
        Classifier::params(self).iter().map(ParamRef::numel).sum()
    }

    fn inputs(&self, batch: &[&Sample]) -> Result<Tensor> {
        let d = self.input_dim();
        let mut data = Vec::with_capacity(batch.len() * d);
        for s in batch {
            let x = s.flatten();
            if x.len() != d {
                return Err(Error::dim("mlp input", &[x.len()], &[d]));
            }
            data.extend(x);
        }
        Tensor::matrix(batch.len(), d, data)
    }

    /// Class probabilities, one row per sample.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let h = self.hidden1.forward(tape, x)?;
        let h = self.hidden2.forward(tape, h)?;
        let logits = self.output.forward(tape, h)?;
        tape.softmax(logits)
    }

    fn named_params(&self) -> Vec<(String, ParamRef)> {
        let mut out = self.hidden1.named_params("hidden1");
        out.extend(self.hidden2.named_params("hidden2"));
        out.extend(self.output.named_params("output"));
        out
    }

    pub fn to_checkpoint(&self, extra: serde_json::Value) -> Checkpoint {
        Checkpoint {
            meta: json!({
                "kind": "mlp",
                "input": self.input_dim(),
                "hidden": self.hidden1.output_dim(),
                "n_classes": self.n_classes(),
                "extra": extra,
            }),
            tensors: self.named_params().into_iter().map(|(n, p)| (n, p.value())).collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<(Self, serde_json::Value)> {
        let meta = &ckpt.meta;
        if meta.get("kind").and_then(|k| k.as_str()) != Some("mlp") {
            return Err(Error::Checkpoint("not an mlp checkpoint".into()));
        }
        let field = |k: &str| -> Result<usize> {
            serde_json::from_value(meta[k].clone()).map_err(Error::from)
        };
        let m = Mlp::new(field("input")?, field("hidden")?, field("n_classes")?, 0)?;
        ckpt.load_into(&m.named_params())?;
        Ok((m, meta["extra"].clone()))
    }
}

impl Classifier for Mlp {
    fn params(&self) -> Vec<ParamRef> {
        self.named_params().into_iter().map(|(_, p)| p).collect()
    }

    fn batch_loss(&self, tape: &mut Tape, batch: &[&Sample], targets: &[usize]) -> Result<Var> {
        let x = tape.constant(self.inputs(batch)?);
        let p = self.forward(tape, x)?;
        tape.cross_entropy(p, targets)
    }

    fn predict(&self, batch: &[&Sample]) -> Result<Vec<usize>> {
        let mut tape = Tape::new();
        let x = tape.constant(self.inputs(batch)?);
        let p = self.forward(&mut tape, x)?;
        let p = tape.value(p);
        Ok((0..batch.len())
            .map(|i| {
                let row = p.row(i);
                let mut best = 0;
                for (k, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect())
    }
}
