//! The two-branch recurrent classifier.
//!
//! Each source (radar, optical) runs through its own FCGRU cell. Three
//! attention heads turn hidden-state sequences into feature vectors: one per
//! branch, and one over the radar states followed by the optical states along
//! the time axis. Each feature vector has its own affine classifier; training
//! weighs the per-branch losses by 0.5 and the fused loss by 1.0, and
//! prediction combines the three probability vectors with the same weights.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::attention::{AttentionHead, AttentionMode};
use crate::checkpoint::Checkpoint;
use crate::diffcore::{ParamRef, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::layers::{Activation, DenseLayer, FcGruCell};

/// Loss and vote weight of each per-source (auxiliary) classifier.
pub const AUX_WEIGHT: f64 = 0.5;
/// Loss and vote weight of the fused classifier.
pub const FUSED_WEIGHT: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionKind {
    Tanh,
    Softmax,
    /// Use the last hidden state of each sequence as its feature.
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelVariant {
    pub enrich: bool,
    pub attention: AttentionKind,
    pub hierarchical_pretrain: bool,
}

impl ModelVariant {
    pub const fn full() -> Self {
        ModelVariant {
            enrich: true,
            attention: AttentionKind::Tanh,
            hierarchical_pretrain: true,
        }
    }

    pub const fn no_enrich() -> Self {
        ModelVariant {
            enrich: false,
            ..Self::full()
        }
    }

    pub const fn no_hier_pre() -> Self {
        ModelVariant {
            hierarchical_pretrain: false,
            ..Self::full()
        }
    }

    pub const fn no_att() -> Self {
        ModelVariant {
            attention: AttentionKind::None,
            ..Self::full()
        }
    }

    pub const fn softmax_att() -> Self {
        ModelVariant {
            attention: AttentionKind::Softmax,
            ..Self::full()
        }
    }

    /// The ablation rows in reporting order, full model last.
    pub fn ablation_order() -> [ModelVariant; 5] {
        [
            Self::no_enrich(),
            Self::no_hier_pre(),
            Self::no_att(),
            Self::softmax_att(),
            Self::full(),
        ]
    }

    /// Command-line name.
    pub fn name(&self) -> String {
        let mut parts = Vec::new();
        if !self.enrich {
            parts.push("noenrich");
        }
        if !self.hierarchical_pretrain {
            parts.push("nohierpre");
        }
        match self.attention {
            AttentionKind::Tanh => {}
            AttentionKind::Softmax => parts.push("softmaxatt"),
            AttentionKind::None => parts.push("noatt"),
        }
        if parts.is_empty() {
            "full".to_string()
        } else {
            parts.join("+")
        }
    }

    /// Row label used in ablation tables.
    pub fn label(&self) -> String {
        match self.name().as_str() {
            "full" => "HOb2sRNN".into(),
            "noenrich" => "noEnrich".into(),
            "nohierpre" => "noHierPre".into(),
            "noatt" => "noAtt".into(),
            "softmaxatt" => "SoftMaxAtt".into(),
            other => other.into(),
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    /// Accepts `full` or a `+`-joined combination of `noenrich`,
    /// `nohierpre`, `noatt`, `softmaxatt`.
    fn from_str(s: &str) -> Result<Self> {
        let mut v = ModelVariant::full();
        if s.eq_ignore_ascii_case("full") {
            return Ok(v);
        }
        for part in s.split('+') {
            match part.to_ascii_lowercase().as_str() {
                "noenrich" => v.enrich = false,
                "nohierpre" => v.hierarchical_pretrain = false,
                "noatt" => v.attention = AttentionKind::None,
                "softmaxatt" => v.attention = AttentionKind::Softmax,
                other => {
                    return Err(Error::usage(format!(
                        "unknown variant '{other}' (expected full, noenrich, nohierpre, noatt, softmaxatt)"
                    )))
                }
            }
        }
        Ok(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub radar_bands: usize,
    pub optical_bands: usize,
    pub fc1: usize,
    pub fc2: usize,
    pub hidden: usize,
    pub attention: usize,
}

impl ModelDims {
    /// Enrichment widths 64 and 128, 512 hidden units, attention width equal
    /// to the hidden width.
    pub fn new(radar_bands: usize, optical_bands: usize) -> Self {
        ModelDims {
            radar_bands,
            optical_bands,
            fc1: 64,
            fc2: 128,
            hidden: 512,
            attention: 512,
        }
    }

    pub fn with_hidden(mut self, hidden: usize) -> Self {
        self.hidden = hidden;
        self.attention = hidden;
        self
    }

    pub fn with_enrichment(mut self, fc1: usize, fc2: usize) -> Self {
        self.fc1 = fc1;
        self.fc2 = fc2;
        self
    }

    fn validate(&self) -> Result<()> {
        let all = [
            self.radar_bands,
            self.optical_bands,
            self.fc1,
            self.fc2,
            self.hidden,
            self.attention,
        ];
        if all.contains(&0) {
            return Err(Error::usage(format!("model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Per-time-stamp batched inputs: `radar[t]` is `[B×D_r]`, `optical[t]` is `[B×D_o]`.
#[derive(Clone, Debug)]
pub struct SeriesBatch {
    pub radar: Vec<Tensor>,
    pub optical: Vec<Tensor>,
    pub size: usize,
}

impl SeriesBatch {
    /// Builds a batch from `(radar [T_r×D_r], optical [T_o×D_o])` pairs that
    /// all share the same shapes.
    pub fn new(series: &[(&Tensor, &Tensor)]) -> Result<Self> {
        let (r0, o0) = series
            .first()
            .ok_or_else(|| Error::usage("empty batch"))?;
        for (r, o) in series {
            if r.shape() != r0.shape() {
                return Err(Error::dim("radar branch", r0.shape(), r.shape()));
            }
            if o.shape() != o0.shape() {
                return Err(Error::dim("optical branch", o0.shape(), o.shape()));
            }
        }
        fn gather(series: &[(&Tensor, &Tensor)], optical: bool, shape: &[usize]) -> Result<Vec<Tensor>> {
            if shape.len() != 2 {
                return Err(Error::usage(format!("series must be T×D, got {shape:?}")));
            }
            let (t_len, d) = (shape[0], shape[1]);
            (0..t_len)
                .map(|t| {
                    let mut data = Vec::with_capacity(series.len() * d);
                    for s in series {
                        data.extend_from_slice(if optical { s.1 } else { s.0 }.row(t));
                    }
                    Tensor::matrix(series.len(), d, data)
                })
                .collect()
        }
        Ok(SeriesBatch {
            radar: gather(series, false, r0.shape())?,
            optical: gather(series, true, o0.shape())?,
            size: series.len(),
        })
    }
}

/// Probability vectors of the three classifiers and the features feeding them.
#[derive(Clone, Copy, Debug)]
pub struct ForwardOutput {
    pub p_radar: Var,
    pub p_optical: Var,
    pub p_fused: Var,
    pub feat_radar: Var,
    pub feat_optical: Var,
    pub feat_fused: Var,
}

#[derive(Clone, Debug)]
pub struct Hob2sRnn {
    pub branch_radar: FcGruCell,
    pub branch_optical: FcGruCell,
    pub att_radar: Option<AttentionHead>,
    pub att_optical: Option<AttentionHead>,
    pub att_fused: Option<AttentionHead>,
    pub clf_radar: DenseLayer,
    pub clf_optical: DenseLayer,
    pub clf_fused: DenseLayer,
    pub dims: ModelDims,
    pub variant: ModelVariant,
    n_classes: usize,
}

fn classifiers(hidden: usize, n_classes: usize, rng: &mut ChaCha8Rng) -> [DenseLayer; 3] {
    [
        DenseLayer::new(hidden, n_classes, Activation::Identity, rng),
        DenseLayer::new(hidden, n_classes, Activation::Identity, rng),
        DenseLayer::new(hidden, n_classes, Activation::Identity, rng),
    ]
}

impl Hob2sRnn {
    /// Builds a freshly initialised model for `variant`. All randomness comes
    /// from `seed`.
    pub fn build(variant: ModelVariant, dims: ModelDims, n_classes: usize, seed: u64) -> Result<Self> {
        dims.validate()?;
        if n_classes < 2 {
            return Err(Error::usage(format!("need at least 2 classes, got {n_classes}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enrich = variant.enrich.then_some((dims.fc1, dims.fc2));
        let branch_radar = FcGruCell::new(dims.radar_bands, enrich, dims.hidden, &mut rng);
        let branch_optical = FcGruCell::new(dims.optical_bands, enrich, dims.hidden, &mut rng);
        let mode = match variant.attention {
            AttentionKind::Tanh => Some(AttentionMode::Tanh),
            AttentionKind::Softmax => Some(AttentionMode::Softmax),
            AttentionKind::None => None,
        };
        let head = |rng: &mut ChaCha8Rng| mode.map(|m| AttentionHead::new(dims.hidden, dims.attention, m, rng));
        let att_radar = head(&mut rng);
        let att_optical = head(&mut rng);
        let att_fused = head(&mut rng);
        let [clf_radar, clf_optical, clf_fused] = classifiers(dims.hidden, n_classes, &mut rng);
        Ok(Hob2sRnn {
            branch_radar,
            branch_optical,
            att_radar,
            att_optical,
            att_fused,
            clf_radar,
            clf_optical,
            clf_fused,
            dims,
            variant,
            n_classes,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Replaces the three classifiers with fresh ones of width `n_classes`.
    /// Every other parameter is kept (same handles) with its Adam state reset.
    pub fn swap_classifiers(mut self, n_classes: usize, seed: u64) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::usage(format!("need at least 2 classes, got {n_classes}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [r, o, f] = classifiers(self.dims.hidden, n_classes, &mut rng);
        self.clf_radar = r;
        self.clf_optical = o;
        self.clf_fused = f;
        self.n_classes = n_classes;
        for p in self.shared_params() {
            let mut p = p.borrow_mut();
            p.reset_moments();
            p.zero_grad();
        }
        Ok(self)
    }

    /// Forward pass for one sample (`radar: [T_r×D_r]`, `optical: [T_o×D_o]`).
    /// Outputs are rank-1.
    pub fn forward(&self, tape: &mut Tape, radar: &Tensor, optical: &Tensor) -> Result<ForwardOutput> {
        self.check_series("radar branch", radar, self.dims.radar_bands)?;
        self.check_series("optical branch", optical, self.dims.optical_bands)?;
        let rows = |tape: &mut Tape, s: &Tensor| -> Vec<Var> {
            (0..s.rows())
                .map(|t| tape.constant(Tensor::vector(s.row(t).to_vec())))
                .collect()
        };
        let r = rows(tape, radar);
        let o = rows(tape, optical);
        self.forward_steps(tape, &r, &o)
    }

    /// Forward pass for a mini-batch; outputs have one row per sample.
    pub fn forward_batch(&self, tape: &mut Tape, batch: &SeriesBatch) -> Result<ForwardOutput> {
        if let Some(t) = batch.radar.first() {
            if t.cols() != self.dims.radar_bands {
                return Err(Error::dim("radar branch", t.shape(), &[batch.size, self.dims.radar_bands]));
            }
        }
        if let Some(t) = batch.optical.first() {
            if t.cols() != self.dims.optical_bands {
                return Err(Error::dim("optical branch", t.shape(), &[batch.size, self.dims.optical_bands]));
            }
        }
        let r: Vec<Var> = batch.radar.iter().map(|t| tape.constant(t.clone())).collect();
        let o: Vec<Var> = batch.optical.iter().map(|t| tape.constant(t.clone())).collect();
        self.forward_steps(tape, &r, &o)
    }

    fn check_series(&self, branch: &'static str, s: &Tensor, bands: usize) -> Result<()> {
        if s.rank() != 2 || s.cols() != bands || s.rows() == 0 {
            return Err(Error::dim(branch, s.shape(), &[s.rows(), bands]));
        }
        Ok(())
    }

    fn forward_steps(&self, tape: &mut Tape, radar: &[Var], optical: &[Var]) -> Result<ForwardOutput> {
        let hs_r = self.branch_radar.run_steps(tape, radar)?;
        let hs_o = self.branch_optical.run_steps(tape, optical)?;
        let mut hs_cat = hs_r.clone();
        hs_cat.extend_from_slice(&hs_o);

        let feature = |tape: &mut Tape, head: &Option<AttentionHead>, hs: &[Var]| -> Result<Var> {
            match head {
                Some(h) => h.forward(tape, hs),
                None => Ok(*hs.last().expect("non-empty sequence")),
            }
        };
        let feat_radar = feature(tape, &self.att_radar, &hs_r)?;
        let feat_optical = feature(tape, &self.att_optical, &hs_o)?;
        let feat_fused = feature(tape, &self.att_fused, &hs_cat)?;

        let mut classify = |clf: &DenseLayer, feat: Var| -> Result<Var> {
            let logits = clf.forward(tape, feat)?;
            tape.softmax(logits)
        };
        Ok(ForwardOutput {
            p_radar: classify(&self.clf_radar, feat_radar)?,
            p_optical: classify(&self.clf_optical, feat_optical)?,
            p_fused: classify(&self.clf_fused, feat_fused)?,
            feat_radar,
            feat_optical,
            feat_fused,
        })
    }

    /// Combined-vote class for each sample of a batch.
    pub fn predict_batch(&self, batch: &SeriesBatch) -> Result<Vec<usize>> {
        let mut tape = Tape::new();
        let out = self.forward_batch(&mut tape, batch)?;
        let (pr, po, pf) = (
            tape.value(out.p_radar),
            tape.value(out.p_optical),
            tape.value(out.p_fused),
        );
        Ok((0..batch.size)
            .map(|i| fused_prediction(pr.row(i), po.row(i), pf.row(i)))
            .collect())
    }

    pub fn named_params(&self) -> Vec<(String, ParamRef)> {
        let mut out = self.named_shared_params();
        out.extend(self.named_classifier_params());
        out
    }

    fn named_shared_params(&self) -> Vec<(String, ParamRef)> {
        let mut out = self.branch_radar.named_params("radar");
        out.extend(self.branch_optical.named_params("optical"));
        for (name, head) in [
            ("att_radar", &self.att_radar),
            ("att_optical", &self.att_optical),
            ("att_fused", &self.att_fused),
        ] {
            if let Some(h) = head {
                out.extend(h.named_params(name));
            }
        }
        out
    }

    fn named_classifier_params(&self) -> Vec<(String, ParamRef)> {
        let mut out = self.clf_radar.named_params("clf_radar");
        out.extend(self.clf_optical.named_params("clf_optical"));
        out.extend(self.clf_fused.named_params("clf_fused"));
        out
    }

    pub fn params(&self) -> Vec<ParamRef> {
        self.named_params().into_iter().map(|(_, p)| p).collect()
    }

    /// Everything except the classifiers: the weights carried across levels.
    pub fn shared_params(&self) -> Vec<ParamRef> {
        self.named_shared_params().into_iter().map(|(_, p)| p).collect()
    }

    pub fn classifier_params(&self) -> Vec<ParamRef> {
        self.named_classifier_params().into_iter().map(|(_, p)| p).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(ParamRef::numel).sum()
    }

    pub fn attention_parameter_count(&self) -> usize {
        [&self.att_radar, &self.att_optical, &self.att_fused]
            .into_iter()
            .flatten()
            .flat_map(AttentionHead::params)
            .map(|p| p.numel())
            .sum()
    }

    pub fn snapshot(&self) -> Vec<Tensor> {
        self.params().iter().map(ParamRef::value).collect()
    }

    pub fn restore(&self, snapshot: &[Tensor]) -> Result<()> {
        let params = self.params();
        if params.len() != snapshot.len() {
            return Err(Error::usage("snapshot does not match model parameters"));
        }
        for (p, v) in params.iter().zip(snapshot) {
            p.set_value(v.clone())?;
        }
        Ok(())
    }

    /// Serialises the configuration and every named parameter. `extra` is
    /// stored verbatim in the metadata.
    pub fn to_checkpoint(&self, extra: serde_json::Value) -> Checkpoint {
        Checkpoint {
            meta: json!({
                "kind": "hob2srnn",
                "dims": self.dims,
                "variant": self.variant,
                "n_classes": self.n_classes,
                "extra": extra,
            }),
            tensors: self
                .named_params()
                .into_iter()
                .map(|(n, p)| (n, p.value()))
                .collect(),
        }
    }

    /// Rebuilds a model from [`Hob2sRnn::to_checkpoint`] output and returns
    /// it with the stored `extra` metadata.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<(Self, serde_json::Value)> {
        let meta = &ckpt.meta;
        if meta.get("kind").and_then(|k| k.as_str()) != Some("hob2srnn") {
            return Err(Error::Checkpoint("not a hob2srnn checkpoint".into()));
        }
        let dims: ModelDims = serde_json::from_value(meta["dims"].clone())?;
        let variant: ModelVariant = serde_json::from_value(meta["variant"].clone())?;
        let n_classes: usize = serde_json::from_value(meta["n_classes"].clone())?;
        let model = Hob2sRnn::build(variant, dims, n_classes, 0)?;
        ckpt.load_into(&model.named_params())?;
        Ok((model, meta["extra"].clone()))
    }
}

/// `0.5 · CE(p_radar) + 0.5 · CE(p_optical) + 1.0 · CE(p_fused)`, each term
/// averaged over the batch rows.
pub fn total_loss(tape: &mut Tape, out: &ForwardOutput, targets: &[usize]) -> Result<Var> {
    let lr = tape.cross_entropy(out.p_radar, targets)?;
    let lo = tape.cross_entropy(out.p_optical, targets)?;
    let lf = tape.cross_entropy(out.p_fused, targets)?;
    let lr = tape.scale(lr, AUX_WEIGHT);
    let lo = tape.scale(lo, AUX_WEIGHT);
    let lf = tape.scale(lf, FUSED_WEIGHT);
    let aux = tape.add(lr, lo)?;
    tape.add(aux, lf)
}

/// Argmax of `0.5 p_radar + 0.5 p_optical + 1.0 p_fused`; ties go to the
/// lowest class index.
pub fn fused_prediction(p_radar: &[f64], p_optical: &[f64], p_fused: &[f64]) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for k in 0..p_fused.len() {
        let score = AUX_WEIGHT * p_radar[k] + AUX_WEIGHT * p_optical[k] + FUSED_WEIGHT * p_fused[k];
        if score > best_score {
            best = k;
            best_score = score;
        }
    }
    best
}
