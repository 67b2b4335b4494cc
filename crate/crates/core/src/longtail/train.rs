//! Decoupled two-stage training: representation learning with instance-balanced
//! batches, then classifier-only learning with class-balanced batches on a
//! frozen encoder.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::longtail::dataset::LongTailDataset;
use crate::longtail::encoder::Encoder;
use crate::longtail::eval::{evaluate, Accuracy, GroupThresholds};
use crate::longtail::optim::{cosine_lr, Sgd};
use crate::longtail::sampler::{class_balanced_batches, instance_balanced_batches};
use crate::wcdas::{Head, HeadCheckpoint, HeadKind, LogitScale};

/// Floor applied to a trainable scale after each step.
pub const MIN_SCALE: f64 = 1e-3;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Initial value of the concentration pre-activations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InitRepr", into = "InitRepr")]
pub enum ConcInit {
    Constant(f64),
    /// Zero-mean normal with variance 2 / D.
    He,
    /// Zero-mean normal with variance 2 / (D + C).
    Xavier,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum InitRepr {
    Value(f64),
    Name(String),
}

impl TryFrom<InitRepr> for ConcInit {
    type Error = String;

    fn try_from(r: InitRepr) -> std::result::Result<Self, String> {
        match r {
            InitRepr::Value(v) => Ok(ConcInit::Constant(v)),
            InitRepr::Name(n) => match n.to_ascii_lowercase().as_str() {
                "he" => Ok(ConcInit::He),
                "xavier" | "xa" => Ok(ConcInit::Xavier),
                other => other
                    .parse::<f64>()
                    .map(ConcInit::Constant)
                    .map_err(|_| format!("unknown w_rho initialization {other:?}")),
            },
        }
    }
}

impl From<ConcInit> for InitRepr {
    fn from(c: ConcInit) -> Self {
        match c {
            ConcInit::Constant(v) => InitRepr::Value(v),
            ConcInit::He => InitRepr::Name("he".into()),
            ConcInit::Xavier => InitRepr::Name("xavier".into()),
        }
    }
}

impl ConcInit {
    fn sample(self, rng: &mut impl Rng, classes: usize, dim: usize) -> Array1<f64> {
        match self {
            ConcInit::Constant(v) => Array1::from_elem(classes, v),
            ConcInit::He => {
                let sd = (2.0 / dim as f64).sqrt();
                (0..classes).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
            }
            ConcInit::Xavier => {
                let sd = (2.0 / (dim + classes) as f64).sqrt();
                (0..classes).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub head: HeadKind,
    pub rep_epochs: usize,
    pub cls_epochs: usize,
    pub rep_lr: f64,
    pub cls_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub cosine_schedule: bool,
    pub batch_size: usize,
    /// Hidden width of the encoder; 0 for a single linear layer.
    pub hidden_dim: usize,
    pub feature_dim: usize,
    /// Initial `w_ρ` (wrapped Cauchy) or `ln κ` (von Mises–Fisher).
    pub w_rho_init: ConcInit,
    pub s_init: f64,
    pub train_scale: bool,
    pub logit_scale: LogitScale,
    pub many_threshold: usize,
    pub few_threshold: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            head: HeadKind::Wcdas,
            rep_epochs: 60,
            cls_epochs: 30,
            rep_lr: 0.02,
            cls_lr: 0.2,
            momentum: 0.9,
            weight_decay: 1e-4,
            cosine_schedule: true,
            batch_size: 64,
            hidden_dim: 64,
            feature_dim: 16,
            w_rho_init: ConcInit::Constant(-1.0),
            s_init: 16.0,
            train_scale: true,
            logit_scale: LogitScale::Scaled,
            many_threshold: 100,
            few_threshold: 20,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn thresholds(&self) -> GroupThresholds {
        GroupThresholds {
            many: self.many_threshold,
            few: self.few_threshold,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Precondition(msg.to_string()));
        if self.rep_epochs == 0 && self.cls_epochs == 0 {
            return bad("at least one training epoch is required");
        }
        if !(self.rep_lr > 0.0 && self.cls_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.batch_size == 0 || self.feature_dim == 0 {
            return bad("batch size and feature dimension must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 {
            return bad("momentum must be in [0, 1) and weight decay non-negative");
        }
        if !(self.s_init > 0.0) {
            return bad("initial scale must be positive");
        }
        if self.few_threshold > self.many_threshold {
            return bad("few threshold must not exceed many threshold");
        }
        Ok(())
    }

    fn encoder_dims(&self, input_dim: usize) -> Vec<usize> {
        if self.hidden_dim == 0 {
            vec![input_dim, self.feature_dim]
        } else {
            vec![input_dim, self.hidden_dim, self.feature_dim]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Representation,
    Classifier,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Representation => "representation",
            Stage::Classifier => "classifier",
        })
    }
}

/// One epoch of training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    /// One-based, counted across both stages.
    pub epoch: usize,
    pub stage: Stage,
    pub lr: f64,
    /// Mean of the minibatch losses.
    pub loss: f64,
    pub accuracy: Accuracy,
    pub s: f64,
    /// Per-class ρ, for wrapped Cauchy heads only.
    pub rho: Option<Vec<f64>>,
}

impl TrainRecord {
    pub fn mean_rho(&self) -> Option<f64> {
        self.rho.as_ref().map(|r| r.iter().sum::<f64>() / r.len() as f64)
    }
}

/// Encoder followed by a classifier head.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub encoder: Encoder,
    pub head: Head,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    format_version: u32,
    encoder: Encoder,
    head: HeadCheckpoint,
}

impl Model {
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        let h = self.encoder.encode(x)?;
        self.head.predict(h.view())
    }

    pub fn to_json(&self) -> String {
        let doc = ModelDoc {
            format_version: MODEL_FORMAT_VERSION,
            encoder: self.encoder.clone(),
            head: HeadCheckpoint::from(&self.head),
        };
        serde_json::to_string_pretty(&doc).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported model format version {}",
                doc.format_version
            )));
        }
        let head = Head::try_from(doc.head)?;
        if doc.encoder.output_dim() != head.dim() {
            return Err(Error::Format("encoder output does not match head dimension".into()));
        }
        Ok(Self {
            encoder: doc.encoder,
            head,
        })
    }
}

/// Freshly initialized model for `dataset` under `config`.
pub fn init_model(dataset: &LongTailDataset, config: &TrainConfig) -> Result<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(u64::MAX);
    let encoder = Encoder::new(&mut rng, &config.encoder_dims(dataset.train.features.ncols()))?;
    let c = dataset.classes();
    let weights = Array2::from_shape_fn((c, config.feature_dim), |_| rng.sample::<f64, _>(StandardNormal));
    let w_conc = match config.head {
        HeadKind::Angular => Array1::zeros(c),
        _ => config.w_rho_init.sample(&mut rng, c, config.feature_dim),
    };
    let head = Head::new(config.head, weights, w_conc, config.s_init)?.with_logit_scale(config.logit_scale);
    Ok(Model { encoder, head })
}

fn rows(m: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    m.select(Axis(0), idx)
}

fn stage_lr(config: &TrainConfig, stage: Stage, epoch: usize) -> f64 {
    let (lr, epochs) = match stage {
        Stage::Representation => (config.rep_lr, config.rep_epochs),
        Stage::Classifier => (config.cls_lr, config.cls_epochs),
    };
    if config.cosine_schedule {
        cosine_lr(lr, epoch, epochs)
    } else {
        lr
    }
}

// Optimizer slots; encoder layers occupy 2·i and 2·i + 1 after these.
const SLOT_W: usize = 0;
const SLOT_CONC: usize = 1;
const SLOT_S: usize = 2;
const SLOT_ENCODER: usize = 3;

fn step_head(opt: &mut Sgd, head: &mut Head, g: &crate::wcdas::HeadGradients, lr: f64, config: &TrainConfig) {
    opt.step(SLOT_W, &mut head.weights, &g.d_weights, lr, true);
    if head.kind != HeadKind::Angular {
        opt.step(SLOT_CONC, &mut head.w_conc, &g.d_w_conc, lr, false);
    }
    if config.train_scale && head.logit_scale == LogitScale::Scaled {
        opt.step_scalar(SLOT_S, &mut head.s, g.d_s, lr, false);
        head.s = head.s.max(MIN_SCALE);
    }
}

fn record(
    model: &Model,
    dataset: &LongTailDataset,
    config: &TrainConfig,
    epoch: usize,
    stage: Stage,
    lr: f64,
    loss: f64,
) -> Result<TrainRecord> {
    let accuracy = evaluate(model, &dataset.test, &dataset.class_counts, config.thresholds())?;
    Ok(TrainRecord {
        epoch,
        stage,
        lr,
        loss,
        accuracy,
        s: model.head.s,
        rho: (model.head.kind == HeadKind::Wcdas).then(|| model.head.rho().to_vec()),
    })
}

fn guard(loss: f64, stage: Stage, epoch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged {
            stage: match stage {
                Stage::Representation => "representation",
                Stage::Classifier => "classifier",
            },
            epoch,
            loss,
        })
    }
}

/// Runs both stages and returns the trained model and one record per epoch.
pub fn train_decoupled(dataset: &LongTailDataset, config: &TrainConfig) -> Result<(Model, Vec<TrainRecord>)> {
    let mut on_epoch = |_: &TrainRecord| {};
    train_decoupled_with(dataset, config, &mut on_epoch)
}

/// As [`train_decoupled`], calling `on_epoch` after every epoch.
pub fn train_decoupled_with(
    dataset: &LongTailDataset,
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&TrainRecord),
) -> Result<(Model, Vec<TrainRecord>)> {
    config.validate()?;
    let mut model = init_model(dataset, config)?;
    let mut records = Vec::with_capacity(config.rep_epochs + config.cls_epochs);
    let train = &dataset.train;
    let n = train.len();

    let mut opt = Sgd::new(config.momentum, config.weight_decay);
    for e in 0..config.rep_epochs {
        let lr = stage_lr(config, Stage::Representation, e);
        let batches = instance_balanced_batches(n, config.batch_size, config.seed, e)?;
        let mut loss_sum = 0.0;
        for idx in &batches {
            let x = rows(&train.features, idx);
            let y: Vec<usize> = idx.iter().map(|&i| train.labels[i]).collect();
            let (h, cache) = model.encoder.forward(x.view())?;
            let (loss, g) = model.head.loss_and_backward(h.view(), &y, None)?;
            guard(loss, Stage::Representation, e + 1)?;
            loss_sum += loss;
            let eg = model.encoder.backward(&cache, g.d_features.clone());
            step_head(&mut opt, &mut model.head, &g, lr, config);
            for (i, (layer, grad)) in model.encoder.layers.iter_mut().zip(&eg.layers).enumerate() {
                opt.step(SLOT_ENCODER + 2 * i, &mut layer.weight, &grad.weight, lr, true);
                opt.step(SLOT_ENCODER + 2 * i + 1, &mut layer.bias, &grad.bias, lr, true);
            }
        }
        let rec = record(&model, dataset, config, e + 1, Stage::Representation, lr, loss_sum / batches.len() as f64)?;
        on_epoch(&rec);
        records.push(rec);
    }

    // The encoder is frozen from here on, so its outputs can be computed once.
    let features = model.encoder.encode(train.features.view())?;
    let class_idx = train.class_indices(dataset.classes());
    let n_batches = n.div_ceil(config.batch_size);
    let mut opt = Sgd::new(config.momentum, config.weight_decay);
    let sampler_seed = config.seed ^ 0x00c1_a55b_a1a4_ced0;
    for e in 0..config.cls_epochs {
        let lr = stage_lr(config, Stage::Classifier, e);
        let batches = class_balanced_batches(&class_idx, config.batch_size, sampler_seed, e, n_batches)?;
        let mut loss_sum = 0.0;
        for idx in &batches {
            let h = rows(&features, idx);
            let y: Vec<usize> = idx.iter().map(|&i| train.labels[i]).collect();
            let (loss, g) = model.head.loss_and_backward(h.view(), &y, None)?;
            guard(loss, Stage::Classifier, config.rep_epochs + e + 1)?;
            loss_sum += loss;
            step_head(&mut opt, &mut model.head, &g, lr, config);
        }
        let rec = record(
            &model,
            dataset,
            config,
            config.rep_epochs + e + 1,
            Stage::Classifier,
            lr,
            loss_sum / batches.len() as f64,
        )?;
        on_epoch(&rec);
        records.push(rec);
    }
    Ok((model, records))
}
