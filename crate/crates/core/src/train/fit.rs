use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::DatasetSplit;
use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::eval::{evaluate_output, EvalOptions, HeldOut};
use crate::graph::{build_graph, BipartiteGraph};
use crate::linalg::{Matrix, Scalar};
use crate::model::{
    full_forward, AlphaRecParams, IdEmbeddingParams, Model, ModelKind, ModelParams, ProbeParams,
    DEFAULT_HIDDEN_DIM, DEFAULT_LAYERS, DEFAULT_LEAKY_SLOPE, DEFAULT_OUT_DIM,
};
use crate::seed::{derive_seed, rng_for};

use super::adam::{adam_step, AdamConfig, OptimState};
use super::grad::{compute_gradients, Objective, TrainBatch};
use super::loss::LossKind;
use super::sampler::{sample_negatives, NegativePools};

/// How positives from several datasets are grouped into batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixStrategy {
    /// One global shuffle; batches may span datasets.
    #[default]
    Pooled,
    /// Batches drawn from one dataset at a time, round-robin.
    Alternate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub temperature: f64,
    /// Negatives per positive for InfoNCE; BPR always uses one.
    pub n_negatives: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub max_epochs: usize,
    pub eval_every: usize,
    pub patience: usize,
    pub layers: usize,
    pub loss: LossKind,
    pub mix: MixStrategy,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            temperature: 0.15,
            n_negatives: 256,
            batch_size: 1024,
            learning_rate: 5e-4,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            max_epochs: 500,
            eval_every: 1,
            patience: 20,
            layers: DEFAULT_LAYERS,
            loss: LossKind::InfoNce,
            mix: MixStrategy::Pooled,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::Invalid(format!("temperature must be positive, got {}", self.temperature)));
        }
        if self.n_negatives == 0 || self.batch_size == 0 || self.patience == 0 || self.eval_every == 0 {
            return Err(Error::Invalid(
                "n_negatives, batch_size, patience and eval_every must all be at least 1".into(),
            ));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::Invalid(format!("bad learning rate {}", self.learning_rate)));
        }
        Ok(())
    }

    fn negatives_per_positive(&self) -> usize {
        match self.loss {
            LossKind::InfoNce => self.n_negatives,
            LossKind::Bpr => 1,
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_betas.0,
            beta2: self.adam_betas.1,
            eps: self.adam_eps,
        }
    }
}

/// Architecture choices made before training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub hidden_dim: usize,
    pub out_dim: usize,
    pub leaky_slope: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            kind: ModelKind::AlphaRec,
            hidden_dim: DEFAULT_HIDDEN_DIM,
            out_dim: DEFAULT_OUT_DIM,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        }
    }
}

impl ModelSpec {
    pub fn init<T: Scalar>(
        &self,
        dim_lang: Option<usize>,
        n_users: usize,
        n_items: usize,
        layers: usize,
        seed: u64,
    ) -> Result<Model<T>> {
        let need_dim = || dim_lang.ok_or_else(|| Error::Invalid(format!("{} model needs item features", self.kind)));
        let params = match self.kind {
            ModelKind::Probe => ModelParams::Probe(ProbeParams::init(need_dim()?, self.out_dim, seed)),
            ModelKind::AlphaRec => ModelParams::AlphaRec(AlphaRecParams::init(
                need_dim()?,
                self.hidden_dim,
                self.out_dim,
                self.leaky_slope,
                seed,
            )),
            ModelKind::Id => ModelParams::Id(IdEmbeddingParams::init(n_users, n_items, self.out_dim, seed)),
        };
        Ok(Model { params, layers })
    }
}

/// A training split with its (item-aligned) features and negative pools.
#[derive(Debug, Clone)]
pub struct TrainData<'a> {
    pub split: &'a DatasetSplit,
    pub features: Option<&'a EmbeddingMatrix>,
    pub pools: NegativePools,
}

impl<'a> TrainData<'a> {
    pub fn new(split: &'a DatasetSplit, features: Option<&'a EmbeddingMatrix>) -> Self {
        TrainData {
            split,
            features,
            pools: NegativePools::single(split),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub recall20_val: Option<f64>,
    pub seconds: f64,
}

/// JSON-lines rendering of a training log, one object per epoch.
pub fn log_to_jsonl(log: &[EpochLog]) -> String {
    let mut out = String::new();
    for e in log {
        writeln!(out, "{}", serde_json::to_string(e).expect("log entry serializes")).expect("write to string");
    }
    out
}

#[derive(Debug, Clone)]
pub struct FitResult<T> {
    /// Parameters with the best validation Recall@20 (the last ones if never evaluated).
    pub model: Model<T>,
    pub best_epoch: usize,
    pub best_val_recall: Option<f64>,
    pub log: Vec<EpochLog>,
    pub stopped_early: bool,
}

/// Cut-off used for model selection.
pub const SELECTION_K: usize = 20;

fn epoch_batches(
    data: &TrainData<'_>,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<Vec<Vec<(usize, usize)>>> {
    use rand::seq::SliceRandom;
    let mut positives: Vec<(usize, usize)> = data
        .split
        .train
        .iter()
        .enumerate()
        .flat_map(|(u, items)| items.iter().map(move |&i| (u, i)))
        .collect();
    positives.shuffle(&mut rng_for(cfg.seed, &format!("epoch/{epoch}/order")));
    Ok(match cfg.mix {
        MixStrategy::Pooled => positives.chunks(cfg.batch_size).map(<[_]>::to_vec).collect(),
        MixStrategy::Alternate => {
            let mut groups = vec![Vec::new(); data.pools.len()];
            for p in positives {
                let k = data
                    .pools
                    .pool_of(p.1)
                    .ok_or_else(|| Error::Invalid(format!("item {} outside every pool", p.1)))?;
                groups[k].push(p);
            }
            let mut per_group: Vec<std::vec::IntoIter<Vec<(usize, usize)>>> = groups
                .iter()
                .map(|g| g.chunks(cfg.batch_size).map(<[_]>::to_vec).collect::<Vec<_>>().into_iter())
                .collect();
            let mut out = Vec::new();
            loop {
                let before = out.len();
                for it in per_group.iter_mut() {
                    if let Some(b) = it.next() {
                        out.push(b);
                    }
                }
                if out.len() == before {
                    break;
                }
            }
            out
        }
    })
}

fn with_negatives(
    data: &TrainData<'_>,
    positives: Vec<(usize, usize)>,
    n: usize,
    rng: &mut impl rand::Rng,
) -> Result<TrainBatch> {
    let mut negatives = Vec::with_capacity(positives.len());
    for &(u, i) in &positives {
        let pool = data
            .pools
            .pool_of(i)
            .ok_or_else(|| Error::Invalid(format!("item {i} outside every pool")))?;
        negatives.push(sample_negatives(
            u,
            &data.split.train[u],
            data.pools.range(pool),
            data.pools.tag(pool),
            n,
            rng,
        )?);
    }
    Ok(TrainBatch { positives, negatives })
}

fn validation_recall<T: Scalar>(
    model: &Model<T>,
    features: Option<&Matrix<T>>,
    g: &BipartiteGraph,
    split: &DatasetSplit,
) -> Result<f64> {
    let out = full_forward(model, features, g)?;
    let opts = EvalOptions {
        k: SELECTION_K,
        mask_validation: false,
    };
    Ok(evaluate_output(&out, split, HeldOut::Validation, &opts)?.recall)
}

/// Trains `model` in place from its current parameters.
pub fn fit_model<T: Scalar>(model: Model<T>, data: &TrainData<'_>, cfg: &TrainConfig) -> Result<FitResult<T>> {
    cfg.validate()?;
    data.split.validate()?;
    let features: Option<Matrix<T>> = data.features.map(EmbeddingMatrix::to_matrix);
    if let Some(x) = &features {
        if x.rows() != data.split.n_items() {
            return Err(Error::Shape(format!(
                "{} feature rows for {} items",
                x.rows(),
                data.split.n_items()
            )));
        }
    }
    let g = build_graph(data.split);
    let obj = Objective {
        loss: cfg.loss,
        temperature: cfg.temperature,
    };
    let adam = cfg.adam();
    let mut model = model;
    let mut state = OptimState::new(&model.params);
    let mut best: Option<(f64, usize, Model<T>)> = None;
    let mut since_best = 0usize;
    let mut log = Vec::new();
    let mut stopped_early = false;
    let n_positives = data.split.n_train_interactions().max(1) as f64;

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        let mut neg_rng = rng_for(cfg.seed, &format!("epoch/{epoch}/negatives"));
        let mut loss_sum = 0.0;
        for (b, positives) in epoch_batches(data, cfg, epoch)?.into_iter().enumerate() {
            let batch = with_negatives(data, positives, cfg.negatives_per_positive(), &mut neg_rng)?;
            let lg = compute_gradients(&model, features.as_ref(), &g, &batch, &obj)?;
            let loss = lg.loss.f64();
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: b, loss });
            }
            loss_sum += loss * batch.len() as f64;
            adam_step(&mut model.params, &lg.grads, &mut state, &adam)?;
        }
        let recall = if epoch % cfg.eval_every == 0 {
            Some(validation_recall(&model, features.as_ref(), &g, data.split)?)
        } else {
            None
        };
        log.push(EpochLog {
            epoch,
            loss: loss_sum / n_positives,
            recall20_val: recall,
            seconds: started.elapsed().as_secs_f64(),
        });
        if let Some(r) = recall {
            if best.as_ref().is_none_or(|(b, _, _)| r > *b) {
                best = Some((r, epoch, model.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    Ok(match best {
        Some((r, epoch, m)) => FitResult {
            model: m,
            best_epoch: epoch,
            best_val_recall: Some(r),
            log,
            stopped_early,
        },
        None => FitResult {
            best_epoch: log.len(),
            model,
            best_val_recall: None,
            log,
            stopped_early,
        },
    })
}

/// Initializes a model from `spec` and trains it.
pub fn fit<T: Scalar>(spec: &ModelSpec, data: &TrainData<'_>, cfg: &TrainConfig) -> Result<FitResult<T>> {
    let model = spec.init(
        data.features.map(EmbeddingMatrix::dim),
        data.split.n_users(),
        data.split.n_items(),
        cfg.layers,
        derive_seed(cfg.seed, "model-init"),
    )?;
    fit_model(model, data, cfg)
}

/// Fits once per temperature and keeps the run with the best validation Recall@20.
pub fn tune_temperature<T: Scalar>(
    spec: &ModelSpec,
    data: &TrainData<'_>,
    cfg: &TrainConfig,
    grid: &[f64],
) -> Result<(f64, FitResult<T>)> {
    let mut best: Option<(f64, FitResult<T>)> = None;
    for &tau in grid {
        let run = fit(spec, data, &TrainConfig { temperature: tau, ..*cfg })?;
        let score = run.best_val_recall.unwrap_or(f64::NEG_INFINITY);
        if best
            .as_ref()
            .is_none_or(|(_, b)| score > b.best_val_recall.unwrap_or(f64::NEG_INFINITY))
        {
            best = Some((tau, run));
        }
    }
    best.ok_or_else(|| Error::Empty("empty temperature grid".into()))
}
