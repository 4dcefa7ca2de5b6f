//! Node dropout, training objectives, the RMSprop loop and early stopping.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::{RatingRecord, RatingScale};
use crate::diffcore::{DiffError, GradBuffer, ParamStore, RmsProp, RmsPropConfig, Var};
use crate::eval::{self, EvalError};
use crate::model::{item_users, user_items, Forward, Model, NeighborSample, SocialNeighbor};
use crate::pipeline::Context;
use crate::social_graph::LambdaWeights;

const SHUFFLE_STREAM: u64 = 0x7368_7566_666c_65;
const DROPOUT_STREAM: u64 = 0x6472_6f70_6f75_74;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Rating,
    Ranking,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Rating => "rating",
            Task::Ranking => "ranking",
        })
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rating" => Ok(Task::Rating),
            "ranking" => Ok(Task::Ranking),
            other => Err(format!("unknown task {other:?} (expected rating or ranking)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub task: Task,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    /// Cap `K` on every sampled neighbor list.
    pub dropout_k: usize,
    /// When false, training uses complete neighbor lists.
    pub node_dropout: bool,
    /// Ranking threshold `F`: ratings `>= F` are positives.
    pub threshold: f64,
    pub seed: u64,
    pub patience: usize,
    pub val_fraction: f64,
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            task: Task::Rating,
            epochs: 50,
            batch_size: 128,
            learning_rate: 1e-3,
            rho: 0.9,
            epsilon: 1e-8,
            dropout_k: 30,
            node_dropout: true,
            threshold: 4.0,
            seed: 0,
            patience: 5,
            val_fraction: 0.1,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, scale: RatingScale) -> Result<(), TrainError> {
        let err = |m: String| Err(TrainError::Config(m));
        if self.dropout_k < 1 {
            return err("dropout_k must be at least 1".into());
        }
        if self.patience < 1 {
            return err("patience must be at least 1".into());
        }
        if self.batch_size < 1 {
            return err("batch_size must be at least 1".into());
        }
        if self.threads < 1 {
            return err("threads must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return err(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return err(format!("rho must lie in (0, 1), got {}", self.rho));
        }
        if !(self.epsilon > 0.0) {
            return err(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return err(format!("val_fraction must lie in [0, 1), got {}", self.val_fraction));
        }
        if self.task == Task::Ranking && !scale.contains(self.threshold) {
            return err(format!(
                "threshold {} outside rating scale [{}, {}]",
                self.threshold, scale.min, scale.max
            ));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> RmsPropConfig {
        RmsPropConfig {
            learning_rate: self.learning_rate,
            rho: self.rho,
            epsilon: self.epsilon,
        }
    }
}

/// SplitMix64 over `(seed, stream, index)`.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    for _ in 0..2 {
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Keeps the whole list when it has at most `k` entries, otherwise a
/// uniform `k`-subset without replacement (in original order).
pub fn node_dropout_sample<T: Clone, R: Rng + ?Sized>(list: &[T], k: usize, rng: &mut R) -> Vec<T> {
    if list.len() <= k {
        return list.to_vec();
    }
    let mut picked = index::sample(rng, list.len(), k).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| list[i].clone()).collect()
}

/// `1.0` when `r >= threshold`, else `0.0`.
pub fn ranking_labels(ratings: &[f64], threshold: f64) -> Vec<f64> {
    ratings
        .iter()
        .map(|&r| if r >= threshold { 1.0 } else { 0.0 })
        .collect()
}

/// Training-time neighborhood: every list capped at `k`, social weights
/// renormalized over the sampled neighbors, each neighbor's own item list
/// sampled independently.
pub fn sample_neighborhood<R: Rng + ?Sized>(
    ctx: &Context,
    user: usize,
    item: usize,
    k: usize,
    rng: &mut R,
) -> NeighborSample {
    let items_of_user = node_dropout_sample(&user_items(&ctx.tables, user, Some(item)), k, rng);
    let users_of_item = node_dropout_sample(&item_users(&ctx.tables, item, Some(user)), k, rng);
    let neighbors = node_dropout_sample(ctx.graph.neighbors(user), k, rng);
    let social = LambdaWeights::from_neighbors(&neighbors)
        .weights
        .into_iter()
        .map(|(n, weight)| SocialNeighbor {
            user: n,
            weight,
            items: node_dropout_sample(&user_items(&ctx.tables, n, None), k, rng),
        })
        .collect();
    NeighborSample {
        items_of_user,
        users_of_item,
        social,
    }
}

/// Objective over a set of examples recorded on one tape: `L₁ = (1/2n) Σ
/// (r̂ − r)²` for the rating task, summed binary cross-entropy of
/// `sigmoid(r̂)` for ranking.
pub fn batch_loss(
    fwd: &mut Forward<'_>,
    ctx: &Context,
    examples: &[RatingRecord],
    samples: &[NeighborSample],
    task: Task,
    threshold: f64,
) -> Result<Var, DiffError> {
    let mut outputs = Vec::with_capacity(examples.len());
    for (r, s) in examples.iter().zip(samples) {
        outputs.push(fwd.predict_rating(&ctx.stats, r.user, r.item, s)?);
    }
    let ratings: Vec<f64> = examples.iter().map(|r| r.rating).collect();
    match task {
        Task::Rating => fwd.tape.mse_loss(&outputs, &ratings),
        // same value as bce_loss over sigmoid(r̂), without cancellation in ln(1 − p)
        Task::Ranking => fwd
            .tape
            .bce_with_logits_loss(&outputs, &ranking_labels(&ratings, threshold)),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: Option<f64>,
    pub seconds: f64,
}

impl EpochRecord {
    /// `epoch,train_loss,val_metric,seconds`
    pub fn log_line(&self) -> String {
        let val = self
            .val_metric
            .map(|v| v.to_string())
            .unwrap_or_default();
        format!(
            "{},{},{},{:.3}",
            self.epoch, self.train_loss, val, self.seconds
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValidationMetric {
    Rmse,
    Auc,
    /// Used for ranking when the validation labels are single-class.
    LogLoss,
}

impl ValidationMetric {
    fn better(self, a: f64, b: f64) -> bool {
        match self {
            ValidationMetric::Auc => a > b,
            ValidationMetric::Rmse | ValidationMetric::LogLoss => a < b,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ValidationMetric::Rmse => "rmse",
            ValidationMetric::Auc => "auc",
            ValidationMetric::LogLoss => "log_loss",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: Option<usize>,
    pub metric: Option<ValidationMetric>,
}

/// Holds optimizer state and the worker pool across epochs.
pub struct Trainer {
    pub config: TrainConfig,
    optimizer: RmsProp,
    pool: Option<rayon::ThreadPool>,
}

impl Trainer {
    pub fn new(config: TrainConfig, model: &Model) -> Result<Self, TrainError> {
        let pool = if config.threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.threads)
                    .build()
                    .map_err(|e| TrainError::Config(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(Trainer {
            optimizer: RmsProp::new(&model.store, config.optimizer()),
            config,
            pool,
        })
    }

    fn example_sample(&self, ctx: &Context, r: &RatingRecord, epoch: usize, index: usize) -> NeighborSample {
        if self.config.node_dropout {
            let seed = derive_seed(
                derive_seed(self.config.seed, DROPOUT_STREAM, epoch as u64),
                DROPOUT_STREAM,
                index as u64,
            );
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample_neighborhood(ctx, r.user, r.item, self.config.dropout_k, &mut rng)
        } else {
            NeighborSample::full(&ctx.tables, &ctx.graph, r.user, r.item)
        }
    }

    /// Adds one example's loss gradient into `grads`; returns the loss.
    fn example_gradient(
        &self,
        model: &Model,
        ctx: &Context,
        r: &RatingRecord,
        epoch: usize,
        index: usize,
        grads: &mut GradBuffer,
    ) -> Result<f64, DiffError> {
        let sample = self.example_sample(ctx, r, epoch, index);
        let mut fwd = model.forward();
        let loss = batch_loss(
            &mut fwd,
            ctx,
            std::slice::from_ref(r),
            std::slice::from_ref(&sample),
            self.config.task,
            self.config.threshold,
        )?;
        fwd.tape.backward(loss, grads)?;
        Ok(fwd.tape.scalar(loss))
    }

    fn batch_gradient(
        &self,
        model: &Model,
        ctx: &Context,
        examples: &[RatingRecord],
        batch: &[usize],
        epoch: usize,
        grads: &mut GradBuffer,
    ) -> Result<f64, DiffError> {
        match &self.pool {
            None => {
                let mut total = 0.0;
                for &i in batch {
                    total += self.example_gradient(model, ctx, &examples[i], epoch, i, grads)?;
                }
                Ok(total)
            }
            Some(pool) => {
                let chunk = batch.len().div_ceil(self.config.threads).max(1);
                let parts = pool.install(|| {
                    batch
                        .par_chunks(chunk)
                        .map(|part| {
                            let mut local = GradBuffer::zeros_like(&model.store);
                            let mut total = 0.0;
                            for &i in part {
                                total += self.example_gradient(
                                    model,
                                    ctx,
                                    &examples[i],
                                    epoch,
                                    i,
                                    &mut local,
                                )?;
                            }
                            Ok((total, local))
                        })
                        .collect::<Result<Vec<_>, DiffError>>()
                })?;
                let mut total = 0.0;
                for (t, local) in parts {
                    total += t;
                    grads.add_assign(&local);
                }
                Ok(total)
            }
        }
    }

    /// One pass over `examples` in a seeded shuffle; one RMSprop step per
    /// mini-batch on the batch-averaged gradient. Returns the mean
    /// per-example loss. `epoch` is 0-based.
    pub fn train_epoch(
        &mut self,
        model: &mut Model,
        ctx: &Context,
        examples: &[RatingRecord],
        epoch: usize,
    ) -> Result<f64, DiffError> {
        if examples.is_empty() {
            return Ok(0.0);
        }
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            self.config.seed,
            SHUFFLE_STREAM,
            epoch as u64,
        ));
        order.shuffle(&mut rng);

        let mut grads = GradBuffer::zeros_like(&model.store);
        let mut total = 0.0;
        for batch in order.chunks(self.config.batch_size) {
            grads.zero();
            total += self.batch_gradient(model, ctx, examples, batch, epoch, &mut grads)?;
            model.store.accumulate(&grads, 1.0 / batch.len() as f64);
            self.optimizer.step(&mut model.store);
        }
        Ok(total / examples.len() as f64)
    }
}

fn validation_metric(task: Task, val: &[RatingRecord], threshold: f64) -> Option<ValidationMetric> {
    if val.is_empty() {
        return None;
    }
    Some(match task {
        Task::Rating => ValidationMetric::Rmse,
        Task::Ranking => {
            let ratings: Vec<f64> = val.iter().map(|r| r.rating).collect();
            let labels = ranking_labels(&ratings, threshold);
            if labels.iter().all(|&y| y == labels[0]) {
                ValidationMetric::LogLoss
            } else {
                ValidationMetric::Auc
            }
        }
    })
}

fn score_validation(
    model: &Model,
    ctx: &Context,
    val: &[RatingRecord],
    metric: ValidationMetric,
    threshold: f64,
) -> Result<f64, TrainError> {
    let preds = eval::predict_all(model, ctx, val)?;
    let targets: Vec<f64> = val.iter().map(|r| r.rating).collect();
    let labels = || -> Vec<bool> { targets.iter().map(|&r| r >= threshold).collect() };
    let probs = || -> Vec<f64> { preds.iter().map(|&r| crate::diffcore::sigmoid(r)).collect() };
    Ok(match metric {
        ValidationMetric::Rmse => eval::rmse(&preds, &targets)?,
        ValidationMetric::Auc => eval::auc(&probs(), &labels())?,
        ValidationMetric::LogLoss => eval::log_loss(&probs(), &labels())?,
    })
}

/// Trains for up to `config.epochs` epochs with early stopping on the
/// validation metric (RMSE for rating, AUC for ranking). The parameters of
/// the best validation epoch are left in `model`. Without validation data
/// every epoch runs and the last one is kept.
pub fn fit(
    model: &mut Model,
    ctx: &Context,
    train: &[RatingRecord],
    val: &[RatingRecord],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainHistory, TrainError> {
    config.validate(ctx.scale)?;
    let metric = validation_metric(config.task, val, config.threshold);
    let mut history = TrainHistory {
        metric,
        ..Default::default()
    };
    let mut trainer = Trainer::new(config.clone(), model)?;
    let mut best: Option<(f64, ParamStore)> = None;
    let mut since_best = 0;

    for epoch in 0..config.epochs {
        let start = Instant::now();
        let train_loss = trainer.train_epoch(model, ctx, train, epoch)?;
        let val_metric = match metric {
            Some(m) => Some(score_validation(model, ctx, val, m, config.threshold)?),
            None => None,
        };
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss,
            val_metric,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        history.epochs.push(record);

        let (Some(m), Some(v)) = (metric, val_metric) else {
            history.best_epoch = Some(epoch + 1);
            continue;
        };
        let improved = match &best {
            None => true,
            Some((b, _)) => m.better(v, *b),
        };
        if improved {
            best = Some((v, model.store.clone()));
            history.best_epoch = Some(epoch + 1);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    if let Some((_, store)) = best {
        model.store.copy_values_from(&store)?;
    }
    Ok(history)
}
