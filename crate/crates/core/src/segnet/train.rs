//! Mini-batch SGD with a reduce-on-plateau learning rate and early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Params;
use crate::error::{Error, Result};

/// Anything the trainer can optimise: a per-sample loss with a gradient
/// over a flat parameter vector.
pub trait Trainable {
    type Sample;

    fn param_count(&self) -> usize;

    /// Loss of one sample and its gradient with respect to the parameters.
    fn loss_grad(&self, params: &Params, sample: &Self::Sample) -> Result<(f64, Vec<f64>)>;

    fn loss(&self, params: &Params, sample: &Self::Sample) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Derived from the run seed by the pipeline.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 0.01,
            plateau_factor: 0.9,
            plateau_patience: 5,
            early_stop_patience: 15,
            max_epochs: 40,
            batch_size: 8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::config("train.lr0", "must be > 0"));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::config("train.plateau_factor", "must lie in (0, 1)"));
        }
        if self.plateau_patience == 0 {
            return Err(Error::config("train.plateau_patience", "must be >= 1"));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::config("train.early_stop_patience", "must be >= 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("train.max_epochs", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be >= 1"));
        }
        Ok(())
    }
}

/// Multiplies the learning rate by `factor` after `patience` consecutive
/// epochs without a strictly lower validation loss.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    lr: f64,
    factor: f64,
    patience: usize,
    best: f64,
    stale: usize,
    events: usize,
}

impl PlateauScheduler {
    pub fn new(lr0: f64, factor: f64, patience: usize) -> Self {
        Self {
            lr: lr0,
            factor,
            patience,
            best: f64::INFINITY,
            stale: 0,
            events: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Number of decays so far.
    pub fn events(&self) -> usize {
        self.events
    }

    /// Feeds one epoch's validation loss; returns true on improvement.
    pub fn step(&mut self, valid_loss: f64) -> bool {
        if valid_loss < self.best {
            self.best = valid_loss;
            self.stale = 0;
            return true;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            self.lr *= self.factor;
            self.events += 1;
            self.stale = 0;
        }
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub params: Params,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

fn mean_loss<T: Trainable>(task: &T, params: &Params, data: &[T::Sample]) -> Result<f64> {
    let mut total = 0.0;
    for s in data {
        total += task.loss(params, s)?;
    }
    Ok(total / data.len() as f64)
}

/// Runs SGD from `init`. Fully deterministic for a given config and data.
pub fn train<T: Trainable>(
    task: &T,
    init: Params,
    train: &[T::Sample],
    valid: &[T::Sample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    if valid.is_empty() {
        return Err(Error::Empty("validation split"));
    }
    if init.len() != task.param_count() {
        return Err(Error::LengthMismatch {
            what: "initial parameters",
            left: init.len(),
            right: task.param_count(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sched = PlateauScheduler::new(cfg.lr0, cfg.plateau_factor, cfg.plateau_patience);
    let mut params = init;
    let mut best = params.clone();
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grad_sum = vec![0.0; params.len()];

    for epoch in 1..=cfg.max_epochs {
        let lr = sched.lr();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad_sum.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let (loss, g) = task.loss_grad(&params, &train[i])?;
                if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteLoss { epoch, lr, sample: i });
                }
                epoch_loss += loss;
                for (acc, v) in grad_sum.iter_mut().zip(&g) {
                    *acc += v;
                }
            }
            let scale = lr / batch.len() as f64;
            for (p, g) in params.0.iter_mut().zip(&grad_sum) {
                *p -= scale * g;
            }
        }
        let valid_loss = mean_loss(task, &params, valid)?;
        if !valid_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                lr,
                sample: usize::MAX,
            });
        }
        history.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / train.len() as f64,
            valid_loss,
            lr,
        });
        if sched.step(valid_loss) {
            best = params.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        params: best,
        best_epoch,
        history,
    })
}
