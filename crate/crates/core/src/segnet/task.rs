//! Segmentation objectives wired into the trainer.

use super::train::Trainable;
use super::{Params, SegNet};
use crate::error::Result;
use crate::losses::{constrained_loss, dice_loss, LossConfig, LossGrad};
use crate::mask::{BinaryMask, GrayImage, ProbMap};

/// An image, its annotation and the constraint used by the penalty.
#[derive(Debug, Clone)]
pub struct SegSample {
    pub image: GrayImage,
    pub target: BinaryMask,
    pub constraint: BinaryMask,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// Plain soft Dice.
    Dice { epsilon: f64 },
    /// Dice plus weighted out-of-constraint penalty.
    Constrained(LossConfig),
}

impl Objective {
    pub fn evaluate(&self, y: &ProbMap, sample: &SegSample) -> Result<LossGrad> {
        match self {
            Objective::Dice { epsilon } => dice_loss(y, &sample.target, *epsilon),
            Objective::Constrained(cfg) => constrained_loss(y, &sample.target, &sample.constraint, cfg),
        }
    }
}

pub struct SegTask<'a> {
    pub net: &'a SegNet,
    pub objective: Objective,
}

impl Trainable for SegTask<'_> {
    type Sample = SegSample;

    fn param_count(&self) -> usize {
        self.net.param_count()
    }

    fn loss_grad(&self, params: &Params, sample: &SegSample) -> Result<(f64, Vec<f64>)> {
        let cache = self.net.forward_raw(params, sample.image.data())?;
        let (h, w) = sample.image.shape();
        let y = ProbMap::new(h, w, cache.output().to_vec())?;
        let lg = self.objective.evaluate(&y, sample)?;
        let g = self.net.backward_cached(params, &cache, &lg.grad)?;
        Ok((lg.value, g))
    }

    fn loss(&self, params: &Params, sample: &SegSample) -> Result<f64> {
        let y = self.net.forward(params, &sample.image)?;
        Ok(self.objective.evaluate(&y, sample)?.value)
    }
}
