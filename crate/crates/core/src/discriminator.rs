//! Classifier that predicts whether a candidate constraint is trustworthy,
//! plus cutoff selection against specificity anchors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{ensure_same, BinaryMask, GrayImage};
use crate::metrics::{confusion_rates, ConfusionRates};
use crate::segnet::layers::sigmoid;
use crate::segnet::train::{train, TrainConfig, TrainOutcome, Trainable};
use crate::segnet::{NetworkSpec, Params, ScoreNet};

/// Image, constraint and masked image stacked as three planes.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedInput {
    height: usize,
    width: usize,
    planes: Vec<f64>,
}

impl FusedInput {
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Plane `i` (0 = image, 1 = constraint, 2 = image × constraint).
    pub fn plane(&self, i: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.planes[i * n..(i + 1) * n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.planes
    }
}

pub fn fuse(image: &GrayImage, constraint: &BinaryMask) -> Result<FusedInput> {
    ensure_same(image.shape(), constraint.shape())?;
    let (h, w) = image.shape();
    let mut planes = Vec::with_capacity(3 * h * w);
    planes.extend_from_slice(image.data());
    planes.extend(constraint.data().iter().map(|&v| v as f64));
    planes.extend(
        image
            .data()
            .iter()
            .zip(constraint.data())
            .map(|(&i, &c)| i * c as f64),
    );
    Ok(FusedInput {
        height: h,
        width: w,
        planes,
    })
}

/// Binary cross-entropy on the logit of a [`ScoreNet`].
struct ScoreTask<'a> {
    net: &'a ScoreNet,
}

fn bce_from_logit(z: f64, label: u8) -> f64 {
    // softplus(z) − b·z, written to stay finite for large |z|
    let softplus = if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    };
    softplus - label as f64 * z
}

impl Trainable for ScoreTask<'_> {
    type Sample = (FusedInput, u8);

    fn param_count(&self) -> usize {
        self.net.param_count()
    }

    fn loss_grad(&self, params: &Params, (x, b): &(FusedInput, u8)) -> Result<(f64, Vec<f64>)> {
        let cache = self.net.forward_raw(params, x.as_slice())?;
        let dlogit = sigmoid(cache.logit) - *b as f64;
        Ok((bce_from_logit(cache.logit, *b), self.net.backward_cached(params, &cache, dlogit)))
    }

    fn loss(&self, params: &Params, (x, b): &(FusedInput, u8)) -> Result<f64> {
        Ok(bce_from_logit(self.net.forward_raw(params, x.as_slice())?.logit, *b))
    }
}

/// A trained scorer mapping fused inputs to probabilities in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Classifier {
    net: ScoreNet,
    params: Params,
    pub history: Vec<crate::segnet::train::EpochRecord>,
}

impl Classifier {
    pub fn new(net: ScoreNet, params: Params) -> Self {
        Self {
            net,
            params,
            history: Vec::new(),
        }
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn score(&self, x: &FusedInput) -> Result<f64> {
        Ok(sigmoid(self.net.forward_raw(&self.params, x.as_slice())?.logit))
    }

    pub fn score_all(&self, xs: &[FusedInput]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.score(x)).collect()
    }
}

/// Trains the scorer with cross-entropy through the shared SGD loop.
pub fn train_discriminator(
    train_set: &[(FusedInput, u8)],
    valid_set: &[(FusedInput, u8)],
    cfg: &TrainConfig,
) -> Result<Classifier> {
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(Error::Empty("discriminator split"));
    }
    let positives = train_set.iter().filter(|(_, b)| *b == 1).count();
    if positives == 0 || positives == train_set.len() {
        return Err(Error::DegenerateLabels(format!(
            "training labels are all {}; raise the corruption fraction or lower tau",
            if positives == 0 { 0 } else { 1 }
        )));
    }
    let (h, w) = train_set[0].0.shape();
    let net = ScoreNet::new(NetworkSpec {
        height: h,
        width: w,
        in_channels: 3,
        ..NetworkSpec::default()
    })?;
    let task = ScoreTask { net: &net };
    let init = net.init_params(cfg.seed);
    let TrainOutcome { params, history, .. } = train(&task, init, train_set, valid_set, cfg)?;
    Ok(Classifier {
        net,
        params,
        history,
    })
}

/// Cutoff search parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CutoffPolicy {
    pub specificity_anchors: Vec<f64>,
    pub step: f64,
    /// Which anchor drives the final accept/reject decisions.
    pub chosen_anchor: f64,
}

impl Default for CutoffPolicy {
    fn default() -> Self {
        Self {
            specificity_anchors: vec![0.80, 0.85, 0.90, 0.95],
            step: 0.01,
            chosen_anchor: 0.80,
        }
    }
}

impl CutoffPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.specificity_anchors.is_empty()
            || self.specificity_anchors.iter().any(|a| !(*a > 0.0 && *a < 1.0))
        {
            return Err(Error::config(
                "cutoff.specificity_anchors",
                "need at least one anchor, each in (0, 1)",
            ));
        }
        if !(self.step > 0.0 && self.step <= 1.0) {
            return Err(Error::config("cutoff.step", "must lie in (0, 1]"));
        }
        if !(self.chosen_anchor > 0.0 && self.chosen_anchor < 1.0) {
            return Err(Error::config("cutoff.chosen_anchor", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffChoice {
    pub cutoff: f64,
    /// No grid point reached the target specificity.
    pub saturated: bool,
}

/// Smallest grid cutoff `i·step ≤ 1` at which at least `target_spec` of the
/// negatives score strictly below it.
pub fn cutoff_for_specificity(scores_neg: &[f64], target_spec: f64, step: f64) -> Result<CutoffChoice> {
    if scores_neg.is_empty() {
        return Err(Error::Empty("negative scores"));
    }
    if !(target_spec > 0.0 && target_spec < 1.0) {
        return Err(Error::config("target_spec", "must lie in (0, 1)"));
    }
    if !(step > 0.0) {
        return Err(Error::config("step", "must be > 0"));
    }
    let n = scores_neg.len() as f64;
    let steps = (1.0 / step).ceil() as usize;
    for i in 0..=steps {
        let cutoff = ((i as f64 * step).min(1.0) * 1e12).round() / 1e12;
        let below = scores_neg.iter().filter(|&&s| s < cutoff).count() as f64;
        if below / n >= target_spec {
            return Ok(CutoffChoice {
                cutoff,
                saturated: false,
            });
        }
    }
    Ok(CutoffChoice {
        cutoff: 1.0,
        saturated: true,
    })
}

/// Accept iff `score ≥ cutoff`.
pub fn apply_cutoff(scores: &[f64], cutoff: f64) -> Vec<bool> {
    scores.iter().map(|&s| s >= cutoff).collect()
}

/// One report row per specificity anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorRow {
    pub anchor: f64,
    pub cutoff: f64,
    pub saturated: bool,
    pub rates: ConfusionRates,
}

/// Picks a cutoff per anchor on `(scores, labels)` and tallies the resulting decisions.
pub fn anchor_rows(scores: &[f64], labels: &[u8], policy: &CutoffPolicy) -> Result<Vec<AnchorRow>> {
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 0)
        .map(|(&s, _)| s)
        .collect();
    policy
        .specificity_anchors
        .iter()
        .map(|&anchor| {
            let choice = cutoff_for_specificity(&neg, anchor, policy.step)?;
            let rates = confusion_rates(&apply_cutoff(scores, choice.cutoff), labels)?;
            Ok(AnchorRow {
                anchor,
                cutoff: choice.cutoff,
                saturated: choice.saturated,
                rates,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fuse_examples() {
        let img = GrayImage::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let ones = fuse(&img, &BinaryMask::all_ones(2, 2)).unwrap();
        assert_eq!(ones.plane(2), ones.plane(0));
        let zeros = fuse(&img, &BinaryMask::zeros(2, 2)).unwrap();
        assert!(zeros.plane(2).iter().all(|&v| v == 0.0));
        let half = GrayImage::filled(2, 2, 0.5).unwrap();
        let f = fuse(&half, &BinaryMask::new(2, 2, vec![1, 1, 0, 0]).unwrap()).unwrap();
        assert_eq!(f.plane(2), &[0.5, 0.5, 0.0, 0.0]);
        assert!(fuse(&half, &BinaryMask::zeros(1, 4)).is_err());
    }

    #[test]
    fn cutoff_examples() {
        let c = cutoff_for_specificity(&[0.1, 0.2, 0.3, 0.9], 0.75, 0.01).unwrap();
        assert_eq!(c.cutoff, 0.31);
        assert!(!c.saturated);
        let z = cutoff_for_specificity(&[0.0; 5], 0.95, 0.01).unwrap();
        assert_eq!(z.cutoff, 0.01);
        let tiny = cutoff_for_specificity(&[0.5, 0.6], 0.01, 0.01).unwrap();
        assert_eq!(tiny.cutoff, 0.51);
        let sat = cutoff_for_specificity(&[1.0, 1.0], 0.5, 0.01).unwrap();
        assert!(sat.saturated);
        assert_eq!(sat.cutoff, 1.0);
        assert!(cutoff_for_specificity(&[], 0.5, 0.01).is_err());
    }

    #[test]
    fn apply_cutoff_examples() {
        let s = [0.68, 0.70, 0.72];
        assert_eq!(apply_cutoff(&s, 0.0), vec![true; 3]);
        assert_eq!(apply_cutoff(&s, 1.01), vec![false; 3]);
        assert_eq!(apply_cutoff(&s, 0.70), vec![false, true, true]);
    }

    #[test]
    fn bce_is_stable() {
        assert!((bce_from_logit(0.0, 1) - 2f64.ln()).abs() < 1e-15);
        assert!(bce_from_logit(800.0, 1).abs() < 1e-12);
        assert!((bce_from_logit(800.0, 0) - 800.0).abs() < 1e-9);
        assert!(bce_from_logit(-800.0, 0).abs() < 1e-12);
    }

    #[test]
    fn single_class_training_is_rejected() {
        let img = GrayImage::filled(4, 4, 0.5).unwrap();
        let x = fuse(&img, &BinaryMask::all_ones(4, 4)).unwrap();
        let set = vec![(x.clone(), 1u8), (x, 1u8)];
        assert!(matches!(
            train_discriminator(&set, &set, &TrainConfig::default()),
            Err(Error::DegenerateLabels(_))
        ));
    }
}
