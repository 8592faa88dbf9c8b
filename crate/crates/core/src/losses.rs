//! Soft Dice loss, the out-of-constraint penalty, and their combination.
//!
//! Every function returns the loss value together with its gradient with
//! respect to each pixel of the probability map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{ensure_same, BinaryMask, ProbMap};

/// A loss value and `∂loss/∂y_j` for every pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// Penalty weight.
    pub lambda: f64,
    /// Denominator smoothing for both Dice and penalty.
    pub epsilon: f64,
    /// Candidate weights for validation grid search.
    pub lambda_grid: Vec<f64>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 0.6,
            epsilon: 1e-6,
            lambda_grid: vec![0.2, 0.4, 0.6, 0.8, 1.0],
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("loss.lambda", "must be a finite value >= 0"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config("loss.epsilon", "must be > 0"));
        }
        if self.lambda_grid.is_empty() {
            return Err(Error::config("loss.lambda_grid", "must not be empty"));
        }
        if self.lambda_grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(Error::config("loss.lambda_grid", "entries must be >= 0"));
        }
        Ok(())
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }
}

/// `1 − (2Σys + ε)/(Σy + Σs + ε)`.
///
/// `eps = 0` is accepted for exact evaluation as long as `Σy + Σs > 0`.
pub fn dice_loss(y: &ProbMap, s: &BinaryMask, eps: f64) -> Result<LossGrad> {
    ensure_same(y.shape(), s.shape())?;
    let (mut inter, mut sum_y, mut sum_s) = (0.0, 0.0, 0.0);
    for (&p, &m) in y.data().iter().zip(s.data()) {
        let m = m as f64;
        inter += p * m;
        sum_y += p;
        sum_s += m;
    }
    let num = 2.0 * inter + eps;
    let den = sum_y + sum_s + eps;
    let den2 = den * den;
    let grad = s
        .data()
        .iter()
        .map(|&m| -(2.0 * m as f64 * den - num) / den2)
        .collect();
    Ok(LossGrad {
        value: 1.0 - num / den,
        grad,
    })
}

/// Fraction of predicted mass falling outside the constraint: `1 − A/B` with
/// `A = Σ y_j c_j` and `B = Σ y_j + ε`.
pub fn penalty(y: &ProbMap, c: &BinaryMask, eps: f64) -> Result<LossGrad> {
    ensure_same(y.shape(), c.shape())?;
    let (mut a, mut sum_y) = (0.0, 0.0);
    for (&p, &m) in y.data().iter().zip(c.data()) {
        a += p * m as f64;
        sum_y += p;
    }
    let b = sum_y + eps;
    let b2 = b * b;
    let grad = c.data().iter().map(|&m| -(m as f64 * b - a) / b2).collect();
    Ok(LossGrad {
        value: 1.0 - a / b,
        grad,
    })
}

/// Dice loss plus `λ·penalty`. A zero weight or an all-ones constraint
/// skips the penalty entirely so the result equals [`dice_loss`] bit for bit.
pub fn constrained_loss(
    y: &ProbMap,
    s: &BinaryMask,
    c: &BinaryMask,
    cfg: &LossConfig,
) -> Result<LossGrad> {
    ensure_same(y.shape(), c.shape())?;
    let mut out = dice_loss(y, s, cfg.epsilon)?;
    if cfg.lambda == 0.0 || c.is_full() {
        return Ok(out);
    }
    let pen = penalty(y, c, cfg.epsilon)?;
    out.value += cfg.lambda * pen.value;
    for (g, p) in out.grad.iter_mut().zip(&pen.grad) {
        *g += cfg.lambda * p;
    }
    Ok(out)
}

/// Mean of per-sample constrained losses; each gradient is scaled by `1/n`.
/// Accumulation is left to right in batch order.
pub fn batch_loss(
    batch: &[(&ProbMap, &BinaryMask, &BinaryMask)],
    cfg: &LossConfig,
) -> Result<(f64, Vec<Vec<f64>>)> {
    if batch.is_empty() {
        return Err(Error::Empty("loss batch"));
    }
    let n = batch.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(batch.len());
    for (y, s, c) in batch {
        let mut lg = constrained_loss(y, s, c, cfg)?;
        total += lg.value;
        lg.grad.iter_mut().for_each(|g| *g /= n);
        grads.push(lg.grad);
    }
    Ok((total / n, grads))
}
