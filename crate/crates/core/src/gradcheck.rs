//! Central finite-difference checks of every analytic gradient.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::losses::{constrained_loss, dice_loss, penalty, LossConfig, LossGrad};
use crate::mask::{BinaryMask, GrayImage, ProbMap};
use crate::rng::{rng_for, stream};
use crate::segnet::{NetworkSpec, Params, SegNet};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor so vanishing gradients are compared absolutely.
pub const FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub probes: usize,
    pub max_rel_err: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub seed: u64,
    pub tolerance: f64,
    pub suites: Vec<SuiteResult>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for s in &self.suites {
            out.push_str(&format!(
                "{:<28} probes={:<4} max_rel_err={:.3e} {}\n",
                s.name,
                s.probes,
                s.max_rel_err,
                if s.passed { "PASS" } else { "FAIL" }
            ));
        }
        out
    }
}

fn suite(name: impl Into<String>, errs: &[f64]) -> SuiteResult {
    let max = errs.iter().cloned().fold(0.0, f64::max);
    SuiteResult {
        name: name.into(),
        probes: errs.len(),
        max_rel_err: max,
        passed: max < TOLERANCE && errs.iter().all(|e| e.is_finite()),
    }
}

fn random_prob(rng: &mut impl Rng, h: usize, w: usize) -> ProbMap {
    ProbMap::new(h, w, (0..h * w).map(|_| rng.random_range(0.05..0.95)).collect()).expect("in range")
}

fn random_mask(rng: &mut impl Rng, h: usize, w: usize, p: f64) -> BinaryMask {
    let mut m = BinaryMask::from_fn(h, w, |_, _| false);
    for r in 0..h {
        for c in 0..w {
            m.set(r, c, rng.random_bool(p));
        }
    }
    if m.is_blank() {
        m.set(0, 0, true);
    }
    m
}

/// Perturbs one pixel of `y` and compares the centred difference with `analytic`.
fn probe_pixel(
    y: &ProbMap,
    j: usize,
    analytic: f64,
    f: impl Fn(&ProbMap) -> Result<LossGrad>,
) -> Result<f64> {
    let (h, w) = y.shape();
    let mut plus = y.data().to_vec();
    let mut minus = y.data().to_vec();
    plus[j] += STEP;
    minus[j] -= STEP;
    let fp = f(&ProbMap::new(h, w, plus)?)?.value;
    let fm = f(&ProbMap::new(h, w, minus)?)?.value;
    Ok(relative_error(analytic, (fp - fm) / (2.0 * STEP)))
}

/// Pixel-level checks of the three losses.
pub fn check_losses(seed: u64, probes: usize) -> Result<Vec<SuiteResult>> {
    let (h, w) = (8, 8);
    let eps = LossConfig::default().epsilon;
    let mut rng = rng_for(seed, stream::GRADCHECK, 0);
    let mut dice_errs = Vec::new();
    let mut pen_errs = Vec::new();
    let lambdas = [0.0, 0.6, 1.0];
    let mut cons_errs = vec![Vec::new(); lambdas.len()];
    for _ in 0..probes {
        let y = random_prob(&mut rng, h, w);
        let s = random_mask(&mut rng, h, w, 0.3);
        let c = random_mask(&mut rng, h, w, 0.6);
        let j = rng.random_range(0..h * w);
        let d = dice_loss(&y, &s, eps)?;
        dice_errs.push(probe_pixel(&y, j, d.grad[j], |y| dice_loss(y, &s, eps))?);
        let p = penalty(&y, &c, eps)?;
        pen_errs.push(probe_pixel(&y, j, p.grad[j], |y| penalty(y, &c, eps))?);
        for (k, &lambda) in lambdas.iter().enumerate() {
            let cfg = LossConfig::default().with_lambda(lambda);
            let l = constrained_loss(&y, &s, &c, &cfg)?;
            cons_errs[k].push(probe_pixel(&y, j, l.grad[j], |y| constrained_loss(y, &s, &c, &cfg))?);
        }
    }
    let mut out = vec![suite("dice_loss", &dice_errs), suite("penalty", &pen_errs)];
    for (k, lambda) in lambdas.iter().enumerate() {
        out.push(suite(format!("constrained_loss(λ={lambda})"), &cons_errs[k]));
    }
    Ok(out)
}

/// Parameter-level checks of `constrained_loss ∘ SegNet` on a phantom-like input.
pub fn check_end_to_end(seed: u64, probes: usize, spec: NetworkSpec) -> Result<Vec<SuiteResult>> {
    let net = SegNet::new(spec)?;
    let (h, w) = (spec.height, spec.width);
    let mut rng = rng_for(seed, stream::GRADCHECK, 1);
    let image = GrayImage::new(h, w, (0..h * w).map(|_| rng.random_range(0.0..1.0)).collect())?;
    let target = BinaryMask::from_fn(h, w, |r, c| r > h / 4 && r < h / 2 && c > w / 5 && c < w / 3);
    let constraint = BinaryMask::from_fn(h, w, |r, c| r > h / 8 && r < 3 * h / 4 && c < w / 2);
    let mut params = net.init_params(seed);
    // random biases so every activation path carries gradient
    for v in params.0.iter_mut() {
        *v += rng.random_range(-0.05..0.05);
    }
    let mut out = Vec::new();
    for lambda in [0.0, 0.6, 1.0] {
        let cfg = LossConfig::default().with_lambda(lambda);
        let loss_at = |p: &Params| -> Result<f64> {
            let y = net.forward(p, &image)?;
            Ok(constrained_loss(&y, &target, &constraint, &cfg)?.value)
        };
        let y = net.forward(&params, &image)?;
        let lg = constrained_loss(&y, &target, &constraint, &cfg)?;
        let analytic = net.backward(&params, &image, &lg.grad)?;
        let mut errs = Vec::with_capacity(probes);
        for _ in 0..probes {
            let i = rng.random_range(0..params.len());
            let mut plus = params.clone();
            plus.0[i] += STEP;
            let mut minus = params.clone();
            minus.0[i] -= STEP;
            let fd = (loss_at(&plus)? - loss_at(&minus)?) / (2.0 * STEP);
            errs.push(relative_error(analytic[i], fd));
        }
        out.push(suite(format!("end_to_end(λ={lambda})"), &errs));
    }
    Ok(out)
}

/// Runs every suite with `probes` probes each.
pub fn run_all(seed: u64, probes: usize, spec: NetworkSpec) -> Result<GradCheckReport> {
    let mut suites = check_losses(seed, probes)?;
    suites.extend(check_end_to_end(seed, probes, spec)?);
    Ok(GradCheckReport {
        seed,
        tolerance: TOLERANCE,
        suites,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floors_small_gradients() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((relative_error(1e-12, 0.0) - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn loss_suites_pass() {
        let suites = check_losses(3, 50).unwrap();
        assert_eq!(suites.len(), 5);
        for s in suites {
            assert!(s.passed, "{s:?}");
        }
    }
}
