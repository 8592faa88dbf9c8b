//! Segmentation and classification metrics with bootstrap standard errors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{ensure_same, intersection_area, BinaryMask};

/// Intersection over union. Two empty masks score 1, exactly one empty scores 0.
pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let inter = intersection_area(pred, gt)?;
    let union = pred.area() + gt.area() - inter;
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// Dice similarity coefficient with the same empty-mask conventions as [`iou`].
pub fn dsc(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let inter = intersection_area(pred, gt)?;
    let total = pred.area() + gt.area();
    Ok(if total == 0 {
        1.0
    } else {
        2.0 * inter as f64 / total as f64
    })
}

/// Squared euclidean distance from every pixel to the nearest set pixel of
/// `m`, computed exactly in integers. `None` when `m` is blank.
pub fn squared_distance_transform(m: &BinaryMask) -> Option<Vec<u64>> {
    if m.is_blank() {
        return None;
    }
    let (h, w) = m.shape();
    const FAR: u64 = u64::MAX / 4;
    // column pass: vertical distance to the nearest set pixel
    let mut vert = vec![FAR; h * w];
    for c in 0..w {
        let mut last: Option<usize> = None;
        for r in 0..h {
            if m.is_set(r, c) {
                last = Some(r);
            }
            if let Some(l) = last {
                vert[r * w + c] = (r - l) as u64;
            }
        }
        last = None;
        for r in (0..h).rev() {
            if m.is_set(r, c) {
                last = Some(r);
            }
            if let Some(l) = last {
                let d = (l - r) as u64;
                if d < vert[r * w + c] {
                    vert[r * w + c] = d;
                }
            }
        }
    }
    // row pass: exact lower envelope by direct minimisation
    let mut out = vec![0u64; h * w];
    for r in 0..h {
        let row = &vert[r * w..(r + 1) * w];
        for c in 0..w {
            let mut best = u64::MAX;
            for (c2, &g) in row.iter().enumerate() {
                if g == FAR {
                    continue;
                }
                let dc = c.abs_diff(c2) as u64;
                let d = dc * dc + g * g;
                if d < best {
                    best = d;
                }
            }
            out[r * w + c] = best;
        }
    }
    Some(out)
}

/// Directed Hausdorff distance `max_{a∈A} min_{b∈B} |a − b|` over pixel centers.
fn directed(a: &BinaryMask, dist_to_b: &[u64]) -> f64 {
    let worst = a
        .data()
        .iter()
        .zip(dist_to_b)
        .filter(|(&m, _)| m == 1)
        .map(|(_, &d)| d)
        .max()
        .unwrap_or(0);
    (worst as f64).sqrt()
}

/// Symmetric Hausdorff distance in pixels. Both empty gives 0; exactly one
/// empty gives the image diagonal.
pub fn hausdorff(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    ensure_same(pred.shape(), gt.shape())?;
    let (h, w) = pred.shape();
    match (squared_distance_transform(pred), squared_distance_transform(gt)) {
        (None, None) => Ok(0.0),
        (Some(_), None) | (None, Some(_)) => Ok(((h * h + w * w) as f64).sqrt()),
        (Some(dp), Some(dg)) => Ok(directed(pred, &dg).max(directed(gt, &dp))),
    }
}

/// Area under the ROC curve via the Mann–Whitney statistic with midranks for ties.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "scores vs labels",
            left: scores.len(),
            right: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::UndefinedMetric("auroc with NaN score"));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("auroc needs both classes"));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let midrank = (i + j + 2) as f64 / 2.0;
        for &k in &idx[i..=j] {
            if labels[k] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let np = n_pos as f64;
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Confusion-matrix ratios; a ratio with a zero denominator is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionRates {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub specificity: Option<f64>,
    pub sensitivity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
}

pub fn confusion_rates(decisions: &[bool], labels: &[u8]) -> Result<ConfusionRates> {
    if decisions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "decisions vs labels",
            left: decisions.len(),
            right: labels.len(),
        });
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&d, &l) in decisions.iter().zip(labels) {
        match (d, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok(ConfusionRates {
        tp,
        fp,
        tn,
        fn_,
        specificity: ratio(tn, tn + fp),
        sensitivity: ratio(tp, tp + fn_),
        ppv: ratio(tp, tp + fp),
        npv: ratio(tn, tn + fn_),
    })
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Standard deviation of `b` bootstrap resample means (n draws with
/// replacement each), from a ChaCha8 stream seeded with `seed`.
pub fn bootstrap_se(values: &[f64], b: usize, seed: u64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("bootstrap values"));
    }
    if b == 0 {
        return Err(Error::Empty("bootstrap resample count"));
    }
    let n = values.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<f64> = (0..b)
        .map(|_| {
            let mut acc = 0.0;
            for _ in 0..n {
                acc += values[rng.random_range(0..n)];
            }
            acc / n as f64
        })
        .collect();
    if b == 1 {
        return Ok(0.0);
    }
    let m = mean(&means);
    let var = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (b - 1) as f64;
    Ok(var.sqrt())
}

/// Bootstrap SE of an arbitrary statistic over `n` items. `stat` receives
/// the resampled indices and may decline (e.g. a single-class resample);
/// declined resamples are skipped. `None` if fewer than two were usable.
pub fn bootstrap_statistic_se(
    n: usize,
    b: usize,
    seed: u64,
    mut stat: impl FnMut(&[usize]) -> Option<f64>,
) -> Option<f64> {
    if n == 0 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = vec![0usize; n];
    let mut values = Vec::with_capacity(b);
    for _ in 0..b {
        for slot in idx.iter_mut() {
            *slot = rng.random_range(0..n);
        }
        if let Some(v) = stat(&idx) {
            values.push(v);
        }
    }
    if values.len() < 2 {
        return None;
    }
    let m = mean(&values);
    let var = values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (values.len() - 1) as f64;
    Some(var.sqrt())
}

/// Per-sample segmentation scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub id: String,
    pub iou: f64,
    pub dsc: f64,
    pub hd: f64,
}

impl SampleMetrics {
    pub fn evaluate(id: impl Into<String>, pred: &BinaryMask, gt: &BinaryMask) -> Result<Self> {
        Ok(Self {
            id: id.into(),
            iou: iou(pred, gt)?,
            dsc: dsc(pred, gt)?,
            hd: hausdorff(pred, gt)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn of(values: &[f64], b: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            mean: mean(values),
            se: bootstrap_se(values, b, seed)?,
        })
    }
}

/// Mean ± bootstrap SE of IoU, DSC and HD over an evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub config_fingerprint: String,
    pub n: usize,
    pub iou: MeanSe,
    pub dsc: MeanSe,
    pub hd: MeanSe,
    pub samples: Vec<SampleMetrics>,
}

impl MetricReport {
    pub fn from_samples(
        samples: Vec<SampleMetrics>,
        bootstrap: usize,
        seed: u64,
        config_fingerprint: impl Into<String>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("metric samples"));
        }
        let col = |f: fn(&SampleMetrics) -> f64| samples.iter().map(f).collect::<Vec<_>>();
        Ok(Self {
            config_fingerprint: config_fingerprint.into(),
            n: samples.len(),
            iou: MeanSe::of(&col(|s| s.iou), bootstrap, seed)?,
            dsc: MeanSe::of(&col(|s| s.dsc), bootstrap, seed.wrapping_add(1))?,
            hd: MeanSe::of(&col(|s| s.hd), bootstrap, seed.wrapping_add(2))?,
            samples,
        })
    }

    /// Flat `key = value` rendering with a fixed key order.
    pub fn to_kv_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("config_fingerprint = {}\n", self.config_fingerprint));
        out.push_str(&format!("n = {}\n", self.n));
        for (name, m) in [("iou", self.iou), ("dsc", self.dsc), ("hd", self.hd)] {
            out.push_str(&format!("{name}.mean = {:.6}\n", m.mean));
            out.push_str(&format!("{name}.se = {:.6}\n", m.se));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pixels(h: usize, w: usize, pts: &[(usize, usize)]) -> BinaryMask {
        BinaryMask::from_fn(h, w, |r, c| pts.contains(&(r, c)))
    }

    #[test]
    fn overlap_examples() {
        let a = pixels(3, 3, &[(0, 0), (0, 1)]);
        let b = pixels(3, 3, &[(0, 1), (0, 2)]);
        let far = pixels(3, 3, &[(2, 2)]);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &far).unwrap(), 0.0);
        assert!((iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(dsc(&a, &a).unwrap(), 1.0);
        assert_eq!(dsc(&a, &far).unwrap(), 0.0);
        assert_eq!(dsc(&a, &b).unwrap(), 0.5);
        let empty = BinaryMask::zeros(3, 3);
        assert_eq!(iou(&empty, &empty).unwrap(), 1.0);
        assert_eq!(iou(&empty, &a).unwrap(), 0.0);
        assert_eq!(dsc(&a, &empty).unwrap(), 0.0);
        assert!(iou(&a, &BinaryMask::zeros(2, 2)).is_err());
    }

    #[test]
    fn hausdorff_examples() {
        let a = pixels(5, 5, &[(0, 0)]);
        assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
        assert_eq!(hausdorff(&a, &pixels(5, 5, &[(0, 3)])).unwrap(), 3.0);
        assert_eq!(hausdorff(&a, &pixels(5, 5, &[(0, 0), (4, 3)])).unwrap(), 5.0);
        let empty = BinaryMask::zeros(3, 4);
        assert_eq!(hausdorff(&empty, &empty).unwrap(), 0.0);
        assert_eq!(hausdorff(&pixels(3, 4, &[(1, 1)]), &empty).unwrap(), 5.0);
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.4; 4], &[1, 0, 1, 0]).unwrap(), 0.5);
        assert_eq!(auroc(&[0.9, 0.8, 0.8, 0.1], &[1, 1, 0, 0]).unwrap(), 0.875);
        assert!(matches!(
            auroc(&[0.1, 0.2], &[1, 1]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn confusion_examples() {
        let labels = [1, 0, 1, 0, 0];
        let same: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
        let r = confusion_rates(&same, &labels).unwrap();
        assert_eq!(
            (r.specificity, r.sensitivity, r.ppv, r.npv),
            (Some(1.0), Some(1.0), Some(1.0), Some(1.0))
        );
        let flipped: Vec<bool> = same.iter().map(|d| !d).collect();
        let r = confusion_rates(&flipped, &labels).unwrap();
        assert_eq!((r.specificity, r.sensitivity), (Some(0.0), Some(0.0)));
        // TP=2 FP=1 TN=3 FN=2
        let decisions = [true, true, true, false, false, false, false, false];
        let labels = [1, 1, 0, 0, 0, 0, 1, 1];
        let r = confusion_rates(&decisions, &labels).unwrap();
        assert_eq!((r.tp, r.fp, r.tn, r.fn_), (2, 1, 3, 2));
        assert_eq!(r.sensitivity, Some(0.5));
        assert_eq!(r.specificity, Some(0.75));
        assert!((r.ppv.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.npv, Some(0.6));
        let none = confusion_rates(&[true, true], &[1, 1]).unwrap();
        assert_eq!(none.specificity, None);
        assert!(confusion_rates(&[true], &[1, 0]).is_err());
    }

    #[test]
    fn bootstrap_examples() {
        assert!(bootstrap_se(&[0.3; 7], 200, 1).unwrap() < 1e-12);
        let v = [0.0, 1.0, 0.5, 0.25];
        assert_eq!(bootstrap_se(&v, 500, 9).unwrap(), bootstrap_se(&v, 500, 9).unwrap());
        assert_ne!(bootstrap_se(&v, 500, 9).unwrap(), bootstrap_se(&v, 500, 10).unwrap());
        assert!(bootstrap_se(&[], 10, 0).is_err());
    }

    #[test]
    fn report_text_has_fixed_keys() {
        let a = pixels(3, 3, &[(0, 0)]);
        let s = SampleMetrics::evaluate("s0", &a, &a).unwrap();
        let rep = MetricReport::from_samples(vec![s.clone(), s], 50, 3, "abc").unwrap();
        assert_eq!(rep.n, 2);
        let text = rep.to_kv_text();
        assert!(text.starts_with("config_fingerprint = abc\nn = 2\niou.mean = 1.000000\n"));
    }
}
