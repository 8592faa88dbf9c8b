//! Deterministic chest-phantom generator.
//!
//! Lung phantoms are two dark ellipses on a striped, noisy body background.
//! Lesion phantoms add a bright crescent hugging the lateral edge of one lung
//! plus bright distractor blobs outside the lung+ space. Every sample is a
//! pure function of the config seed and the sample index.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::constraint::{coverage_rate, lung_plus_space, MorphConfig};
use crate::error::{Error, Result};
use crate::mask::{BinaryMask, GrayImage, ProbMap};
use crate::metrics::squared_distance_transform;
use crate::morphology::{elliptical_element, erode};
use crate::rng::{rng_for, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub split: Split,
    pub image: GrayImage,
    /// Lung mask for lung datasets, lesion mask for lesion datasets.
    pub mask: BinaryMask,
    /// Ground-truth lung fields (kept in memory for diagnostics only).
    pub lung: BinaryMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub height: usize,
    pub width: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomConfig {
    pub height: usize,
    pub width: usize,
    pub n_lung: usize,
    pub n_lesion: usize,
    /// Lung center jitter as a fraction of the image size.
    pub center_jitter: f64,
    /// Horizontal semi-axis range, fraction of width.
    pub semi_axis_x: [f64; 2],
    /// Vertical semi-axis range, fraction of height.
    pub semi_axis_y: [f64; 2],
    /// Crescent thickness range in pixels.
    pub lesion_thickness: [f64; 2],
    /// Half-angle of the crescent arc in degrees.
    pub lesion_arc_deg: [f64; 2],
    pub background: f64,
    pub lung_intensity: f64,
    pub lesion_intensity: f64,
    pub rib_amplitude: f64,
    pub rib_period: f64,
    pub noise_sigma: f64,
    pub distractors: usize,
    /// Fraction of train/valid candidates whose constraints get corrupted.
    pub corruption: f64,
    /// Set from the run seed by the pipeline, never read from config files.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            n_lung: 100,
            n_lesion: 200,
            center_jitter: 0.03,
            semi_axis_x: [0.10, 0.13],
            semi_axis_y: [0.22, 0.26],
            lesion_thickness: [2.0, 4.0],
            lesion_arc_deg: [35.0, 60.0],
            background: 0.55,
            lung_intensity: 0.22,
            lesion_intensity: 0.85,
            rib_amplitude: 0.06,
            rib_period: 9.0,
            noise_sigma: 0.03,
            distractors: 2,
            corruption: 0.3,
            seed: 7,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height < 16 || self.width < 16 || self.height % 2 != 0 || self.width % 2 != 0 {
            return Err(Error::config("synth.height/width", "must be even and >= 16"));
        }
        if self.n_lung == 0 {
            return Err(Error::config("synth.n_lung", "empty dataset: must be >= 1"));
        }
        if self.n_lesion == 0 {
            return Err(Error::config("synth.n_lesion", "empty dataset: must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.corruption) {
            return Err(Error::config("synth.corruption", "must lie in [0, 1]"));
        }
        for (name, r) in [
            ("synth.semi_axis_x", self.semi_axis_x),
            ("synth.semi_axis_y", self.semi_axis_y),
            ("synth.lesion_thickness", self.lesion_thickness),
            ("synth.lesion_arc_deg", self.lesion_arc_deg),
        ] {
            if !(r[0] > 0.0 && r[0] <= r[1]) {
                return Err(Error::config(name, "range must satisfy 0 < lo <= hi"));
            }
        }
        for (name, v) in [
            ("synth.background", self.background),
            ("synth.lung_intensity", self.lung_intensity),
            ("synth.lesion_intensity", self.lesion_intensity),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(name, "must lie in [0, 1]"));
            }
        }
        if self.noise_sigma < 0.0 || self.rib_amplitude < 0.0 || self.rib_period <= 0.0 {
            return Err(Error::config("synth texture", "noise/rib parameters must be non-negative"));
        }
        Ok(())
    }
}

/// Split assignment by index: the first `train` fraction, then `valid`, then test.
pub fn assign_split(index: usize, n: usize, train: f64, valid: f64) -> Split {
    let n_train = (train * n as f64).round() as usize;
    let n_valid = (valid * n as f64).round() as usize;
    if index < n_train {
        Split::Train
    } else if index < n_train + n_valid {
        Split::Valid
    } else {
        Split::Test
    }
}

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
}

impl Ellipse {
    fn contains(&self, r: usize, c: usize) -> bool {
        let dy = (r as f64 + 0.5 - self.cy) / self.ry;
        let dx = (c as f64 + 0.5 - self.cx) / self.rx;
        dy * dy + dx * dx <= 1.0
    }
}

struct Anatomy {
    lungs: [Ellipse; 2],
    lung_mask: BinaryMask,
}

fn draw_anatomy(cfg: &PhantomConfig, rng: &mut impl Rng) -> Anatomy {
    let (h, w) = (cfg.height as f64, cfg.width as f64);
    let mut jitter = |scale: f64| rng.random_range(-cfg.center_jitter..=cfg.center_jitter) * scale;
    let cy = 0.52 * h + jitter(h);
    let centers = [(cy + jitter(h) * 0.5, 0.30 * w + jitter(w)), (cy + jitter(h) * 0.5, 0.70 * w + jitter(w))];
    let lungs = centers.map(|(cy, cx)| Ellipse {
        cy,
        cx,
        ry: rng.random_range(cfg.semi_axis_y[0]..=cfg.semi_axis_y[1]) * h,
        rx: rng.random_range(cfg.semi_axis_x[0]..=cfg.semi_axis_x[1]) * w,
    });
    let lung_mask = BinaryMask::from_fn(cfg.height, cfg.width, |r, c| {
        lungs[0].contains(r, c) || lungs[1].contains(r, c)
    });
    Anatomy { lungs, lung_mask }
}

/// Striped, noisy body with dark lungs, quantised to 8-bit levels.
fn render(
    cfg: &PhantomConfig,
    rng: &mut impl Rng,
    dark: &BinaryMask,
    bright: &BinaryMask,
) -> GrayImage {
    let noise = Normal::new(0.0, cfg.noise_sigma.max(1e-12)).expect("valid sigma");
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let mut data = Vec::with_capacity(cfg.height * cfg.width);
    for r in 0..cfg.height {
        let rib = cfg.rib_amplitude * (std::f64::consts::TAU * r as f64 / cfg.rib_period + phase).sin();
        for c in 0..cfg.width {
            let base = if bright.is_set(r, c) {
                cfg.lesion_intensity
            } else if dark.is_set(r, c) {
                cfg.lung_intensity + rib
            } else {
                cfg.background + rib
            };
            let v = if cfg.noise_sigma > 0.0 {
                base + noise.sample(rng)
            } else {
                base
            };
            data.push((v.clamp(0.0, 1.0) * 255.0).round() / 255.0);
        }
    }
    GrayImage::new(cfg.height, cfg.width, data).expect("clamped intensities")
}

/// The lung+ space of a ground-truth lung mask under the default morphology.
pub fn true_lung_plus(lung: &BinaryMask) -> Result<BinaryMask> {
    let (h, w) = lung.shape();
    let prob = ProbMap::new(h, w, lung.to_f64())?;
    lung_plus_space(&prob, &MorphConfig::default())
}

fn draw_lesion(
    cfg: &PhantomConfig,
    rng: &mut impl Rng,
    anatomy: &Anatomy,
    lung_plus: &BinaryMask,
) -> BinaryMask {
    let side = rng.random_range(0..2usize);
    let lung = anatomy.lungs[side];
    let single = BinaryMask::from_fn(cfg.height, cfg.width, |r, c| lung.contains(r, c));
    let dist2 = squared_distance_transform(&single).expect("lung is non-empty");
    let thickness = rng.random_range(cfg.lesion_thickness[0]..=cfg.lesion_thickness[1]);
    let arc = rng.random_range(cfg.lesion_arc_deg[0]..=cfg.lesion_arc_deg[1]).to_radians();
    let tilt = rng.random_range(-0.3..=0.3);
    // lateral direction: left lung points to −x, right lung to +x
    let outward = if side == 0 { std::f64::consts::PI } else { 0.0 };
    let (h, w) = (cfg.height, cfg.width);
    let lesion = BinaryMask::from_fn(h, w, |r, c| {
        if anatomy.lung_mask.is_set(r, c) || !lung_plus.is_set(r, c) {
            return false;
        }
        let d = (dist2[r * w + c] as f64).sqrt();
        if d > thickness {
            return false;
        }
        let dy = (r as f64 + 0.5 - lung.cy) / lung.ry;
        let dx = (c as f64 + 0.5 - lung.cx) / lung.rx;
        let mut ang = dy.atan2(dx) - outward - tilt;
        while ang > std::f64::consts::PI {
            ang -= std::f64::consts::TAU;
        }
        while ang < -std::f64::consts::PI {
            ang += std::f64::consts::TAU;
        }
        ang.abs() <= arc
    });
    if lesion.is_blank() {
        // degenerate arc: fall back to the pixels immediately lateral to the lung
        let c = if side == 0 {
            (lung.cx - lung.rx - 1.0).max(0.0) as usize
        } else {
            ((lung.cx + lung.rx) as usize).min(w - 1)
        };
        return BinaryMask::from_fn(h, w, |rr, cc| cc == c && (rr as f64 - lung.cy).abs() < 2.0);
    }
    lesion
}

/// Lesion look-alikes outside the lung+ space: a small dark pocket with a
/// bright rim on one side. Returns `(dark, bright)` masks.
fn draw_distractors(
    cfg: &PhantomConfig,
    rng: &mut impl Rng,
    lung_plus: &BinaryMask,
) -> (BinaryMask, BinaryMask) {
    let (h, w) = (cfg.height, cfg.width);
    let mut dark = BinaryMask::zeros(h, w);
    let mut bright = BinaryMask::zeros(h, w);
    // keep a 2-pixel margin from the lung+ space
    let margin = crate::morphology::dilate(lung_plus, &elliptical_element(5).expect("k > 0"));
    let free: Vec<(usize, usize)> = (0..h)
        .flat_map(|r| (0..w).map(move |c| (r, c)))
        .filter(|&(r, c)| !margin.is_set(r, c))
        .collect();
    if free.is_empty() {
        return (dark, bright);
    }
    for _ in 0..cfg.distractors {
        let &(r0, c0) = free.choose(rng).expect("non-empty");
        let pocket = Ellipse {
            cy: r0 as f64 + 0.5,
            cx: c0 as f64 + 0.5,
            ry: rng.random_range(2.0..=3.5),
            rx: rng.random_range(2.5..=5.0),
        };
        let rim = rng.random_range(1.5..=3.0);
        let facing = rng.random_range(0.0..std::f64::consts::TAU);
        for r in 0..h {
            for c in 0..w {
                if margin.is_set(r, c) {
                    continue;
                }
                let dy = (r as f64 + 0.5 - pocket.cy) / pocket.ry;
                let dx = (c as f64 + 0.5 - pocket.cx) / pocket.rx;
                let rho = (dy * dy + dx * dx).sqrt();
                if rho <= 1.0 {
                    dark.set(r, c, true);
                    continue;
                }
                // approximate distance outside the pocket along the ray
                let dist = (rho - 1.0) * pocket.ry.min(pocket.rx);
                let mut ang = dy.atan2(dx) - facing;
                while ang > std::f64::consts::PI {
                    ang -= std::f64::consts::TAU;
                }
                while ang < -std::f64::consts::PI {
                    ang += std::f64::consts::TAU;
                }
                if dist <= rim && ang.abs() <= 1.0 {
                    bright.set(r, c, true);
                }
            }
        }
    }
    let bright = bright.intersect(&dark.complement()).expect("same shape");
    (dark, bright)
}

/// Lung segmentation phantoms, split 70/20/10.
pub fn gen_lung_dataset(cfg: &PhantomConfig) -> Result<Dataset> {
    cfg.validate()?;
    let samples = (0..cfg.n_lung)
        .map(|i| {
            let mut rng = rng_for(cfg.seed, stream::LUNG_DATA, i as u64);
            let anatomy = draw_anatomy(cfg, &mut rng);
            let lung_plus = true_lung_plus(&anatomy.lung_mask)?;
            let (pockets, rims) = draw_distractors(cfg, &mut rng, &lung_plus);
            let dark = anatomy.lung_mask.union(&pockets)?;
            let image = render(cfg, &mut rng, &dark, &rims);
            Ok(Sample {
                id: format!("lung{i:04}"),
                split: assign_split(i, cfg.n_lung, 0.7, 0.2),
                image,
                mask: anatomy.lung_mask.clone(),
                lung: anatomy.lung_mask,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Dataset {
        height: cfg.height,
        width: cfg.width,
        samples,
    })
}

/// Lesion phantoms (every sample lesion-positive), split 70/10/20.
pub fn gen_lesion_dataset(cfg: &PhantomConfig) -> Result<Dataset> {
    cfg.validate()?;
    let samples = (0..cfg.n_lesion)
        .map(|i| {
            let mut rng = rng_for(cfg.seed, stream::LESION_DATA, i as u64);
            let anatomy = draw_anatomy(cfg, &mut rng);
            let lung_plus = true_lung_plus(&anatomy.lung_mask)?;
            let lesion = draw_lesion(cfg, &mut rng, &anatomy, &lung_plus);
            let (pockets, rims) = draw_distractors(cfg, &mut rng, &lung_plus);
            let bright = lesion.union(&rims)?;
            let dark = anatomy.lung_mask.union(&pockets)?;
            let image = render(cfg, &mut rng, &dark, &bright);
            Ok(Sample {
                id: format!("case{i:04}"),
                split: assign_split(i, cfg.n_lesion, 0.7, 0.1),
                image,
                mask: lesion,
                lung: anatomy.lung_mask,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Dataset {
        height: cfg.height,
        width: cfg.width,
        samples,
    })
}

/// Corrupts exactly `⌊fraction·n⌋` candidates (seeded choice) so that each
/// covers less than `tau` of its lesion: shift away from the lesion side,
/// erode if needed, and as a last resort carve the lesion out. Returns the
/// new candidates and which indices were corrupted.
pub fn corrupt_constraints(
    candidates: &[BinaryMask],
    lesions: &[&BinaryMask],
    fraction: f64,
    tau: f64,
    seed: u64,
) -> Result<(Vec<BinaryMask>, Vec<bool>)> {
    if candidates.len() != lesions.len() {
        return Err(Error::LengthMismatch {
            what: "candidates vs lesions",
            left: candidates.len(),
            right: lesions.len(),
        });
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::config("corruption", "must lie in [0, 1]"));
    }
    let n = candidates.len();
    let n_bad = (fraction * n as f64).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, stream::CORRUPTION, u64::MAX));
    let mut flags = vec![false; n];
    for &i in &order[..n_bad] {
        flags[i] = true;
    }
    let se = elliptical_element(3)?;
    let out = candidates
        .iter()
        .zip(lesions)
        .enumerate()
        .map(|(i, (cand, lesion))| {
            if !flags[i] {
                return Ok(cand.clone());
            }
            let mut rng = rng_for(seed, stream::CORRUPTION, i as u64);
            let (_, w) = cand.shape();
            let lesion_col = lesion_centroid_col(lesion);
            let shift = rng.random_range(8..=14i32) as isize;
            let dx = if lesion_col < w as f64 / 2.0 { shift } else { -shift };
            let dy = rng.random_range(-4..=4i32) as isize;
            let mut c = cand.translate(dy, dx);
            for _ in 0..10 {
                if coverage_rate(&c, lesion)? < tau {
                    break;
                }
                c = erode(&c, &se);
            }
            if coverage_rate(&c, lesion)? >= tau {
                c = c.intersect(&lesion.complement())?;
            }
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((out, flags))
}

fn lesion_centroid_col(m: &BinaryMask) -> f64 {
    let (_, w) = m.shape();
    let (mut sum, mut n) = (0.0, 0usize);
    for (i, &v) in m.data().iter().enumerate() {
        if v == 1 {
            sum += (i % w) as f64;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::make_label;
    use crate::morphology::component_count;

    fn small() -> PhantomConfig {
        PhantomConfig {
            n_lung: 12,
            n_lesion: 20,
            ..PhantomConfig::default()
        }
    }

    #[test]
    fn lung_dataset_contract() {
        let cfg = small();
        let ds = gen_lung_dataset(&cfg).unwrap();
        assert_eq!(ds, gen_lung_dataset(&cfg).unwrap());
        for s in &ds.samples {
            assert_eq!(component_count(&s.mask), 2, "{}", s.id);
            let inside = s.image.masked_mean(&s.mask).unwrap().unwrap();
            let outside = s.image.masked_mean(&s.mask.complement()).unwrap().unwrap();
            assert!(inside < outside, "{}", s.id);
        }
        assert_eq!(ds.count(Split::Train), 8);
        assert_eq!(ds.count(Split::Valid), 2);
        assert_eq!(ds.count(Split::Test), 2);
    }

    #[test]
    fn lesion_dataset_contract() {
        let cfg = small();
        let ds = gen_lesion_dataset(&cfg).unwrap();
        assert_eq!(ds, gen_lesion_dataset(&cfg).unwrap());
        for s in &ds.samples {
            assert!(!s.mask.is_blank());
            let lp = true_lung_plus(&s.lung).unwrap();
            assert_eq!(coverage_rate(&lp, &s.mask).unwrap(), 1.0);
            let lesion_mean = s.image.masked_mean(&s.mask).unwrap().unwrap();
            let lung_mean = s.image.masked_mean(&s.lung).unwrap().unwrap();
            assert!(lesion_mean > lung_mean);
        }
        assert_eq!(ds.count(Split::Train), 14);
        assert_eq!(ds.count(Split::Valid), 2);
        assert_eq!(ds.count(Split::Test), 4);
        let other = gen_lesion_dataset(&PhantomConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(ds, other);
    }

    #[test]
    fn images_are_quantised() {
        let ds = gen_lung_dataset(&small()).unwrap();
        for &v in ds.samples[0].image.data() {
            assert_eq!(((v * 255.0).round() / 255.0), v);
        }
    }

    fn candidates(ds: &Dataset) -> (Vec<BinaryMask>, Vec<&BinaryMask>) {
        let c = ds.samples.iter().map(|s| true_lung_plus(&s.lung).unwrap()).collect();
        let l = ds.samples.iter().map(|s| &s.mask).collect();
        (c, l)
    }

    #[test]
    fn corruption_contract() {
        let ds = gen_lesion_dataset(&small()).unwrap();
        let (cands, lesions) = candidates(&ds);
        let (same, flags) = corrupt_constraints(&cands, &lesions, 0.0, 0.99, 1).unwrap();
        assert_eq!(same, cands);
        assert!(flags.iter().all(|f| !f));
        let (all, _) = corrupt_constraints(&cands, &lesions, 1.0, 0.99, 1).unwrap();
        for (c, l) in all.iter().zip(&lesions) {
            assert!(coverage_rate(c, l).unwrap() < 0.99);
        }
        let (part, flags) = corrupt_constraints(&cands, &lesions, 0.3, 0.99, 1).unwrap();
        let zeros = part
            .iter()
            .zip(&lesions)
            .filter(|(c, l)| make_label(coverage_rate(c, l).unwrap(), 0.99) == 0)
            .count();
        assert_eq!(zeros, 6);
        assert_eq!(flags.iter().filter(|&&f| f).count(), 6);
    }

    #[test]
    fn distractors_stay_outside_lung_plus() {
        let cfg = small();
        let mut rng = rng_for(3, stream::LESION_DATA, 0);
        let anatomy = draw_anatomy(&cfg, &mut rng);
        let lp = true_lung_plus(&anatomy.lung_mask).unwrap();
        let (dark, bright) = draw_distractors(&cfg, &mut rng, &lp);
        assert!(!dark.is_blank() && !bright.is_blank());
        assert!(dark.intersect(&lp).unwrap().is_blank());
        assert!(bright.intersect(&lp).unwrap().is_blank());
        assert!(bright.intersect(&dark).unwrap().is_blank());
        let none = PhantomConfig { distractors: 0, ..cfg };
        let (d0, b0) = draw_distractors(&none, &mut rng, &lp);
        assert!(d0.is_blank() && b0.is_blank());
    }

    #[test]
    fn rejects_empty_config() {
        let cfg = PhantomConfig {
            n_lesion: 0,
            ..small()
        };
        let err = gen_lesion_dataset(&cfg).unwrap_err();
        assert!(err.to_string().contains("synth.n_lesion"));
    }
}
