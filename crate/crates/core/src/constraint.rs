//! Turning lung predictions into per-sample lung+ space constraints, and
//! labelling those constraints by how much of the lesion they cover.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{intersection_area, threshold, BinaryMask, ProbMap};
use crate::morphology::{close, dilate, elliptical_element, top_k_components};

/// Post-processing applied to a raw lung probability map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MorphConfig {
    pub bin_t: f64,
    pub k_components: usize,
    pub close_k: usize,
    pub dilate_k: usize,
}

impl Default for MorphConfig {
    fn default() -> Self {
        Self {
            bin_t: 0.5,
            k_components: 2,
            close_k: 19,
            dilate_k: 15,
        }
    }
}

impl MorphConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.bin_t) {
            return Err(Error::config("morph.bin_t", "must lie in [0, 1]"));
        }
        if self.k_components == 0 {
            return Err(Error::config("morph.k_components", "must be >= 1"));
        }
        if self.close_k == 0 {
            return Err(Error::config("morph.close_k", "must be >= 1"));
        }
        if self.dilate_k == 0 {
            return Err(Error::config("morph.dilate_k", "must be >= 1"));
        }
        Ok(())
    }
}

/// `|C ∩ S| / |S|`.
pub fn coverage_rate(c: &BinaryMask, s: &BinaryMask) -> Result<f64> {
    let inter = intersection_area(c, s)?;
    let area = s.area();
    if area == 0 {
        return Err(Error::EmptyAnnotation);
    }
    Ok(inter as f64 / area as f64)
}

/// 1 iff `coverage > tau`.
pub fn make_label(coverage: f64, tau: f64) -> u8 {
    (coverage > tau) as u8
}

/// Intermediate masks of [`lung_plus_space`], in pipeline order.
#[derive(Debug, Clone)]
pub struct LungPlusStages {
    pub thresholded: BinaryMask,
    pub components: BinaryMask,
    pub closed: BinaryMask,
    pub output: BinaryMask,
}

/// threshold → top-k components → closing → dilation.
pub fn lung_plus_space_stages(raw_lung: &ProbMap, cfg: &MorphConfig) -> Result<LungPlusStages> {
    cfg.validate()?;
    let close_se = elliptical_element(cfg.close_k)?;
    let dilate_se = elliptical_element(cfg.dilate_k)?;
    let thresholded = threshold(raw_lung, cfg.bin_t);
    let components = top_k_components(&thresholded, cfg.k_components);
    let closed = close(&components, &close_se);
    let output = dilate(&closed, &dilate_se);
    Ok(LungPlusStages {
        thresholded,
        components,
        closed,
        output,
    })
}

pub fn lung_plus_space(raw_lung: &ProbMap, cfg: &MorphConfig) -> Result<BinaryMask> {
    Ok(lung_plus_space_stages(raw_lung, cfg)?.output)
}

/// One sample's constraint through labelling and filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRecord {
    pub sample_id: String,
    pub candidate: BinaryMask,
    /// Coverage of the lesion by the candidate; only known on train/valid.
    pub coverage: Option<f64>,
    pub label: Option<u8>,
    pub accepted: bool,
    pub final_constraint: BinaryMask,
}

impl ConstraintRecord {
    /// A record that has not been through the discriminator yet. Pass the
    /// lesion only for samples whose annotations may be used for labelling.
    pub fn new(
        sample_id: impl Into<String>,
        candidate: BinaryMask,
        lesion: Option<&BinaryMask>,
        tau: f64,
    ) -> Result<Self> {
        let coverage = lesion.map(|s| coverage_rate(&candidate, s)).transpose()?;
        let (h, w) = candidate.shape();
        Ok(Self {
            sample_id: sample_id.into(),
            coverage,
            label: coverage.map(|c| make_label(c, tau)),
            accepted: false,
            final_constraint: BinaryMask::all_ones(h, w),
            candidate,
        })
    }
}

/// Applies accept/reject decisions: accepted records keep their candidate,
/// everything else (including blank candidates) falls back to all-ones.
pub fn finalize_constraints(
    records: Vec<ConstraintRecord>,
    decisions: &[bool],
) -> Result<Vec<ConstraintRecord>> {
    if records.len() != decisions.len() {
        return Err(Error::LengthMismatch {
            what: "constraint records vs decisions",
            left: records.len(),
            right: decisions.len(),
        });
    }
    Ok(records
        .into_iter()
        .zip(decisions)
        .map(|(mut rec, &accept)| {
            rec.accepted = accept && !rec.candidate.is_blank();
            let (h, w) = rec.candidate.shape();
            rec.final_constraint = if rec.accepted {
                rec.candidate.clone()
            } else {
                BinaryMask::all_ones(h, w)
            };
            rec
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphology::component_count;

    fn rows(r0: usize, r1: usize) -> BinaryMask {
        BinaryMask::from_fn(3, 3, |r, _| r >= r0 && r <= r1)
    }

    #[test]
    fn coverage_examples() {
        let s = rows(1, 2);
        assert_eq!(coverage_rate(&BinaryMask::all_ones(3, 3), &s).unwrap(), 1.0);
        assert_eq!(coverage_rate(&rows(0, 0), &s).unwrap(), 0.0);
        assert_eq!(coverage_rate(&rows(0, 1), &s).unwrap(), 0.5);
        assert!(matches!(
            coverage_rate(&s, &BinaryMask::zeros(3, 3)),
            Err(Error::EmptyAnnotation)
        ));
    }

    #[test]
    fn label_is_strict() {
        assert_eq!(make_label(1.0, 0.99), 1);
        assert_eq!(make_label(0.99, 0.99), 0);
        assert_eq!(make_label(0.995, 0.99), 1);
    }

    fn prob_from(mask: &BinaryMask) -> ProbMap {
        let (h, w) = mask.shape();
        ProbMap::new(h, w, mask.data().iter().map(|&v| 0.1 + 0.8 * v as f64).collect()).unwrap()
    }

    #[test]
    fn lung_plus_space_removes_specks() {
        let blobs = BinaryMask::from_fn(40, 40, |r, c| {
            let in_a = (10..30).contains(&r) && (5..14).contains(&c);
            let in_b = (10..30).contains(&r) && (24..33).contains(&c);
            let speck = r == 2 && c == 37;
            (in_a || in_b || speck) && !(r == 20 && c == 9)
        });
        let cfg = MorphConfig {
            close_k: 3,
            dilate_k: 3,
            ..MorphConfig::default()
        };
        let st = lung_plus_space_stages(&prob_from(&blobs), &cfg).unwrap();
        assert_eq!(component_count(&st.components), 2);
        assert!(!st.output.is_set(2, 37));
        assert!(st.closed.is_set(20, 9), "hole is closed");
        assert!(st.closed.is_subset_of(&st.output));
        assert!(st.output.is_set(9, 5), "dilated by one pixel");
    }

    #[test]
    fn lung_plus_space_degenerate_and_identity() {
        let low = ProbMap::filled(8, 8, 0.2).unwrap();
        assert!(lung_plus_space(&low, &MorphConfig::default()).unwrap().is_blank());
        let m = BinaryMask::from_fn(8, 8, |r, c| (r < 2 && c < 3) || (r > 5 && c > 4));
        let ident = MorphConfig {
            close_k: 1,
            dilate_k: 1,
            k_components: 3,
            ..MorphConfig::default()
        };
        assert_eq!(lung_plus_space(&prob_from(&m), &ident).unwrap(), m);
    }

    #[test]
    fn finalize_examples() {
        let s = rows(1, 2);
        let recs = || {
            vec![
                ConstraintRecord::new("a", rows(0, 1), Some(&s), 0.99).unwrap(),
                ConstraintRecord::new("b", rows(1, 2), Some(&s), 0.99).unwrap(),
            ]
        };
        let all = finalize_constraints(recs(), &[true, true]).unwrap();
        assert!(all.iter().all(|r| r.accepted && r.final_constraint == r.candidate));
        let none = finalize_constraints(recs(), &[false, false]).unwrap();
        assert!(none.iter().all(|r| r.final_constraint.is_full()));
        let mixed = finalize_constraints(recs(), &[true, false]).unwrap();
        assert_eq!(mixed[0].final_constraint, rows(0, 1));
        assert!(mixed[1].final_constraint.is_full());
        assert_eq!(mixed[0].label, Some(0));
        assert_eq!(mixed[1].label, Some(1));
        assert!(finalize_constraints(recs(), &[true]).is_err());
    }

    #[test]
    fn blank_candidate_is_rejected() {
        let rec = ConstraintRecord::new("z", BinaryMask::zeros(3, 3), None, 0.99).unwrap();
        let out = finalize_constraints(vec![rec], &[true]).unwrap();
        assert!(!out[0].accepted);
        assert!(out[0].final_constraint.is_full());
    }
}
