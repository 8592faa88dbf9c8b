use cseg::constraint::{coverage_rate, finalize_constraints, lung_plus_space_stages, make_label, ConstraintRecord, MorphConfig};
use cseg::discriminator::{apply_cutoff, cutoff_for_specificity};
use cseg::losses::{batch_loss, constrained_loss, dice_loss, penalty, LossConfig};
use cseg::morphology::{close, dilate, elliptical_element, top_k_components};
use cseg::{threshold, BinaryMask, ProbMap};
use proptest::prelude::*;

fn half_over_four() -> ProbMap {
    ProbMap::filled(2, 2, 0.5).unwrap()
}

fn first_two() -> BinaryMask {
    BinaryMask::new(2, 2, vec![1, 1, 0, 0]).unwrap()
}

#[test]
fn loss_hand_evaluations() {
    let y = half_over_four();
    let s = first_two();
    assert!((dice_loss(&y, &s, 0.0).unwrap().value - 0.5).abs() < 1e-15);
    assert!((penalty(&y, &s, 0.0).unwrap().value - 0.5).abs() < 1e-15);
    let cfg = LossConfig {
        lambda: 0.6,
        epsilon: 0.0,
        ..LossConfig::default()
    };
    assert!((constrained_loss(&y, &s, &s, &cfg).unwrap().value - 0.8).abs() < 1e-15);
}

#[test]
fn all_ones_constraint_reduces_to_dice() {
    let y = ProbMap::new(2, 3, vec![0.1, 0.9, 0.3, 0.6, 0.2, 0.8]).unwrap();
    let s = BinaryMask::new(2, 3, vec![0, 1, 0, 1, 0, 1]).unwrap();
    let ones = BinaryMask::all_ones(2, 3);
    for lambda in [0.0, 0.2, 0.6, 1.0, 7.5] {
        let cfg = LossConfig::default().with_lambda(lambda);
        let c = constrained_loss(&y, &s, &ones, &cfg).unwrap();
        assert_eq!(c, dice_loss(&y, &s, cfg.epsilon).unwrap());
    }
}

#[test]
fn batch_loss_averages() {
    let y = half_over_four();
    let s = first_two();
    let cfg = LossConfig::default();
    let single = constrained_loss(&y, &s, &s, &cfg).unwrap();
    let (v, g) = batch_loss(&[(&y, &s, &s), (&y, &s, &s)], &cfg).unwrap();
    assert!((v - single.value).abs() < 1e-15);
    assert_eq!(g.len(), 2);
    assert!((g[0][0] - single.grad[0] / 2.0).abs() < 1e-15);
    assert!(batch_loss(&[], &cfg).is_err());
}

#[test]
fn labels_use_a_strict_threshold() {
    assert_eq!(make_label(1.0, 0.99), 1);
    assert_eq!(make_label(0.99, 0.99), 0);
    assert_eq!(make_label(0.995, 0.99), 1);
    let c = first_two();
    assert!(coverage_rate(&c, &BinaryMask::zeros(2, 2)).is_err());
    assert_eq!(coverage_rate(&c, &BinaryMask::all_ones(2, 2)).unwrap(), 0.5);
}

#[test]
fn finalize_keeps_accepted_and_falls_back_otherwise() {
    let cand = first_two();
    let recs = vec![
        ConstraintRecord::new("a", cand.clone(), None, 0.99).unwrap(),
        ConstraintRecord::new("b", cand.clone(), None, 0.99).unwrap(),
        ConstraintRecord::new("c", BinaryMask::zeros(2, 2), None, 0.99).unwrap(),
    ];
    let out = finalize_constraints(recs, &[true, false, true]).unwrap();
    assert_eq!(out[0].final_constraint, cand);
    assert!(out[1].final_constraint.is_full());
    // blank candidates never constrain
    assert!(out[2].final_constraint.is_full());
    assert!(!out[2].accepted);
    assert_eq!(out.iter().map(|r| r.sample_id.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);
}

#[test]
fn lung_plus_follows_the_fixed_stage_order() {
    let (h, w) = (32, 32);
    let raw = ProbMap::new(
        h,
        w,
        (0..h * w)
            .map(|i| {
                let (r, c) = ((i / w) as f64, (i % w) as f64);
                let left = ((r - 16.0) / 8.0).powi(2) + ((c - 9.0) / 4.0).powi(2) < 1.0;
                let right = ((r - 16.0) / 8.0).powi(2) + ((c - 23.0) / 4.0).powi(2) < 1.0;
                let speck = (r, c) == (2.0, 2.0);
                if left || right || speck { 0.8 } else { 0.1 }
            })
            .collect(),
    )
    .unwrap();
    let cfg = MorphConfig::default();
    let st = lung_plus_space_stages(&raw, &cfg).unwrap();
    let t = threshold(&raw, cfg.bin_t);
    let comps = top_k_components(&t, cfg.k_components);
    let closed = close(&comps, &elliptical_element(cfg.close_k).unwrap());
    let out = dilate(&closed, &elliptical_element(cfg.dilate_k).unwrap());
    assert_eq!(st.thresholded, t);
    assert_eq!(st.components, comps);
    assert!(!st.components.is_set(2, 2));
    assert_eq!(st.closed, closed);
    assert_eq!(st.output, out);
}

#[test]
fn cutoff_example_and_decision_rule() {
    let c = cutoff_for_specificity(&[0.1, 0.2, 0.3, 0.9], 0.75, 0.01).unwrap();
    assert_eq!(c.cutoff, 0.31);
    assert_eq!(apply_cutoff(&[0.68, 0.70, 0.72], 0.70), vec![false, true, true]);
}

fn probmap(n: usize) -> impl Strategy<Value = ProbMap> {
    proptest::collection::vec(0.0f64..1.0, n * n).prop_map(move |v| ProbMap::new(n, n, v).unwrap())
}

fn mask(n: usize) -> impl Strategy<Value = BinaryMask> {
    proptest::collection::vec(any::<bool>(), n * n).prop_map(move |b| BinaryMask::from_bools(n, n, &b).unwrap())
}

proptest! {
    #[test]
    fn penalty_is_bounded(y in probmap(6), c in mask(6)) {
        let p = penalty(&y, &c, 1e-6).unwrap().value;
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&p));
    }

    #[test]
    fn penalty_vanishes_inside_the_constraint(y in probmap(6), c in mask(6)) {
        let data: Vec<f64> = y.data().iter().zip(c.data()).map(|(&v, &m)| v * m as f64).collect();
        let inside = ProbMap::new(6, 6, data).unwrap();
        prop_assert!(penalty(&inside, &c, 1e-9).unwrap().value.abs() < 1e-6);
    }

    #[test]
    fn cutoffs_rise_with_the_anchor(scores in proptest::collection::vec(0.0f64..1.0, 1..50)) {
        let mut last = 0.0;
        for anchor in [0.80, 0.85, 0.90, 0.95] {
            let c = cutoff_for_specificity(&scores, anchor, 0.01).unwrap();
            prop_assert!(c.cutoff >= last);
            if !c.saturated {
                let below = scores.iter().filter(|&&s| s < c.cutoff).count() as f64;
                prop_assert!(below / scores.len() as f64 >= anchor);
            }
            last = c.cutoff;
        }
    }
}
