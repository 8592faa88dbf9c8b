use cseg::metrics::{auroc, bootstrap_se, confusion_rates, dsc, hausdorff, iou};
use cseg::BinaryMask;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::*;

#[test]
fn dsc_is_a_function_of_iou() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..500 {
        let a = sparse_mask(&mut rng, 16);
        let b = sparse_mask(&mut rng, 16);
        let j = iou(&a, &b).unwrap();
        assert!((dsc(&a, &b).unwrap() - 2.0 * j / (1.0 + j)).abs() < 1e-12);
    }
    let z = BinaryMask::zeros(4, 4);
    assert_eq!(dsc(&z, &z).unwrap(), 1.0);
    assert_eq!(iou(&z, &z).unwrap(), 1.0);
}

#[test]
fn hausdorff_matches_all_pairs_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for i in 0..250 {
        let a = sparse_mask(&mut rng, 32);
        let b = sparse_mask(&mut rng, 32);
        assert_eq!(hausdorff(&a, &b).unwrap(), brute_hausdorff(&a, &b), "pair {i}");
    }
    let z = BinaryMask::zeros(32, 32);
    let mut one = z.clone();
    one.set(3, 4, true);
    assert_eq!(hausdorff(&z, &z).unwrap(), 0.0);
    assert_eq!(hausdorff(&z, &one).unwrap(), brute_hausdorff(&z, &one));
}

#[test]
fn auroc_matches_pairwise_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for i in 0..150 {
        let n = rng.random_range(2..60);
        // coarse grid of scores forces ties
        let levels = rng.random_range(2..12);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_bool(0.4) as u8).collect();
        labels[0] = 1;
        labels[1] = 0;
        let got = auroc(&scores, &labels).unwrap();
        assert!((got - brute_auroc(&scores, &labels)).abs() < 1e-12, "set {i}");
    }
    assert!(auroc(&[0.1, 0.2], &[1, 1]).is_err());
    assert!(auroc(&[0.1], &[1, 0]).is_err());
}

#[test]
fn confusion_counts_by_hand() {
    let r = confusion_rates(&[true, true, false, false, true], &[1, 0, 0, 1, 1]).unwrap();
    assert_eq!((r.tp, r.fp, r.tn, r.fn_), (2, 1, 1, 1));
}

#[test]
fn bootstrap_is_seeded() {
    let v: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
    let a = bootstrap_se(&v, 200, 5).unwrap();
    assert_eq!(a, bootstrap_se(&v, 200, 5).unwrap());
    assert!(a > 0.0);
    // close to the analytic standard error of the mean
    let m = v.iter().sum::<f64>() / 30.0;
    let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 30.0).sqrt();
    assert!((a - sd / 30f64.sqrt()).abs() < 0.3 * sd / 30f64.sqrt());
}

proptest! {
    #[test]
    fn hausdorff_is_symmetric_and_zero_on_self(bits in proptest::collection::vec(any::<bool>(), 64),
                                                other in proptest::collection::vec(any::<bool>(), 64)) {
        let a = BinaryMask::from_bools(8, 8, &bits).unwrap();
        let b = BinaryMask::from_bools(8, 8, &other).unwrap();
        prop_assert_eq!(hausdorff(&a, &b).unwrap(), hausdorff(&b, &a).unwrap());
        prop_assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn auroc_flips_under_negated_scores(scores in proptest::collection::vec(-5.0f64..5.0, 4..40)) {
        let labels: Vec<u8> = (0..scores.len()).map(|i| (i % 2) as u8).collect();
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let a = auroc(&scores, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a + auroc(&neg, &labels).unwrap() - 1.0).abs() < 1e-12);
    }
}
