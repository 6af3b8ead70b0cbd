use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use specklevar::analysis::{self, Polarity, ReactivParams};
use specklevar::stack::{ScalarMap, Shape, SpeckleStack};

fn random_map(h: usize, w: usize, seed: u64) -> ScalarMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ScalarMap::new(h, w, (0..h * w).map(|_| rng.random::<f64>()).collect(), "m").unwrap()
}

fn random_truth(h: usize, w: usize, frac: f64, seed: u64) -> ScalarMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask: Vec<bool> = (0..h * w).map(|_| rng.random::<f64>() < frac).collect();
    ScalarMap::from_mask(h, w, &mask, "t")
}

#[test]
fn independent_map_scores_chance() {
    let auc = analysis::roc(&random_map(100, 100, 1), &random_truth(100, 100, 0.3, 2), Polarity::HighIsChange)
        .unwrap()
        .auc;
    assert!((auc - 0.5).abs() < 0.05, "AUC {auc}");
}

#[test]
fn negated_map_complements_auc() {
    let m = random_map(40, 50, 3);
    let t = random_truth(40, 50, 0.2, 4);
    let neg = ScalarMap::new(40, 50, m.values.iter().map(|v| -v).collect(), "neg").unwrap();
    for pol in [Polarity::HighIsChange, Polarity::LowIsPs] {
        let a = analysis::roc(&m, &t, pol).unwrap().auc;
        let b = analysis::roc(&neg, &t, pol).unwrap().auc;
        assert!((a + b - 1.0).abs() < 1e-9);
    }
    let high = analysis::roc(&m, &t, Polarity::HighIsChange).unwrap().auc;
    let low = analysis::roc(&m, &t, Polarity::LowIsPs).unwrap().auc;
    assert!((high + low - 1.0).abs() < 1e-9);
}

#[test]
fn roc_rates_are_monotone() {
    let c = analysis::roc(&random_map(30, 30, 5), &random_truth(30, 30, 0.4, 6), Polarity::HighIsChange).unwrap();
    assert!(c.fpr.windows(2).all(|w| w[0] <= w[1]));
    assert!(c.tpr.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!((c.fpr[0], c.tpr[0]), (0.0, 0.0));
    assert_eq!((*c.fpr.last().unwrap(), *c.tpr.last().unwrap()), (1.0, 1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pearson_symmetric_and_affine(seed in any::<u64>(), s in 0.1f64..10.0, o in -5.0f64..5.0) {
        let a = random_map(8, 9, seed);
        let b = random_map(8, 9, seed ^ 0x5555);
        let r = analysis::pearson(&a, &b).unwrap();
        prop_assert!((r - analysis::pearson(&b, &a).unwrap()).abs() < 1e-12);
        let b2 = ScalarMap::new(8, 9, b.values.iter().map(|v| s * v + o).collect(), "b2").unwrap();
        prop_assert!((r - analysis::pearson(&a, &b2).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn reactiv_hue_and_saturation_ignore_scale(seed in any::<u64>(), scale in 0.01f32..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = Shape::new(7, 1, 4, 5);
        let data: Vec<f32> = (0..shape.len()).map(|_| rng.random_range(0.1f32..4.0)).collect();
        let scaled: Vec<f32> = data.iter().map(|v| v * scale).collect();
        let a = analysis::reactiv(&SpeckleStack::real(shape, data).unwrap(), ReactivParams::default()).unwrap();
        let b = analysis::reactiv(&SpeckleStack::real(shape, scaled).unwrap(), ReactivParams::default()).unwrap();
        prop_assert_eq!(&a.hue, &b.hue);
        for (x, y) in a.saturation.iter().zip(&b.saturation) {
            prop_assert!((x - y).abs() < 1e-5);
        }
    }
}
