mod common;

use proptest::prelude::*;

use tlcsp::data::{epoch_covariance, Epoch, LabeledEpoch, SpatialCovariance};
use tlcsp::pipeline::{train_csp_lda, Sample};
use tlcsp::transfer::{
    covariance_representation, kmm_representation, kmm_weights, median_bandwidth, weighted_fused_training,
    Bandwidth, InstanceWeights, KmmConfig, SourceGeometry,
};
use tlcsp::Error;

fn random_points(n: usize, d: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<Vec<f64>> {
    let g = common::gaussian(n, d, rng);
    (0..n).map(|i| g.row(i).iter().copied().collect()).collect()
}

fn check_feasible(beta: &[f64], cfg: &KmmConfig) {
    let n = beta.len() as f64;
    let eps = cfg.epsilon_for(beta.len());
    let sum: f64 = beta.iter().sum();
    assert!(beta.iter().all(|b| *b >= -1e-6 && *b <= cfg.upper_bound + 1e-6), "{beta:?}");
    assert!(sum >= n * (1.0 - eps) - 1e-6 && sum <= n * (1.0 + eps) + 1e-6, "sum {sum}");
}

#[test]
fn representation_distance_is_frobenius() {
    let mut r = common::rng(3);
    for _ in 0..20 {
        let a = common::spd_cov(5, 0.1, &mut r);
        let b = common::spd_cov(5, 0.1, &mut r);
        let (va, vb) = (covariance_representation(&a), covariance_representation(&b));
        assert_eq!(va.len(), 15);
        let d: f64 = va.iter().zip(&vb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let frob = (a.matrix() - b.matrix()).norm();
        assert!((d - frob).abs() <= 1e-12 * frob.max(1.0));
    }
}

#[test]
fn representation_ignores_epoch_scale() {
    let mut r = common::rng(8);
    let e = common::random_epoch(4, 50, &mut r);
    let scaled = Epoch::new(e.data() * 7.5).unwrap();
    let (a, b) = (kmm_representation(&e).unwrap(), kmm_representation(&scaled).unwrap());
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-14));
}

#[test]
fn median_matches_sorting_oracle() {
    let mut r = common::rng(11);
    for n in [2usize, 3, 6, 9] {
        let src = random_points(n, 3, &mut r);
        let tgt = random_points(n + 1, 3, &mut r);
        let geo = SourceGeometry::new(src.clone()).unwrap();
        let w = geo.weights(&tgt, &KmmConfig::default()).unwrap();
        assert_eq!(w.bandwidth, common::brute_median(&src, &tgt));
        let all: Vec<_> = src.iter().chain(&tgt).cloned().collect();
        assert_eq!(median_bandwidth(&all).unwrap(), w.bandwidth);
    }
    let same = vec![vec![0.5, 0.5]; 4];
    assert_eq!(median_bandwidth(&same).unwrap(), 1.0);
}

#[test]
fn nearer_source_sample_gets_more_weight() {
    let src = vec![vec![0.1, 0.0], vec![3.0, 0.0]];
    let tgt = vec![vec![0.0, 0.0]];
    let w = kmm_weights(&src, &tgt, &KmmConfig::default()).unwrap();
    let b = w.as_slice();
    assert!(b[0] > b[1], "{b:?}");
    check_feasible(b, &KmmConfig::default());
}

#[test]
fn grid_oracle_small_problems() {
    let mut r = common::rng(21);
    let cfg = KmmConfig::default();
    for trial in 0..12 {
        let n = 1 + trial % 3;
        let src = random_points(n, 2, &mut r);
        let tgt = random_points(1 + trial % 4, 2, &mut r);
        let w = kmm_weights(&src, &tgt, &cfg).unwrap();
        let (kk, kappa, scale) = common::kmm_terms(&src, &tgt, w.bandwidth);
        let ours = common::kmm_objective(&kk, &kappa, scale, w.as_slice());
        assert!((ours - w.objective).abs() < 1e-9);
        let grid = common::kmm_grid_objective(&kk, &kappa, scale, cfg.upper_bound, cfg.epsilon_for(n), 0.01);
        assert!(ours <= grid + 1e-6, "n={n}: {ours} vs grid {grid}");
        check_feasible(w.as_slice(), &cfg);
    }
}

#[test]
fn identical_sets_keep_uniform_objective() {
    let mut r = common::rng(5);
    let pts = random_points(12, 4, &mut r);
    let w = kmm_weights(&pts, &pts, &KmmConfig::default()).unwrap();
    let (kk, kappa, scale) = common::kmm_terms(&pts, &pts, w.bandwidth);
    let uniform = common::kmm_objective(&kk, &kappa, scale, &[1.0; 12]);
    assert!((w.objective - uniform).abs() <= 1e-8 * uniform.abs().max(1.0), "{} vs {uniform}", w.objective);
}

#[test]
fn weights_favor_the_matching_cluster() {
    let mut passed = 0;
    for seed in 0..20 {
        let mut r = common::rng(seed);
        let mut src = common::cluster(&[0.0, 0.0, 0.0], 0.3, 15, &mut r);
        src.extend(common::cluster(&[4.0, 0.0, 0.0], 0.3, 15, &mut r));
        let tgt = common::cluster(&[0.0, 0.0, 0.0], 0.3, 10, &mut r);
        let w = kmm_weights(&src, &tgt, &KmmConfig::default()).unwrap();
        let near: f64 = w.as_slice()[..15].iter().sum::<f64>() / 15.0;
        let far: f64 = w.as_slice()[15..].iter().sum::<f64>() / 15.0;
        if near > far {
            passed += 1;
        }
    }
    assert!(passed >= 18, "{passed}/20");
}

#[test]
fn config_and_input_errors() {
    let pts = vec![vec![0.0], vec![1.0]];
    let bad_b = KmmConfig {
        upper_bound: 0.0,
        ..KmmConfig::default()
    };
    assert!(matches!(kmm_weights(&pts, &pts, &bad_b), Err(Error::Config(_))));
    let bad_sigma = KmmConfig {
        bandwidth: Bandwidth::Fixed(-1.0),
        ..KmmConfig::default()
    };
    assert!(matches!(kmm_weights(&pts, &pts, &bad_sigma), Err(Error::Config(_))));
    let tight = KmmConfig {
        upper_bound: 0.5,
        epsilon: Some(0.1),
        ..KmmConfig::default()
    };
    assert!(matches!(kmm_weights(&pts, &pts, &tight), Err(Error::Config(_))));
    assert!(matches!(kmm_weights(&pts, &[], &KmmConfig::default()), Err(Error::InsufficientData(_))));
    assert!(matches!(kmm_weights(&pts, &[vec![0.0, 1.0]], &KmmConfig::default()), Err(Error::Dimension(_))));
    assert!(InstanceWeights::new(vec![1.0, -0.5]).is_err());
}

fn fused_pair(seed: u64) -> (Vec<LabeledEpoch>, Vec<LabeledEpoch>) {
    let mut r = common::rng(seed);
    (common::separable_epochs(4, 5, 60, &mut r), common::separable_epochs(10, 5, 60, &mut r))
}

fn covs(epochs: &[LabeledEpoch]) -> Vec<SpatialCovariance> {
    epochs.iter().map(|e| epoch_covariance(&e.epoch, true).unwrap()).collect()
}

#[test]
fn unit_weights_equal_plain_pooling() {
    let (tgt, src) = fused_pair(1);
    let (bank, lda) = weighted_fused_training(&tgt, &src, &InstanceWeights::uniform(src.len()), 2).unwrap();
    let all: Vec<LabeledEpoch> = tgt.iter().chain(&src).cloned().collect();
    let c = covs(&all);
    let samples: Vec<Sample<'_>> = c.iter().zip(&all).map(|(c, e)| Sample::new(c, e.label)).collect();
    let plain = train_csp_lda(&samples, 2).unwrap();
    assert_eq!(bank, plain.bank);
    assert_eq!(lda, plain.lda);
}

#[test]
fn zero_weights_equal_target_only() {
    let (tgt, src) = fused_pair(2);
    let zero = InstanceWeights::new(vec![0.0; src.len()]).unwrap();
    let (bank, lda) = weighted_fused_training(&tgt, &src, &zero, 2).unwrap();
    let c = covs(&tgt);
    let samples: Vec<Sample<'_>> = c.iter().zip(&tgt).map(|(c, e)| Sample::new(c, e.label)).collect();
    let alone = train_csp_lda(&samples, 2).unwrap();
    assert_eq!(bank, alone.bank);
    assert_eq!(lda, alone.lda);
    assert!(matches!(
        weighted_fused_training(&tgt, &src, &InstanceWeights::uniform(3), 2),
        Err(Error::Dimension(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn prop_weights_feasible_and_monotone(seed in any::<u64>(), n in 1usize..25, m in 1usize..25, d in 1usize..5, spread in 0.1f64..3.0) {
        let mut r = common::rng(seed);
        let src: Vec<Vec<f64>> = random_points(n, d, &mut r);
        let tgt: Vec<Vec<f64>> = random_points(m, d, &mut r).into_iter().map(|p| p.iter().map(|v| v * spread + 0.5).collect()).collect();
        let cfg = KmmConfig::default();
        let w = kmm_weights(&src, &tgt, &cfg).unwrap();
        check_feasible(w.as_slice(), &cfg);
        prop_assert!(common::is_monotone(&w.history, 1e-12));
    }

    #[test]
    fn prop_warm_start_reaches_same_objective(seed in any::<u64>(), n in 2usize..20) {
        let mut r = common::rng(seed);
        let src = random_points(n, 3, &mut r);
        let tgt = random_points(4, 3, &mut r);
        let geo = SourceGeometry::new(src).unwrap();
        let cfg = KmmConfig::default();
        let cold = geo.weights(&tgt, &cfg).unwrap();
        let start: Vec<f64> = (0..n).map(|i| (i % 3) as f64).collect();
        let warm = geo.weights_from(&tgt, &cfg, Some(&start)).unwrap();
        prop_assert!((cold.objective - warm.objective).abs() <= 1e-7 * cold.objective.abs().max(1.0));
    }
}
