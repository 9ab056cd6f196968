mod common;

use proptest::prelude::*;
use rand::Rng;

use tlcsp::csp::FeatureVector;
use tlcsp::data::Label;
use tlcsp::lda::{lda_train, loo_accuracy, LdaModel, POOLED_RIDGE};

fn fv(v: &[f64]) -> FeatureVector {
    FeatureVector::new(v.to_vec())
}

/// Closed-form two-feature LDA: means, pooled scatter, ridge and Cramer's rule.
fn cramer_lda(x: &[[f64; 2]], y: &[Label]) -> ([f64; 2], f64) {
    let mut mean = [[0.0; 2]; 2];
    let mut count = [0.0; 2];
    for (p, l) in x.iter().zip(y) {
        let k = l.index();
        mean[k][0] += p[0];
        mean[k][1] += p[1];
        count[k] += 1.0;
    }
    for k in 0..2 {
        mean[k][0] /= count[k];
        mean[k][1] /= count[k];
    }
    let (mut a, mut b, mut d) = (0.0, 0.0, 0.0);
    for (p, l) in x.iter().zip(y) {
        let m = mean[l.index()];
        let (u, v) = (p[0] - m[0], p[1] - m[1]);
        a += u * u;
        b += u * v;
        d += v * v;
    }
    let n = x.len() as f64;
    let (mut a, b, mut d) = (a / n, b / n, d / n);
    let tr = a + d;
    let ridge = if tr > 0.0 { POOLED_RIDGE * tr / 2.0 } else { POOLED_RIDGE };
    a += ridge;
    d += ridge;
    let r = [mean[1][0] - mean[0][0], mean[1][1] - mean[0][1]];
    let det = a * d - b * b;
    let w = [(r[0] * d - b * r[1]) / det, (a * r[1] - b * r[0]) / det];
    let bias = -(w[0] * (mean[0][0] + mean[1][0]) + w[1] * (mean[0][1] + mean[1][1])) / 2.0;
    (w, bias)
}

fn gaussian_points(n: usize, seed: u64) -> (Vec<[f64; 2]>, Vec<Label>) {
    let mut r = common::rng(seed);
    let g = common::gaussian(n, 2, &mut r);
    let labels: Vec<Label> = (0..n).map(common::label_of).collect();
    let pts = (0..n)
        .map(|i| {
            let shift = if labels[i] == Label::One { 1.5 } else { -0.5 };
            [g[(i, 0)] + shift, 0.5 * g[(i, 1)] - shift + 0.3 * g[(i, 0)]]
        })
        .collect();
    (pts, labels)
}

#[test]
fn weights_match_cramer_oracle() {
    for seed in 0..20 {
        let (pts, labels) = gaussian_points(12 + seed as usize, seed);
        let features: Vec<_> = pts.iter().map(|p| fv(p)).collect();
        let model = lda_train(&features, &labels, None).unwrap();
        let (w, bias) = cramer_lda(&pts, &labels);
        for k in 0..2 {
            assert!((model.weights()[k] - w[k]).abs() <= 1e-12 * w[k].abs().max(1.0), "seed {seed}");
        }
        assert!((model.bias() - bias).abs() <= 1e-12 * bias.abs().max(1.0));
    }
}

#[test]
fn loo_matches_manual_folds() {
    let mut r = common::rng(21);
    for _ in 0..30 {
        let pts: Vec<[f64; 2]> = (0..4).map(|_| [r.random::<f64>(), r.random::<f64>()]).collect();
        let labels = [Label::Zero, Label::One, Label::Zero, Label::One];
        let features: Vec<_> = pts.iter().map(|p| fv(p)).collect();
        let mut correct = 0;
        for held in 0..4 {
            let keep: Vec<usize> = (0..4).filter(|&i| i != held).collect();
            let fold_pts: Vec<[f64; 2]> = keep.iter().map(|&i| pts[i]).collect();
            let fold_labels: Vec<Label> = keep.iter().map(|&i| labels[i]).collect();
            let (w, b) = cramer_lda(&fold_pts, &fold_labels);
            let score = w[0] * pts[held][0] + w[1] * pts[held][1] + b;

            let fold_features: Vec<_> = fold_pts.iter().map(|p| fv(p)).collect();
            let model = lda_train(&fold_features, &fold_labels, None).unwrap();
            let (label, got) = model.predict(&features[held]).unwrap();
            assert!((got - score).abs() <= 1e-9 * score.abs().max(1.0));
            let oracle = if score > 0.0 { Label::One } else { Label::Zero };
            assert_eq!(label, oracle);
            if oracle == labels[held] {
                correct += 1;
            }
        }
        assert_eq!(loo_accuracy(&features, &labels).unwrap(), correct as f64 / 4.0);
    }
}

#[test]
fn predict_examples() {
    let features = vec![fv(&[-1.0, 1.0]), fv(&[-1.0, -1.0]), fv(&[1.0, 1.0]), fv(&[1.0, -1.0])];
    let labels = [Label::Zero, Label::Zero, Label::One, Label::One];
    let model = lda_train(&features, &labels, None).unwrap();
    assert_eq!(model.predict(&fv(&[2.0, 0.0])).unwrap().0, Label::One);
    assert!(model.bias().abs() < 1e-12);
    let m = LdaModel::new(vec![1.0, 0.0], 0.0);
    assert_eq!(m.predict(&fv(&[-3.0, 7.0])).unwrap(), (Label::Zero, -3.0));
    assert_eq!(m.predict(&fv(&[0.0, 1.0])).unwrap().0, Label::Zero);
}

/// At least `2·dim + 2` samples: with fewer the pooled covariance is rank
/// deficient, the ridge dominates, and rounding is amplified by ~1e6.
fn dataset() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Label>)> {
    (any::<u64>(), 0usize..12, 1usize..5).prop_map(|(seed, extra, dim)| {
        let n = 2 * dim + 2 + extra;
        let mut r = common::rng(seed);
        let labels: Vec<Label> = (0..n).map(common::label_of).collect();
        let x = (0..n)
            .map(|i| {
                (0..dim)
                    .map(|d| r.random::<f64>() * 2.0 - 1.0 + if labels[i] == Label::One { 0.3 * d as f64 } else { 0.0 })
                    .collect()
            })
            .collect();
        (x, labels)
    })
}

fn close(a: &LdaModel, b: &LdaModel, tol: f64) -> bool {
    let scale = a.weights().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.weights().iter().zip(b.weights()).all(|(x, y)| (x - y).abs() <= tol * scale)
        && (a.bias() - b.bias()).abs() <= tol * scale.max(a.bias().abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn prop_order_invariant((x, y) in dataset(), rot in any::<usize>()) {
        let f: Vec<_> = x.iter().map(|v| fv(v)).collect();
        let a = lda_train(&f, &y, None).unwrap();
        let k = rot % f.len();
        let mut f2 = f.clone();
        let mut y2 = y.clone();
        f2.rotate_left(k);
        y2.rotate_left(k);
        f2.reverse();
        y2.reverse();
        let b = lda_train(&f2, &y2, None).unwrap();
        prop_assert!(close(&a, &b, 1e-10));
    }

    #[test]
    fn prop_shift_changes_bias_only((x, y) in dataset(), c in -5.0f64..5.0) {
        let f: Vec<_> = x.iter().map(|v| fv(v)).collect();
        let shifted: Vec<_> = x.iter().map(|v| fv(&v.iter().map(|e| e + c).collect::<Vec<_>>())).collect();
        let a = lda_train(&f, &y, None).unwrap();
        let b = lda_train(&shifted, &y, None).unwrap();
        let scale = a.weights().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (p, q) in a.weights().iter().zip(b.weights()) {
            prop_assert!((p - q).abs() <= 1e-9 * scale);
        }
        for (orig, moved) in f.iter().zip(&shifted) {
            let sa = a.score(orig).unwrap();
            let sb = b.score(moved).unwrap();
            prop_assert!((sa - sb).abs() <= 1e-8 * scale.max(sa.abs()));
        }
    }

    #[test]
    fn prop_integer_weights_replicate((x, y) in dataset(), reps in prop::collection::vec(1u8..4, 24)) {
        let f: Vec<_> = x.iter().map(|v| fv(v)).collect();
        let w: Vec<f64> = (0..f.len()).map(|i| reps[i] as f64).collect();
        let weighted = lda_train(&f, &y, Some(&w)).unwrap();
        let mut rf = Vec::new();
        let mut ry = Vec::new();
        for i in 0..f.len() {
            for _ in 0..reps[i] {
                rf.push(f[i].clone());
                ry.push(y[i]);
            }
        }
        let replicated = lda_train(&rf, &ry, None).unwrap();
        prop_assert!(close(&weighted, &replicated, 1e-10));
    }

    #[test]
    fn prop_loo_in_range((x, y) in dataset()) {
        let f: Vec<_> = x.iter().map(|v| fv(v)).collect();
        let acc = loo_accuracy(&f, &y).unwrap();
        prop_assert!((0.0..=1.0).contains(&acc));
    }
}
