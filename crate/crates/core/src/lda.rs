//! Binary linear discriminant analysis over log-variance features.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::csp::FeatureVector;
use crate::data::Label;
use crate::error::{Error, Result};

/// Relative ridge added to the pooled covariance, scaled by `trace / dim`.
pub const POOLED_RIDGE: f64 = 1e-6;

/// `score = wᵀx + b`; a positive score predicts class 1, zero and below class 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    weights: DVector<f64>,
    bias: f64,
}

impl LdaModel {
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        LdaModel {
            weights: DVector::from_vec(weights),
            bias,
        }
    }

    pub fn weights(&self) -> &[f64] {
        self.weights.as_slice()
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, feature: &FeatureVector) -> Result<f64> {
        if feature.len() != self.dim() {
            return Err(Error::dimension(format!(
                "feature has {} entries, model expects {}",
                feature.len(),
                self.dim()
            )));
        }
        Ok(self
            .weights
            .iter()
            .zip(feature.as_slice())
            .map(|(w, x)| w * x)
            .sum::<f64>()
            + self.bias)
    }

    pub fn predict(&self, feature: &FeatureVector) -> Result<(Label, f64)> {
        let score = self.score(feature)?;
        Ok((label_for_score(score), score))
    }
}

/// Ties go to class 0.
pub fn label_for_score(score: f64) -> Label {
    if score > 0.0 {
        Label::One
    } else {
        Label::Zero
    }
}

/// Fits `w = (S + rI)⁻¹ (μ₁ − μ₀)` and `b = −wᵀ(μ₀ + μ₁)/2`.
///
/// Means and the pooled within-class covariance `S` are weighted estimates
/// normalized by total weight, so integer weights behave exactly like
/// replicated samples. `r = 1e-6 · tr(S)/dim`, or `1e-6` when `S` vanishes
/// (one sample per class). When the class means coincide the weights are zero
/// and every sample scores as class 0.
pub fn lda_train(
    features: &[FeatureVector],
    labels: &[Label],
    weights: Option<&[f64]>,
) -> Result<LdaModel> {
    if features.len() != labels.len() {
        return Err(Error::dimension(format!(
            "{} features but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if let Some(w) = weights {
        if w.len() != features.len() {
            return Err(Error::dimension(format!(
                "{} weights for {} samples",
                w.len(),
                features.len()
            )));
        }
        if let Some(bad) = w.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::config(format!("invalid sample weight {bad}")));
        }
    }
    let dim = features.first().map_or(0, |f| f.len());
    if dim == 0 {
        return Err(Error::EmptyClass(Label::Zero));
    }
    if features.iter().any(|f| f.len() != dim) {
        return Err(Error::dimension("features of different lengths"));
    }
    let weight = |i: usize| weights.map_or(1.0, |w| w[i]);

    let mut sums = [DVector::<f64>::zeros(dim), DVector::<f64>::zeros(dim)];
    let mut totals = [0.0f64; 2];
    for (i, (f, l)) in features.iter().zip(labels).enumerate() {
        let w = weight(i);
        if w == 0.0 {
            continue;
        }
        let x = DVector::from_column_slice(f.as_slice());
        sums[l.index()].axpy(w, &x, 1.0);
        totals[l.index()] += w;
    }
    for label in Label::BOTH {
        if totals[label.index()] <= 0.0 {
            let any = labels.contains(&label);
            return Err(if any {
                Error::ZeroWeight(label)
            } else {
                Error::EmptyClass(label)
            });
        }
    }
    let means = [&sums[0] / totals[0], &sums[1] / totals[1]];

    let mut pooled = DMatrix::<f64>::zeros(dim, dim);
    for (i, (f, l)) in features.iter().zip(labels).enumerate() {
        let w = weight(i);
        if w == 0.0 {
            continue;
        }
        let d = DVector::from_column_slice(f.as_slice()) - &means[l.index()];
        pooled.ger(w, &d, &d, 1.0);
    }
    pooled /= totals[0] + totals[1];
    let tr = pooled.trace();
    let ridge = if tr > 0.0 { POOLED_RIDGE * tr / dim as f64 } else { POOLED_RIDGE };
    for i in 0..dim {
        pooled[(i, i)] += ridge;
    }
    let chol = Cholesky::new(pooled)
        .ok_or_else(|| Error::Conditioning("pooled feature covariance is not positive definite".into()))?;
    let w = chol.solve(&(&means[1] - &means[0]));
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Conditioning("LDA weights are not finite".into()));
    }
    let bias = -w.dot(&(&means[0] + &means[1])) / 2.0;
    Ok(LdaModel { weights: w, bias })
}

/// Leave-one-out accuracy of LDA on fixed features.
///
/// Needs at least two samples per class so that every fold keeps both classes.
pub fn loo_accuracy(features: &[FeatureVector], labels: &[Label]) -> Result<f64> {
    if features.len() != labels.len() {
        return Err(Error::dimension("features and labels differ in length"));
    }
    for label in Label::BOTH {
        let n = labels.iter().filter(|&&l| l == label).count();
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "leave-one-out needs 2 samples of class {label}, have {n}"
            )));
        }
    }
    let mut correct = 0usize;
    let mut fold_features = Vec::with_capacity(features.len() - 1);
    let mut fold_labels = Vec::with_capacity(features.len() - 1);
    for held in 0..features.len() {
        fold_features.clear();
        fold_labels.clear();
        for (i, (f, l)) in features.iter().zip(labels).enumerate() {
            if i != held {
                fold_features.push(f.clone());
                fold_labels.push(*l);
            }
        }
        let model = lda_train(&fold_features, &fold_labels, None)?;
        if model.predict(&features[held])?.0 == labels[held] {
            correct += 1;
        }
    }
    Ok(correct as f64 / features.len() as f64)
}
