//! CSP + LDA trained from per-epoch covariances.
//!
//! Every strategy reduces to "class means → filter bank → features → LDA" over
//! some weighted collection of epochs. Working on cached trace-normalized
//! covariances instead of raw epochs keeps the benchmark cheap; the features
//! are identical because log-variance features only depend on `X·Xᵀ`.

use crate::csp::{apply_filters, compute_csp, log_variance_features, CspFilterBank, FeatureVector};
use crate::data::{weighted_mean, Epoch, Label, SpatialCovariance};
use crate::error::Result;
use crate::lda::{lda_train, LdaModel};

/// One training epoch: its normalized covariance, label and weight.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub covariance: &'a SpatialCovariance,
    pub label: Label,
    pub weight: f64,
}

impl<'a> Sample<'a> {
    pub fn new(covariance: &'a SpatialCovariance, label: Label) -> Self {
        Sample {
            covariance,
            label,
            weight: 1.0,
        }
    }

    pub fn weighted(covariance: &'a SpatialCovariance, label: Label, weight: f64) -> Self {
        Sample {
            covariance,
            label,
            weight,
        }
    }
}

/// A filter bank with the classifier trained on its features.
#[derive(Debug, Clone, PartialEq)]
pub struct CspLda {
    pub bank: CspFilterBank,
    pub lda: LdaModel,
}

impl CspLda {
    pub fn predict_covariance(&self, cov: &SpatialCovariance) -> Result<(Label, f64)> {
        self.lda.predict(&self.bank.features(cov)?)
    }

    pub fn predict_epoch(&self, epoch: &Epoch) -> Result<(Label, f64)> {
        let features = log_variance_features(&apply_filters(&self.bank, epoch)?)?;
        self.lda.predict(&features)
    }

    /// Fraction of `samples` whose label is predicted correctly (weights ignored).
    pub fn accuracy(&self, samples: &[Sample<'_>]) -> Result<f64> {
        if samples.is_empty() {
            return Ok(0.0);
        }
        let mut correct = 0usize;
        for s in samples {
            if self.predict_covariance(s.covariance)?.0 == s.label {
                correct += 1;
            }
        }
        Ok(correct as f64 / samples.len() as f64)
    }
}

/// Weighted class-mean covariances `[Σ̄₀, Σ̄₁]`.
pub fn class_means(samples: &[Sample<'_>]) -> Result<[SpatialCovariance; 2]> {
    let mean = |label: Label| {
        weighted_mean(
            samples
                .iter()
                .filter(|s| s.label == label)
                .map(|s| (s.covariance, s.weight)),
            label,
        )
    };
    Ok([mean(Label::Zero)?, mean(Label::One)?])
}

/// LDA on the bank's features of `samples`; zero-weight samples are skipped.
pub fn train_lda(bank: &CspFilterBank, samples: &[Sample<'_>]) -> Result<LdaModel> {
    let mut features: Vec<FeatureVector> = Vec::with_capacity(samples.len());
    let mut labels = Vec::with_capacity(samples.len());
    let mut weights = Vec::with_capacity(samples.len());
    for s in samples.iter().filter(|s| s.weight != 0.0) {
        features.push(bank.features(s.covariance)?);
        labels.push(s.label);
        weights.push(s.weight);
    }
    lda_train(&features, &labels, Some(&weights))
}

/// Class means, filter bank and LDA, all from the same weighted samples.
pub fn train_csp_lda(samples: &[Sample<'_>], filters_per_class: usize) -> Result<CspLda> {
    let kept: Vec<Sample<'_>> = samples.iter().copied().filter(|s| s.weight != 0.0).collect();
    let [sigma0, sigma1] = class_means(&kept)?;
    let bank = compute_csp(&sigma0, &sigma1, filters_per_class)?;
    let lda = train_lda(&bank, &kept)?;
    Ok(CspLda { bank, lda })
}
