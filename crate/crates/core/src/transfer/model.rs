//! Model-based transfer (MA): one CSP+LDA model per source subject, combined
//! with simplex-constrained weights fit on the labeled target epochs.
//!
//! Source models vote with hard `±1` outputs (class 1 → `+1`). The weights
//! minimize the squared loss `Σ_j (Σ_z w_z P_jz − y_j)²` over the probability
//! simplex.

use nalgebra::{DMatrix, DVector};

use crate::data::{epoch_covariance, Epoch, Label, LabeledEpoch, SpatialCovariance, SubjectDataset};
use crate::error::{Error, Result};
use crate::lda::label_for_score;
use crate::pipeline::{train_csp_lda, CspLda, Sample};
use crate::qp::{minimize_quadratic, Simplex, SolverOptions};

pub const MAX_ITERATIONS: usize = 5000;
pub const TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SourceModel {
    pub subject_id: String,
    pub model: CspLda,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceModelBank {
    models: Vec<SourceModel>,
}

impl SourceModelBank {
    pub fn new(models: Vec<SourceModel>) -> Result<Self> {
        let Some(first) = models.first() else {
            return Err(Error::config("model bank needs at least one source model"));
        };
        let c = first.model.bank.channels();
        if models.iter().any(|m| m.model.bank.channels() != c) {
            return Err(Error::dimension("source models disagree on channel count"));
        }
        Ok(SourceModelBank { models })
    }

    pub fn models(&self) -> &[SourceModel] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.models[0].model.bank.channels()
    }

    /// `±1` vote of every source model for an epoch with covariance `cov`.
    pub fn votes(&self, cov: &SpatialCovariance) -> Result<Vec<f64>> {
        self.models
            .iter()
            .map(|m| m.model.predict_covariance(cov).map(|(l, _)| l.sign()))
            .collect()
    }
}

/// Trains one CSP+LDA model per source on that source's own epochs.
pub fn train_source_models(sources: &[SubjectDataset], filters_per_class: usize) -> Result<SourceModelBank> {
    let models = sources
        .iter()
        .map(|ds| train_one(ds, filters_per_class).map_err(|e| e.in_subject(ds.subject_id())))
        .collect::<Result<Vec<_>>>()?;
    SourceModelBank::new(models)
}

fn train_one(ds: &SubjectDataset, filters_per_class: usize) -> Result<SourceModel> {
    let covs = ds
        .epochs()
        .iter()
        .map(|e| Ok((epoch_covariance(&e.epoch, true)?, e.label)))
        .collect::<Result<Vec<_>>>()?;
    let samples: Vec<Sample<'_>> = covs.iter().map(|(c, l)| Sample::new(c, *l)).collect();
    Ok(SourceModel {
        subject_id: ds.subject_id().to_owned(),
        model: train_csp_lda(&samples, filters_per_class)?,
    })
}

/// m×Z matrix of `±1` source votes, one row per epoch.
pub fn prediction_matrix(bank: &SourceModelBank, epochs: &[LabeledEpoch]) -> Result<DMatrix<f64>> {
    if epochs.is_empty() {
        return Err(Error::InsufficientData("prediction matrix needs at least one epoch".into()));
    }
    let covs = epochs
        .iter()
        .map(|e| epoch_covariance(&e.epoch, true))
        .collect::<Result<Vec<_>>>()?;
    votes_matrix(bank, covs.iter())
}

pub(crate) fn votes_matrix<'a>(
    bank: &SourceModelBank,
    covs: impl ExactSizeIterator<Item = &'a SpatialCovariance>,
) -> Result<DMatrix<f64>> {
    let mut p = DMatrix::zeros(covs.len(), bank.len());
    for (j, cov) in covs.enumerate() {
        if cov.dim() != bank.channels() {
            return Err(Error::dimension(format!(
                "epoch has {} channels, source models expect {}",
                cov.dim(),
                bank.channels()
            )));
        }
        for (z, v) in bank.votes(cov)?.into_iter().enumerate() {
            p[(j, z)] = v;
        }
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleWeights {
    weights: Vec<f64>,
    /// Squared loss at `weights`.
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Loss after each accepted solver iteration.
    pub history: Vec<f64>,
}

impl EnsembleWeights {
    /// Validates the simplex constraints (sum 1 ± 1e-9, entries ≥ −1e-12, clamped to 0).
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if weights.is_empty()
            || (sum - 1.0).abs() > 1e-9
            || weights.iter().any(|w| !(*w >= -1e-12) || !w.is_finite())
        {
            return Err(Error::config(format!("ensemble weights {weights:?} are not on the simplex")));
        }
        Ok(EnsembleWeights {
            weights: weights.into_iter().map(|w| w.max(0.0)).collect(),
            objective: f64::NAN,
            converged: true,
            iterations: 0,
            history: Vec::new(),
        })
    }

    pub fn uniform(z: usize) -> Self {
        EnsembleWeights {
            weights: vec![1.0 / z as f64; z],
            objective: f64::NAN,
            converged: true,
            iterations: 0,
            history: Vec::new(),
        }
    }

    /// Puts all weight on model `z`.
    pub fn vertex(z: usize, len: usize) -> Self {
        let mut w = vec![0.0; len];
        w[z] = 1.0;
        EnsembleWeights {
            weights: w,
            objective: f64::NAN,
            converged: true,
            iterations: 0,
            history: Vec::new(),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// `Σ_j (Σ_z w_z P_jz − y_j)²`.
pub fn ensemble_loss(p: &DMatrix<f64>, labels: &[f64], w: &[f64]) -> f64 {
    let w = DVector::from_column_slice(w);
    let y = DVector::from_column_slice(labels);
    (p * w - y).norm_squared()
}

/// Fits simplex weights to votes `p` (m×Z) and `±1` labels by projected gradient.
pub fn optimize_weights(p: &DMatrix<f64>, labels: &[f64]) -> Result<EnsembleWeights> {
    let (m, z) = p.shape();
    if m == 0 || z == 0 {
        return Err(Error::InsufficientData("weight fitting needs at least one epoch and one model".into()));
    }
    if labels.len() != m {
        return Err(Error::dimension(format!("{} labels for {m} prediction rows", labels.len())));
    }
    let y = DVector::from_column_slice(labels);
    // ‖Pw − y‖² = ½ wᵀ(2PᵀP)w − 2(Pᵀy)ᵀw + yᵀy
    let q = p.tr_mul(p) * 2.0;
    let c = p.tr_mul(&y) * -2.0;
    let constant = y.norm_squared();
    let sol = minimize_quadratic(
        &q,
        &c,
        DVector::from_element(z, 1.0 / z as f64),
        &Simplex,
        SolverOptions {
            max_iterations: MAX_ITERATIONS,
            tolerance: TOLERANCE,
        },
    );
    let weights: Vec<f64> = sol.x.iter().map(|w| w.max(0.0)).collect();
    let objective = ensemble_loss(p, labels, &weights);
    Ok(EnsembleWeights {
        weights,
        objective,
        converged: sol.converged,
        iterations: sol.iterations,
        history: sol.history.iter().map(|f| f + constant).collect(),
    })
}

fn check_lengths(bank: &SourceModelBank, w: &EnsembleWeights) -> Result<()> {
    if w.len() != bank.len() {
        return Err(Error::dimension(format!(
            "{} ensemble weights for {} source models",
            w.len(),
            bank.len()
        )));
    }
    Ok(())
}

/// `score = Σ_z w_z f_z(x)` with `f_z ∈ {−1, +1}`; ties go to class 0.
pub fn ensemble_predict(bank: &SourceModelBank, w: &EnsembleWeights, epoch: &Epoch) -> Result<(Label, f64)> {
    check_lengths(bank, w)?;
    ensemble_predict_covariance(bank, w, &epoch_covariance(epoch, true)?)
}

pub fn ensemble_predict_covariance(
    bank: &SourceModelBank,
    w: &EnsembleWeights,
    cov: &SpatialCovariance,
) -> Result<(Label, f64)> {
    check_lengths(bank, w)?;
    let score: f64 = bank.votes(cov)?.iter().zip(w.as_slice()).map(|(v, w)| v * w).sum();
    Ok((label_for_score(score), score))
}
