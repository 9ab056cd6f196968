//! Covariance-fusion transfer: KL-affinity weighting (CM1) and
//! selected-subject regularization (CM2).

use nalgebra::{Cholesky, DMatrix};

use crate::data::{epoch_covariance, Label, SpatialCovariance, SubjectDataset};
use crate::error::{Error, Result};
use crate::pipeline::{train_csp_lda, Sample};

/// Chance accuracy of a balanced binary task.
pub const RAND_ACC: f64 = 0.5;

/// Ridge applied to each matrix before the Gaussian KL divergence, scaled by `trace / C`.
pub const KL_RIDGE: f64 = 1e-10;

/// Smallest divergence used when inverting KL values.
pub const MIN_KL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cm1Config {
    /// Weight on the source side, in `[0, 1]`.
    pub lambda: f64,
}

impl Default for Cm1Config {
    fn default() -> Self {
        Cm1Config { lambda: 0.5 }
    }
}

impl Cm1Config {
    pub fn new(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Cm1Config { lambda })
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::config(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    Ok(())
}

/// Normalized inverse-KL weights of each source subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceAffinity {
    pub alpha: Vec<f64>,
    pub kl: Vec<f64>,
}

impl SourceAffinity {
    /// Equal weights, for when no target data is available.
    pub fn uniform(z: usize) -> Self {
        SourceAffinity {
            alpha: vec![1.0 / z as f64; z],
            kl: vec![f64::NAN; z],
        }
    }
}

fn ridged_cholesky(cov: &SpatialCovariance, what: &str) -> Result<DMatrix<f64>> {
    let c = cov.dim();
    let mut m = cov.matrix().clone();
    let eps = KL_RIDGE * m.trace() / c as f64;
    for i in 0..c {
        m[(i, i)] += eps;
    }
    Cholesky::new(m)
        .map(|ch| ch.l())
        .filter(|l| l.diagonal().iter().all(|&d| d > 0.0 && d.is_finite()))
        .ok_or_else(|| Error::Conditioning(format!("{what} covariance is not positive definite")))
}

/// KL divergence between zero-mean Gaussians `N(0, Σ_s)` and `N(0, Σ_t)`:
/// `½ { log(|Σ_t| / |Σ_s|) + tr(Σ_t⁻¹ Σ_s) − C }`.
pub fn kl_divergence_gaussian(sigma_s: &SpatialCovariance, sigma_t: &SpatialCovariance) -> Result<f64> {
    let c = sigma_s.dim();
    if sigma_t.dim() != c {
        return Err(Error::dimension(format!("KL between {c}×{c} and {0}×{0}", sigma_t.dim())));
    }
    let ls = ridged_cholesky(sigma_s, "source")?;
    let lt = ridged_cholesky(sigma_t, "target")?;
    let logdet = |l: &DMatrix<f64>| 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    // tr(Σ_t⁻¹Σ_s) = ‖L_t⁻¹ L_s‖²_F
    let m = lt
        .solve_lower_triangular(&ls)
        .ok_or_else(|| Error::Conditioning("singular target factor".into()))?;
    let kl = 0.5 * (logdet(&lt) - logdet(&ls) + m.norm_squared() - c as f64);
    Ok(kl.max(0.0))
}

/// `α_z = (1/KL_z) / Σ_w (1/KL_w)` between each source's pooled covariance and the target's.
///
/// Zero divergences are clamped to [`MIN_KL`]; infinite ones get zero weight.
pub fn cm1_affinities(
    source_pooled: &[SpatialCovariance],
    target_pooled: &SpatialCovariance,
) -> Result<SourceAffinity> {
    if source_pooled.is_empty() {
        return Err(Error::config("CM1 needs at least one source subject"));
    }
    let kl = source_pooled
        .iter()
        .map(|s| kl_divergence_gaussian(s, target_pooled))
        .collect::<Result<Vec<_>>>()?;
    let inverse: Vec<f64> = kl
        .iter()
        .map(|&k| if k.is_finite() { 1.0 / k.max(MIN_KL) } else { 0.0 })
        .collect();
    let gamma: f64 = inverse.iter().sum();
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Affinity("every source divergence is infinite".into()));
    }
    Ok(SourceAffinity {
        alpha: inverse.iter().map(|v| v / gamma).collect(),
        kl,
    })
}

/// `(1 − λ)Σ_t + λ Σ_z α_z Σ_s^z` for one class.
pub fn cm1_combine(
    sigma_t: &SpatialCovariance,
    sigma_s: &[SpatialCovariance],
    affinity: &SourceAffinity,
    cfg: Cm1Config,
) -> Result<SpatialCovariance> {
    check_lambda(cfg.lambda)?;
    if sigma_s.len() != affinity.alpha.len() {
        return Err(Error::dimension(format!(
            "{} source covariances but {} affinities",
            sigma_s.len(),
            affinity.alpha.len()
        )));
    }
    if sigma_s.is_empty() {
        return Err(Error::config("CM1 needs at least one source subject"));
    }
    if sigma_s.iter().any(|s| s.dim() != sigma_t.dim()) {
        return Err(Error::dimension("source and target covariances differ in size"));
    }
    let lambda = cfg.lambda;
    SpatialCovariance::combination(
        std::iter::once((sigma_t, 1.0 - lambda))
            .chain(sigma_s.iter().zip(&affinity.alpha).map(|(s, a)| (s, lambda * a))),
    )
}

/// Source weight from target-only and selected-source accuracies.
///
/// The cases are tried in order: `targetAcc ≤ randAcc` gives 1,
/// `targetAcc ≥ selectedAcc` gives 0, otherwise
/// `(selectedAcc − targetAcc) / (1 − randAcc)`.
pub fn cm2_lambda(target_acc: f64, selected_acc: f64, rand_acc: f64) -> Result<f64> {
    if !(rand_acc < 1.0) || !target_acc.is_finite() || !selected_acc.is_finite() {
        return Err(Error::config(format!(
            "invalid accuracies (target {target_acc}, selected {selected_acc}, chance {rand_acc})"
        )));
    }
    Ok(if target_acc <= rand_acc {
        1.0
    } else if target_acc >= selected_acc {
        0.0
    } else {
        ((selected_acc - target_acc) / (1.0 - rand_acc)).clamp(0.0, 1.0)
    })
}

/// `(1 − λ)Σ_t + (λ/|S|) Σ_{z∈S} Σ_s^z` for one class.
pub fn cm2_combine(
    sigma_t: &SpatialCovariance,
    selected: &[SpatialCovariance],
    lambda: f64,
) -> Result<SpatialCovariance> {
    check_lambda(lambda)?;
    if selected.is_empty() {
        return Err(Error::config("CM2 needs at least one selected source subject"));
    }
    if selected.iter().any(|s| s.dim() != sigma_t.dim()) {
        return Err(Error::dimension("source and target covariances differ in size"));
    }
    let share = lambda / selected.len() as f64;
    SpatialCovariance::combination(
        std::iter::once((sigma_t, 1.0 - lambda)).chain(selected.iter().map(|s| (s, share))),
    )
}

/// Outcome of greedy source selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Selected source indices, ascending.
    pub subjects: Vec<usize>,
    /// Accuracy on the target samples of CSP+LDA trained on the selected sources only.
    pub accuracy: f64,
}

/// Greedy forward selection of source subjects.
///
/// Starting from the empty set, repeatedly adds the source whose inclusion
/// gives the highest target accuracy for CSP+LDA trained on the union of the
/// selected sources; stops when no addition strictly improves it. Ties go to
/// the lowest index. The first subject is always added, so the result is
/// never empty.
pub fn select_sources(
    target: &[Sample<'_>],
    sources: &[Vec<Sample<'_>>],
    filters_per_class: usize,
) -> Result<Selection> {
    if sources.is_empty() {
        return Err(Error::config("source selection needs at least one source subject"));
    }
    let mut selected: Vec<usize> = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut union: Vec<Sample<'_>> = Vec::new();
    while selected.len() < sources.len() {
        let mut candidate: Option<(usize, f64)> = None;
        for (z, extra) in sources.iter().enumerate() {
            if selected.contains(&z) {
                continue;
            }
            let mut trial = union.clone();
            trial.extend_from_slice(extra);
            let acc = train_csp_lda(&trial, filters_per_class)?.accuracy(target)?;
            if candidate.is_none_or(|(_, a)| acc > a) {
                candidate = Some((z, acc));
            }
        }
        let Some((z, acc)) = candidate else { break };
        if !selected.is_empty() && acc <= best {
            break;
        }
        selected.push(z);
        union.extend_from_slice(&sources[z]);
        best = acc;
    }
    selected.sort_unstable();
    Ok(Selection {
        subjects: selected,
        accuracy: best,
    })
}

/// Greedy source selection against the labeled target epochs.
pub fn cm2_select_subjects(
    target_labeled: &SubjectDataset,
    sources: &[SubjectDataset],
    filters_per_class: usize,
) -> Result<Vec<usize>> {
    let covs = |ds: &SubjectDataset| {
        ds.epochs()
            .iter()
            .map(|e| Ok((epoch_covariance(&e.epoch, true)?, e.label)))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.in_subject(ds.subject_id()))
    };
    let target_covs = covs(target_labeled)?;
    let source_covs = sources.iter().map(covs).collect::<Result<Vec<_>>>()?;
    let target: Vec<Sample<'_>> = target_covs.iter().map(|(c, l)| Sample::new(c, *l)).collect();
    let source_samples: Vec<Vec<Sample<'_>>> = source_covs
        .iter()
        .map(|s| s.iter().map(|(c, l)| Sample::new(c, *l)).collect())
        .collect();
    Ok(select_sources(&target, &source_samples, filters_per_class)?.subjects)
}

/// Leave-one-out accuracy of CSP+LDA trained on the target samples only.
///
/// Filters and classifier are refit for every fold, so the held-out sample
/// never influences its own prediction. Needs two samples per class.
pub fn target_loo_accuracy(target: &[Sample<'_>], filters_per_class: usize) -> Result<f64> {
    for label in Label::BOTH {
        let n = target.iter().filter(|s| s.label == label).count();
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "leave-one-out needs 2 samples of class {label}, have {n}"
            )));
        }
    }
    let mut correct = 0usize;
    let mut fold: Vec<Sample<'_>> = Vec::with_capacity(target.len() - 1);
    for (i, held) in target.iter().enumerate() {
        fold.clear();
        fold.extend(target.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, s)| *s));
        let model = train_csp_lda(&fold, filters_per_class)?;
        if model.predict_covariance(held.covariance)?.0 == held.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / target.len() as f64)
}
