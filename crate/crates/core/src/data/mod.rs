//! Epochs, subject datasets and spatial covariance estimation.
//!
//! Epochs are assumed zero-mean (they come out of a band-pass filter), so the
//! covariance of an epoch is simply `X·Xᵀ`, optionally divided by its trace.
//! Class means are Euclidean (arithmetic) means of trace-normalized
//! per-epoch covariances.

mod format;
mod synth;

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};

pub use format::{
    load_corpus, load_subject, read_subject, save_corpus, save_subject, subject_file_name, write_subject, HEADER_LEN, MAGIC,
    VERSION,
};
pub use synth::{generate_synthetic, SynthConfig, SyntheticCorpus};

use crate::error::{Error, Result};

/// Binary class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Zero,
    One,
}

impl Label {
    pub const BOTH: [Label; 2] = [Label::Zero, Label::One];

    pub fn from_u8(value: u8) -> Option<Label> {
        match value {
            0 => Some(Label::Zero),
            1 => Some(Label::One),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Label::Zero => 0,
            Label::One => 1,
        }
    }

    pub fn index(self) -> usize {
        self.as_u8() as usize
    }

    /// `-1` for class 0, `+1` for class 1.
    pub fn sign(self) -> f64 {
        match self {
            Label::Zero => -1.0,
            Label::One => 1.0,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// One C×T block of band-passed EEG; rows are channels, columns are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    data: DMatrix<f64>,
}

impl Epoch {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        let (c, t) = data.shape();
        if c < 2 || t < 2 {
            return Err(Error::dimension(format!(
                "epoch must have at least 2 channels and 2 samples, got {c}×{t}"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("epoch contains non-finite samples"));
        }
        Ok(Epoch { data })
    }

    /// Builds an epoch from channel-major samples (all of channel 0, then channel 1, ...).
    pub fn from_row_major(channels: usize, samples: usize, values: &[f64]) -> Result<Self> {
        if values.len() != channels * samples {
            return Err(Error::dimension(format!(
                "expected {} samples for a {channels}×{samples} epoch, got {}",
                channels * samples,
                values.len()
            )));
        }
        Epoch::new(DMatrix::from_row_slice(channels, samples, values))
    }

    pub fn channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEpoch {
    pub epoch: Epoch,
    pub label: Label,
}

impl LabeledEpoch {
    pub fn new(epoch: Epoch, label: Label) -> Self {
        LabeledEpoch { epoch, label }
    }
}

/// All epochs recorded from one subject, in recording order.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectDataset {
    subject_id: String,
    epochs: Vec<LabeledEpoch>,
}

impl SubjectDataset {
    pub fn new(subject_id: impl Into<String>, epochs: Vec<LabeledEpoch>) -> Result<Self> {
        let subject_id = subject_id.into();
        let Some(first) = epochs.first() else {
            return Err(Error::config(format!("subject {subject_id} has no epochs")));
        };
        let shape = (first.epoch.channels(), first.epoch.samples());
        if let Some((i, e)) = epochs
            .iter()
            .enumerate()
            .find(|(_, e)| (e.epoch.channels(), e.epoch.samples()) != shape)
        {
            return Err(Error::dimension(format!(
                "subject {subject_id}: epoch {i} is {}×{}, expected {}×{}",
                e.epoch.channels(),
                e.epoch.samples(),
                shape.0,
                shape.1
            )));
        }
        Ok(SubjectDataset { subject_id, epochs })
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn epochs(&self) -> &[LabeledEpoch] {
        &self.epochs
    }

    pub fn channels(&self) -> usize {
        self.epochs[0].epoch.channels()
    }

    pub fn samples(&self) -> usize {
        self.epochs[0].epoch.samples()
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.epochs.iter().filter(|e| e.label == label).count()
    }
}

/// A C×C symmetric positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialCovariance {
    matrix: DMatrix<f64>,
    normalized: bool,
}

impl SpatialCovariance {
    /// Wraps a matrix, checking squareness, finiteness and symmetry (1e-12 relative).
    ///
    /// Positive semidefiniteness costs an eigendecomposition and is checked
    /// separately by [`SpatialCovariance::check_psd`].
    pub fn new(matrix: DMatrix<f64>, normalized: bool) -> Result<Self> {
        let (r, c) = matrix.shape();
        if r != c || r == 0 {
            return Err(Error::dimension(format!("covariance must be square, got {r}×{c}")));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Conditioning("covariance has non-finite entries".into()));
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        for i in 0..r {
            for j in (i + 1)..r {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::config(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        if normalized && (matrix.trace() - 1.0).abs() > 1e-12 {
            return Err(Error::config(format!(
                "normalized covariance has trace {}",
                matrix.trace()
            )));
        }
        Ok(SpatialCovariance { matrix, normalized })
    }

    pub(crate) fn new_unchecked(matrix: DMatrix<f64>, normalized: bool) -> Self {
        SpatialCovariance { matrix, normalized }
    }

    pub fn identity(dim: usize) -> Self {
        SpatialCovariance::new_unchecked(DMatrix::identity(dim, dim), false)
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let n = values.len();
        SpatialCovariance::new(DMatrix::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 }), false)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Fails unless the smallest eigenvalue is at least `-1e-10 · trace`.
    pub fn check_psd(&self) -> Result<()> {
        let min = self.min_eigenvalue();
        if min < -1e-10 * self.trace().abs() {
            return Err(Error::Conditioning(format!(
                "covariance is not positive semidefinite (min eigenvalue {min:e})"
            )));
        }
        Ok(())
    }

    /// Copy of this matrix scaled to unit trace.
    pub fn trace_normalized(&self) -> Result<Self> {
        let tr = self.trace();
        if !(tr > 0.0) {
            return Err(Error::DegenerateEpoch);
        }
        Ok(SpatialCovariance::new_unchecked(&self.matrix / tr, true))
    }

    /// Linear combination `Σ cᵢ·Σᵢ` of same-sized covariances.
    ///
    /// Callers pass nonnegative coefficients, which keeps the result PSD.
    pub fn combination<'a, I>(terms: I) -> Result<SpatialCovariance>
    where
        I: IntoIterator<Item = (&'a SpatialCovariance, f64)>,
    {
        let mut acc: Option<DMatrix<f64>> = None;
        let mut all_normalized = true;
        for (cov, coef) in terms {
            all_normalized &= cov.normalized;
            match acc.as_mut() {
                None => acc = Some(&cov.matrix * coef),
                Some(sum) => {
                    if sum.shape() != cov.matrix.shape() {
                        return Err(Error::dimension(format!(
                            "cannot combine {}×{} and {}×{} covariances",
                            sum.nrows(),
                            sum.ncols(),
                            cov.dim(),
                            cov.dim()
                        )));
                    }
                    sum.zip_apply(&cov.matrix, |a, b| *a += coef * b);
                }
            }
        }
        let matrix = acc.ok_or_else(|| Error::config("empty covariance combination"))?;
        // A convex combination of unit-trace matrices has unit trace up to rounding.
        let normalized = all_normalized && (matrix.trace() - 1.0).abs() <= 1e-12;
        Ok(SpatialCovariance::new_unchecked(matrix, normalized))
    }
}

/// `X·Xᵀ`, divided by its trace when `normalize` is set.
///
/// Only the upper triangle is computed; the lower one is mirrored, so the
/// result is exactly symmetric.
pub fn epoch_covariance(epoch: &Epoch, normalize: bool) -> Result<SpatialCovariance> {
    let x = epoch.data();
    let c = x.nrows();
    let mut m = DMatrix::<f64>::zeros(c, c);
    // Columns of a DMatrix are contiguous; accumulate sample by sample.
    for col in x.column_iter() {
        for j in 0..c {
            let xj = col[j];
            if xj == 0.0 {
                continue;
            }
            for i in 0..=j {
                m[(i, j)] += col[i] * xj;
            }
        }
    }
    for j in 0..c {
        for i in 0..j {
            m[(j, i)] = m[(i, j)];
        }
    }
    if normalize {
        let tr = m.trace();
        if !(tr > 0.0) {
            return Err(Error::DegenerateEpoch);
        }
        m /= tr;
    }
    Ok(SpatialCovariance::new_unchecked(m, normalize))
}

/// Weighted Euclidean mean of covariances, `Σ wᵢΣᵢ / Σ wᵢ`.
///
/// An empty iterator is an empty-class error for `label`; all-zero weights a zero-weight error.
pub(crate) fn weighted_mean<'a, I>(items: I, label: Label) -> Result<SpatialCovariance>
where
    I: IntoIterator<Item = (&'a SpatialCovariance, f64)>,
{
    let mut sum: Option<DMatrix<f64>> = None;
    let mut total = 0.0;
    let mut normalized = true;
    for (cov, w) in items {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::config(format!("invalid epoch weight {w}")));
        }
        normalized &= cov.normalized;
        match sum.as_mut() {
            None => sum = Some(&cov.matrix * w),
            Some(s) => {
                if s.shape() != cov.matrix.shape() {
                    return Err(Error::dimension("covariances of different sizes in one mean"));
                }
                s.zip_apply(&cov.matrix, |a, b| *a += w * b);
            }
        }
        total += w;
    }
    let sum = sum.ok_or(Error::EmptyClass(label))?;
    if total <= 0.0 {
        return Err(Error::ZeroWeight(label));
    }
    let mean = sum / total;
    let normalized = normalized && (mean.trace() - 1.0).abs() <= 1e-12;
    Ok(SpatialCovariance::new_unchecked(mean, normalized))
}

/// Weighted mean of the trace-normalized covariances of one class.
///
/// `weights`, when given, has one nonnegative entry per epoch of `epochs`
/// (of either class); missing weights default to 1.
pub fn class_mean_covariance(
    epochs: &[LabeledEpoch],
    class: Label,
    weights: Option<&[f64]>,
) -> Result<SpatialCovariance> {
    if let Some(w) = weights {
        if w.len() != epochs.len() {
            return Err(Error::dimension(format!(
                "{} weights for {} epochs",
                w.len(),
                epochs.len()
            )));
        }
    }
    let covs = epochs
        .iter()
        .enumerate()
        .filter(|(_, e)| e.label == class)
        .map(|(i, e)| Ok((epoch_covariance(&e.epoch, true)?, weights.map_or(1.0, |w| w[i]))))
        .collect::<Result<Vec<_>>>()?;
    weighted_mean(covs.iter().map(|(c, w)| (c, *w)), class)
}
