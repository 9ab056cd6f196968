//! Common spatial pattern filters and log-variance features.
//!
//! The filter bank solves `Σ̄₀ w = λ (Σ̄₀ + Σ̄₁) w` with one symmetric
//! eigendecomposition: the composite matrix is whitened through its Cholesky
//! factor and the whitened class-0 covariance is diagonalized. Generalized
//! eigenvalues `λ ∈ [0, 1]` order the filters exactly as the eigenvalues
//! `μ = λ / (1 − λ)` of `Σ̄₁⁻¹Σ̄₀` do; the bank records `μ`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::data::{Epoch, SpatialCovariance};
use crate::error::{Error, Result};

pub const DEFAULT_FILTERS_PER_CLASS: usize = 3;

/// Relative ridge added to `Σ̄₀ + Σ̄₁` before whitening, scaled by `trace / C`.
pub const COMPOSITE_RIDGE: f64 = 1e-10;

/// C×2F filter matrix `[W₀ W₁]`.
///
/// Columns `0..F` favour class 0 (largest eigenvalues first), columns `F..2F`
/// favour class 1 (smallest eigenvalues first). Each column has unit norm and
/// its largest-magnitude entry is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct CspFilterBank {
    filters: DMatrix<f64>,
    filters_per_class: usize,
    eigenvalues: Vec<f64>,
}

impl CspFilterBank {
    /// Wraps an existing filter matrix; `eigenvalues` must have one entry per column.
    pub fn from_parts(filters: DMatrix<f64>, eigenvalues: Vec<f64>) -> Result<Self> {
        let k = filters.ncols();
        if k == 0 || k % 2 != 0 || eigenvalues.len() != k || k > filters.nrows() {
            return Err(Error::dimension(format!(
                "filter bank needs an even, nonzero column count <= C with one eigenvalue each, got {}×{k} and {} eigenvalues",
                filters.nrows(),
                eigenvalues.len()
            )));
        }
        Ok(CspFilterBank {
            filters,
            filters_per_class: k / 2,
            eigenvalues,
        })
    }

    pub fn channels(&self) -> usize {
        self.filters.nrows()
    }

    pub fn filters_per_class(&self) -> usize {
        self.filters_per_class
    }

    /// Number of filters, `2F`.
    pub fn len(&self) -> usize {
        self.filters.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.ncols() == 0
    }

    pub fn filters(&self) -> &DMatrix<f64> {
        &self.filters
    }

    pub fn class0_filters(&self) -> DMatrix<f64> {
        self.filters.columns(0, self.filters_per_class).into_owned()
    }

    pub fn class1_filters(&self) -> DMatrix<f64> {
        self.filters
            .columns(self.filters_per_class, self.filters_per_class)
            .into_owned()
    }

    /// Eigenvalues of `Σ̄₁⁻¹Σ̄₀` for each column: descending over `W₀`, ascending over `W₁`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Log-variance features of an epoch given its spatial covariance.
    ///
    /// Equal to projecting the epoch and calling [`log_variance_features`],
    /// because `diag(W*ᵀ X Xᵀ W*)` only depends on `X Xᵀ`; any positive scaling of
    /// the covariance cancels.
    pub fn features(&self, cov: &SpatialCovariance) -> Result<FeatureVector> {
        if cov.dim() != self.channels() {
            return Err(Error::dimension(format!(
                "covariance is {}×{}, filter bank expects {} channels",
                cov.dim(),
                cov.dim(),
                self.channels()
            )));
        }
        let projected = cov.matrix() * &self.filters;
        let powers: Vec<f64> = self
            .filters
            .column_iter()
            .zip(projected.column_iter())
            .map(|(w, sw)| w.dot(&sw))
            .collect();
        FeatureVector::from_powers(&powers)
    }
}

/// `X' = W*ᵀ X`, one row per filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredEpoch(pub DMatrix<f64>);

/// Log of each filtered signal's share of the total variance; all entries ≤ 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        FeatureVector(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn from_powers(powers: &[f64]) -> Result<Self> {
        if let Some(row) = powers.iter().position(|&p| !(p > 0.0)) {
            return Err(Error::DegenerateFeature { row });
        }
        let total: f64 = powers.iter().sum();
        Ok(FeatureVector(powers.iter().map(|p| (p / total).ln()).collect()))
    }
}

impl From<Vec<f64>> for FeatureVector {
    fn from(v: Vec<f64>) -> Self {
        FeatureVector(v)
    }
}

/// Solves the two-class generalized eigenproblem and keeps `F` filters per class.
pub fn compute_csp(
    sigma0: &SpatialCovariance,
    sigma1: &SpatialCovariance,
    filters_per_class: usize,
) -> Result<CspFilterBank> {
    let c = sigma0.dim();
    if sigma1.dim() != c {
        return Err(Error::dimension(format!(
            "class covariances are {c}×{c} and {0}×{0}",
            sigma1.dim()
        )));
    }
    if filters_per_class == 0 || 2 * filters_per_class > c {
        return Err(Error::dimension(format!(
            "2F = {} filters requested from {c} channels",
            2 * filters_per_class
        )));
    }

    let mut composite = sigma0.matrix() + sigma1.matrix();
    let trace = composite.trace();
    if !(trace > 0.0) || !trace.is_finite() {
        return Err(Error::Conditioning(format!("composite covariance has trace {trace}")));
    }
    let ridge = COMPOSITE_RIDGE * trace / c as f64;
    for i in 0..c {
        composite[(i, i)] += ridge;
    }
    let chol = Cholesky::new(composite).ok_or_else(|| {
        Error::Conditioning("composite covariance is not positive definite".into())
    })?;
    let l = chol.l();
    let diag_min = l.diagonal().min();
    let diag_max = l.diagonal().max();
    if !(diag_min > 0.0) || diag_min / diag_max < 1e-12 {
        return Err(Error::Conditioning(format!(
            "composite covariance is numerically singular (Cholesky diagonal ratio {:e})",
            diag_min / diag_max
        )));
    }

    // M₀ = L⁻¹ Σ̄₀ L⁻ᵀ has the generalized eigenvalues λ.
    let left = l.solve_lower_triangular(sigma0.matrix()).expect("nonzero diagonal");
    let both = l
        .solve_lower_triangular(&left.transpose())
        .expect("nonzero diagonal");
    let m0 = (&both + both.transpose()) * 0.5;

    let eig = SymmetricEigen::new(m0);
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let picks: Vec<usize> = order[..filters_per_class]
        .iter()
        .chain(order[c - filters_per_class..].iter().rev())
        .copied()
        .collect();

    let mut filters = DMatrix::<f64>::zeros(c, picks.len());
    let mut eigenvalues = Vec::with_capacity(picks.len());
    for (col, &k) in picks.iter().enumerate() {
        let v = eig.eigenvectors.column(k).into_owned();
        let w = canonical(
            l.transpose()
                .solve_upper_triangular(&v)
                .expect("nonzero diagonal"),
        );
        // Rayleigh quotient on the unridged matrices: the ridge only enters
        // through w, so its effect on μ is second order.
        let p0 = w.dot(&(sigma0.matrix() * &w));
        let p1 = w.dot(&(sigma1.matrix() * &w));
        eigenvalues.push(p0.max(0.0) / p1.max(f64::MIN_POSITIVE));
        filters.set_column(col, &w);
    }
    Ok(CspFilterBank {
        filters,
        filters_per_class,
        eigenvalues,
    })
}

/// Unit norm, largest-magnitude entry positive.
fn canonical(mut w: DVector<f64>) -> DVector<f64> {
    let norm = w.norm();
    if norm > 0.0 {
        w /= norm;
    }
    let pivot = w.iamax();
    if w[pivot] < 0.0 {
        w.neg_mut();
    }
    w
}

pub fn apply_filters(bank: &CspFilterBank, epoch: &Epoch) -> Result<FilteredEpoch> {
    if epoch.channels() != bank.channels() {
        return Err(Error::dimension(format!(
            "epoch has {} channels, filter bank expects {}",
            epoch.channels(),
            bank.channels()
        )));
    }
    Ok(FilteredEpoch(bank.filters().tr_mul(epoch.data())))
}

/// `xᵢ = log( (X'X'ᵀ)ᵢᵢ / tr(X'X'ᵀ) )`.
pub fn log_variance_features(filtered: &FilteredEpoch) -> Result<FeatureVector> {
    let powers: Vec<f64> = filtered.0.row_iter().map(|r| r.norm_squared()).collect();
    FeatureVector::from_powers(&powers)
}
