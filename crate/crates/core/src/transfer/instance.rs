//! Instance-based transfer (IA): kernel mean matching weights for source
//! epochs, then CSP+LDA trained on target epochs plus reweighted source epochs.
//!
//! Each epoch is represented by its trace-normalized covariance, vectorized
//! as the upper triangle with off-diagonal entries scaled by `√2` so that
//! Euclidean distances between representations equal Frobenius distances
//! between covariances. A Gaussian kernel over these vectors defines the
//! quadratic program
//!
//! ```text
//! min_β  ½ βᵀKβ − (n/m) κᵀβ
//! s.t.   0 ≤ β_j ≤ b,   |Σ β_j − n| ≤ nε
//! ```
//!
//! with `K_ij = k(x_s^i, x_s^j)` and `κ_i = Σ_j k(x_s^i, x_t^j)`.

use nalgebra::{DMatrix, DVector};

use crate::csp::CspFilterBank;
use crate::data::{epoch_covariance, Epoch, LabeledEpoch, SpatialCovariance};
use crate::error::{Error, Result};
use crate::lda::LdaModel;
use crate::pipeline::{train_csp_lda, Sample};
use crate::qp::{minimize_quadratic, BoxSumBand, SolverOptions};

pub const DEFAULT_UPPER_BOUND: f64 = 1000.0;
pub const MAX_ITERATIONS: usize = 10_000;
pub const TOLERANCE: f64 = 1e-12;
/// Ridge on `K`, relative to the mean of its diagonal.
pub const KERNEL_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Median pairwise distance over source ∪ target representations.
    Median,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmmConfig {
    /// Box bound `b`.
    pub upper_bound: f64,
    /// Sum slack `ε`; `None` uses `(√n − 1)/√n`.
    pub epsilon: Option<f64>,
    pub bandwidth: Bandwidth,
}

impl Default for KmmConfig {
    fn default() -> Self {
        KmmConfig {
            upper_bound: DEFAULT_UPPER_BOUND,
            epsilon: None,
            bandwidth: Bandwidth::Median,
        }
    }
}

impl KmmConfig {
    pub fn epsilon_for(&self, n: usize) -> f64 {
        self.epsilon.unwrap_or_else(|| {
            let r = (n as f64).sqrt();
            (r - 1.0) / r
        })
    }

    fn validate(&self, n: usize) -> Result<()> {
        if !(self.upper_bound > 0.0) {
            return Err(Error::config(format!("KMM bound b must be positive, got {}", self.upper_bound)));
        }
        let eps = self.epsilon_for(n);
        if !(eps >= 0.0) {
            return Err(Error::config(format!("KMM slack epsilon must be >= 0, got {eps}")));
        }
        if (1.0 - eps) * n as f64 > self.upper_bound * n as f64 {
            return Err(Error::config("KMM constraints are infeasible: n(1 - eps) > n·b"));
        }
        if let Bandwidth::Fixed(s) = self.bandwidth {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config(format!("kernel bandwidth must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

/// Source-epoch weights `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceWeights {
    beta: Vec<f64>,
    /// `½ βᵀKβ − (n/m)κᵀβ` at `beta` (without the ridge); NaN when not solved for.
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub bandwidth: f64,
    /// Ridged objective after each accepted solver iteration.
    pub history: Vec<f64>,
}

impl InstanceWeights {
    pub fn new(beta: Vec<f64>) -> Result<Self> {
        if beta.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
            return Err(Error::config("instance weights must be finite and nonnegative"));
        }
        Ok(InstanceWeights {
            beta,
            objective: f64::NAN,
            converged: true,
            iterations: 0,
            bandwidth: f64::NAN,
            history: Vec::new(),
        })
    }

    /// `β = 1` for every source epoch.
    pub fn uniform(n: usize) -> Self {
        InstanceWeights::new(vec![1.0; n]).expect("ones are valid weights")
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.beta
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }
}

/// √2-scaled upper triangle (row by row) of a covariance matrix.
pub fn covariance_representation(cov: &SpatialCovariance) -> Vec<f64> {
    let m = cov.matrix();
    let c = m.nrows();
    let mut v = Vec::with_capacity(c * (c + 1) / 2);
    for i in 0..c {
        v.push(m[(i, i)]);
        for j in (i + 1)..c {
            v.push(m[(i, j)] * std::f64::consts::SQRT_2);
        }
    }
    v
}

pub fn kmm_representation(epoch: &Epoch) -> Result<Vec<f64>> {
    Ok(covariance_representation(&epoch_covariance(epoch, true)?))
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn fallback(median: f64) -> f64 {
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

/// Median pairwise Euclidean distance, or 1 when that median is zero.
pub fn median_bandwidth(reps: &[Vec<f64>]) -> Result<f64> {
    if reps.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "median bandwidth needs at least 2 vectors, got {}",
            reps.len()
        )));
    }
    let mut d = Vec::with_capacity(reps.len() * (reps.len() - 1) / 2);
    for i in 0..reps.len() {
        for j in (i + 1)..reps.len() {
            d.push(squared_distance(&reps[i], &reps[j]).sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    Ok(fallback(median_sorted(&d)))
}

/// Element `k` (0-based) of the merge of two ascending slices.
fn kth_of_merged(a: &[f64], b: &[f64], k: usize) -> f64 {
    debug_assert!(k < a.len() + b.len());
    let mut lo = (k + 1).saturating_sub(b.len());
    let mut hi = (k + 1).min(a.len());
    loop {
        let i = lo + (hi - lo) / 2;
        let j = k + 1 - i;
        if i < hi && j > 0 && b[j - 1] > a[i] {
            lo = i + 1;
        } else if i > lo && j < b.len() && a[i - 1] > b[j] {
            hi = i - 1;
        } else {
            let from_a = if i > 0 { a[i - 1] } else { f64::NEG_INFINITY };
            let from_b = if j > 0 { b[j - 1] } else { f64::NEG_INFINITY };
            return from_a.max(from_b);
        }
    }
}

/// Source representations with their pairwise distances cached, so the
/// weights against many target sets share the O(n²·d) distance work.
#[derive(Debug, Clone)]
pub struct SourceGeometry {
    reps: Vec<Vec<f64>>,
    sq_dist: DMatrix<f64>,
    sorted_dist: Vec<f64>,
}

impl SourceGeometry {
    pub fn new(reps: Vec<Vec<f64>>) -> Result<Self> {
        let n = reps.len();
        if n == 0 {
            return Err(Error::InsufficientData("KMM needs at least one source sample".into()));
        }
        let d = reps[0].len();
        if reps.iter().any(|r| r.len() != d) {
            return Err(Error::dimension("source representations differ in length"));
        }
        let mut sq_dist = DMatrix::zeros(n, n);
        let mut sorted_dist = Vec::with_capacity(n * (n - 1) / 2);
        for j in 0..n {
            for i in 0..j {
                let v = squared_distance(&reps[i], &reps[j]);
                sq_dist[(i, j)] = v;
                sq_dist[(j, i)] = v;
                sorted_dist.push(v.sqrt());
            }
        }
        sorted_dist.sort_by(f64::total_cmp);
        Ok(SourceGeometry {
            reps,
            sq_dist,
            sorted_dist,
        })
    }

    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    /// Solves for `β` against the target representations, starting from `β = 1`.
    pub fn weights(&self, target: &[Vec<f64>], cfg: &KmmConfig) -> Result<InstanceWeights> {
        self.weights_from(target, cfg, None)
    }

    /// Like [`weights`](Self::weights), but starts the solver from `start`
    /// (projected onto the feasible set). The problem is strictly convex, so
    /// the start only changes how many iterations are needed.
    pub fn weights_from(&self, target: &[Vec<f64>], cfg: &KmmConfig, start: Option<&[f64]>) -> Result<InstanceWeights> {
        let n = self.reps.len();
        if let Some(x0) = start {
            if x0.len() != n {
                return Err(Error::dimension(format!("start has {} weights for {n} source samples", x0.len())));
            }
        }
        let m = target.len();
        if m == 0 {
            return Err(Error::InsufficientData("KMM needs at least one target sample".into()));
        }
        let dim = self.reps[0].len();
        if target.iter().any(|t| t.len() != dim) {
            return Err(Error::dimension("target representations differ in length from the source ones"));
        }
        cfg.validate(n)?;

        let cross = DMatrix::from_fn(n, m, |i, j| squared_distance(&self.reps[i], &target[j]));
        let sigma = match cfg.bandwidth {
            Bandwidth::Fixed(s) => s,
            Bandwidth::Median => {
                let mut extra: Vec<f64> = cross.iter().map(|v| v.sqrt()).collect();
                for i in 0..m {
                    for j in (i + 1)..m {
                        extra.push(squared_distance(&target[i], &target[j]).sqrt());
                    }
                }
                extra.sort_by(f64::total_cmp);
                let total = self.sorted_dist.len() + extra.len();
                let median = if total % 2 == 1 {
                    kth_of_merged(&self.sorted_dist, &extra, total / 2)
                } else {
                    0.5 * (kth_of_merged(&self.sorted_dist, &extra, total / 2 - 1)
                        + kth_of_merged(&self.sorted_dist, &extra, total / 2))
                };
                fallback(median)
            }
        };
        let gamma = 1.0 / (2.0 * sigma * sigma);

        let kernel = self.sq_dist.map(|d| (-gamma * d).exp());
        let kappa = DVector::from_iterator(n, cross.row_iter().map(|r| r.iter().map(|d| (-gamma * d).exp()).sum::<f64>()));
        let scale = n as f64 / m as f64;
        let linear = &kappa * -scale;

        let ridge = KERNEL_RIDGE * kernel.diagonal().mean();
        let mut q = kernel.clone();
        for i in 0..n {
            q[(i, i)] += ridge;
        }
        let eps = cfg.epsilon_for(n);
        let band = BoxSumBand {
            upper: cfg.upper_bound,
            lower_sum: n as f64 * (1.0 - eps),
            upper_sum: n as f64 * (1.0 + eps),
        };
        let sol = minimize_quadratic(
            &q,
            &linear,
            start.map_or_else(|| DVector::from_element(n, 1.0), DVector::from_column_slice),
            &band,
            SolverOptions {
                max_iterations: MAX_ITERATIONS,
                tolerance: TOLERANCE,
            },
        );
        let objective = 0.5 * sol.x.dot(&(&kernel * &sol.x)) + linear.dot(&sol.x);
        Ok(InstanceWeights {
            beta: sol.x.iter().copied().collect(),
            objective,
            converged: sol.converged,
            iterations: sol.iterations,
            bandwidth: sigma,
            history: sol.history,
        })
    }
}

/// Kernel mean matching weights for `source_reps` against `target_reps`.
pub fn kmm_weights(source_reps: &[Vec<f64>], target_reps: &[Vec<f64>], cfg: &KmmConfig) -> Result<InstanceWeights> {
    SourceGeometry::new(source_reps.to_vec())?.weights(target_reps, cfg)
}

/// CSP and LDA from target epochs (weight 1) plus source epochs weighted by `β`.
///
/// Class means and LDA statistics use the same weights; `β` is applied within
/// whichever class each source epoch belongs to.
pub fn weighted_fused_training(
    target_labeled: &[LabeledEpoch],
    source_labeled: &[LabeledEpoch],
    beta: &InstanceWeights,
    filters_per_class: usize,
) -> Result<(CspFilterBank, LdaModel)> {
    if beta.len() != source_labeled.len() {
        return Err(Error::dimension(format!(
            "{} instance weights for {} source epochs",
            beta.len(),
            source_labeled.len()
        )));
    }
    let covs = target_labeled
        .iter()
        .chain(source_labeled)
        .map(|e| epoch_covariance(&e.epoch, true))
        .collect::<Result<Vec<_>>>()?;
    let weights = std::iter::repeat_n(1.0, target_labeled.len()).chain(beta.as_slice().iter().copied());
    let samples: Vec<Sample<'_>> = covs
        .iter()
        .zip(target_labeled.iter().chain(source_labeled))
        .zip(weights)
        .map(|((c, e), w)| Sample::weighted(c, e.label, w))
        .collect();
    let model = train_csp_lda(&samples, filters_per_class)?;
    Ok((model.bank, model.lda))
}
