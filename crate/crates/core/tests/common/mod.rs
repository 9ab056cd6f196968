#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use tlcsp::data::{Epoch, Label, LabeledEpoch, SpatialCovariance};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| -> f64 { StandardNormal.sample(&mut *rng) })
}

/// `G·Gᵀ/c + shift·I` with Gaussian `G`, well conditioned for small `shift > 0`.
pub fn random_spd(c: usize, shift: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = gaussian(c, c, rng);
    let mut m = &g * g.transpose() / c as f64;
    for i in 0..c {
        m[(i, i)] += shift;
    }
    (&m + m.transpose()) * 0.5
}

pub fn spd_cov(c: usize, shift: f64, rng: &mut ChaCha8Rng) -> SpatialCovariance {
    SpatialCovariance::new(random_spd(c, shift, rng), false).unwrap()
}

pub fn random_epoch(c: usize, t: usize, rng: &mut ChaCha8Rng) -> Epoch {
    Epoch::new(gaussian(c, t, rng)).unwrap()
}

/// Epochs whose class shows up as extra power on channel 0 (class 0) or 1 (class 1).
pub fn separable_epochs(n_per_class: usize, c: usize, t: usize, rng: &mut ChaCha8Rng) -> Vec<LabeledEpoch> {
    let mut out = Vec::new();
    for k in 0..2 * n_per_class {
        let label = if k % 2 == 0 { Label::Zero } else { Label::One };
        let mut x = gaussian(c, t, rng);
        let boosted = label.index();
        let gain = 2.0 + rng.random::<f64>();
        x.row_mut(boosted).scale_mut(gain);
        out.push(LabeledEpoch::new(Epoch::new(x).unwrap(), label));
    }
    out
}

pub fn label_of(i: usize) -> Label {
    if i % 2 == 0 {
        Label::Zero
    } else {
        Label::One
    }
}

/// Eigenvalues of the nonsymmetric `Σ₁⁻¹Σ₀`, descending, from a general Schur solve.
pub fn brute_force_eigenvalues(s0: &DMatrix<f64>, s1: &DMatrix<f64>) -> Vec<f64> {
    let m = s1.clone().try_inverse().expect("invertible") * s0;
    let mut ev: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.re).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Unit vector spanning the (numerical) null space of `Σ₁⁻¹Σ₀ − μI`.
pub fn brute_force_eigenvector(s0: &DMatrix<f64>, s1: &DMatrix<f64>, mu: f64) -> nalgebra::DVector<f64> {
    let c = s0.nrows();
    let m = s1.clone().try_inverse().expect("invertible") * s0 - DMatrix::identity(c, c) * mu;
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let k = svd.singular_values.imin();
    v_t.row(k).transpose().normalize()
}

/// Sine of the angle between two vectors.
pub fn sin_angle(a: &nalgebra::DVector<f64>, b: &nalgebra::DVector<f64>) -> f64 {
    // Residual of `a` after projecting onto `b`; avoids the √ε floor of 1 − cos².
    let b = b.normalize();
    let a = a.normalize();
    (&a - &b * a.dot(&b)).norm()
}

/// Largest off-diagonal entry of `M` relative to `sqrt(M_ii M_jj)`.
pub fn relative_off_diagonal(m: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j {
                worst = worst.max(m[(i, j)].abs() / (m[(i, i)] * m[(j, j)]).abs().sqrt());
            }
        }
    }
    worst
}

/// Best squared loss over the simplex grid with the given step, for `Z ≤ 3` columns.
pub fn ma_grid_objective(p: &DMatrix<f64>, y: &[f64], step: f64) -> f64 {
    let z = p.ncols();
    let k = (1.0 / step).round() as usize;
    let loss = |w: &[f64]| -> f64 {
        (0..p.nrows())
            .map(|j| {
                let s: f64 = (0..z).map(|c| w[c] * p[(j, c)]).sum();
                (s - y[j]).powi(2)
            })
            .sum()
    };
    let mut best = f64::INFINITY;
    match z {
        1 => best = loss(&[1.0]),
        2 => {
            for a in 0..=k {
                let w0 = a as f64 / k as f64;
                best = best.min(loss(&[w0, 1.0 - w0]));
            }
        }
        3 => {
            for a in 0..=k {
                for b in 0..=(k - a) {
                    let w0 = a as f64 / k as f64;
                    let w1 = b as f64 / k as f64;
                    best = best.min(loss(&[w0, w1, (1.0 - w0 - w1).max(0.0)]));
                }
            }
        }
        _ => panic!("grid oracle handles at most 3 columns"),
    }
    best
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Median of all pairwise distances over `a ∪ b`, by sorting every pair.
pub fn brute_median(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let all: Vec<&Vec<f64>> = a.iter().chain(b).collect();
    let mut d = Vec::new();
    for i in 0..all.len() {
        for j in (i + 1)..all.len() {
            d.push(sq_dist(all[i], all[j]).sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let med = if n % 2 == 1 { d[n / 2] } else { 0.5 * (d[n / 2 - 1] + d[n / 2]) };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

/// `K`, `κ` and the linear scale `n/m` of the kernel mean matching objective.
pub fn kmm_terms(src: &[Vec<f64>], tgt: &[Vec<f64>], sigma: f64) -> (DMatrix<f64>, Vec<f64>, f64) {
    let k = |a: &[f64], b: &[f64]| (-sq_dist(a, b) / (2.0 * sigma * sigma)).exp();
    let n = src.len();
    let kk = DMatrix::from_fn(n, n, |i, j| k(&src[i], &src[j]));
    let kappa = src.iter().map(|s| tgt.iter().map(|t| k(s, t)).sum()).collect();
    (kk, kappa, n as f64 / tgt.len() as f64)
}

pub fn kmm_objective(kk: &DMatrix<f64>, kappa: &[f64], scale: f64, beta: &[f64]) -> f64 {
    let n = beta.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += beta[i] * kk[(i, j)] * beta[j];
        }
    }
    0.5 * quad - scale * kappa.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>()
}

/// Best objective over the grid `{0, step, 2·step, …}ⁿ ∩ [0, b]ⁿ` restricted to the sum band, `n ≤ 3`.
pub fn kmm_grid_objective(kk: &DMatrix<f64>, kappa: &[f64], scale: f64, b: f64, eps: f64, step: f64) -> f64 {
    let n = kappa.len();
    let lo = n as f64 * (1.0 - eps);
    let hi = n as f64 * (1.0 + eps);
    let top = (b.min(hi) / step).floor() as usize;
    // Grid sums are compared with a little slack so points on the band edge count.
    let slack = 1e-9;
    let in_band = |s: f64| s >= lo - slack && s <= hi + slack;
    let mut best = f64::INFINITY;
    match n {
        1 => {
            for a in 0..=top {
                let x = a as f64 * step;
                if in_band(x) {
                    best = best.min(kmm_objective(kk, kappa, scale, &[x]));
                }
            }
        }
        2 => {
            for a in 0..=top {
                for c in 0..=top {
                    let x = [a as f64 * step, c as f64 * step];
                    if in_band(x[0] + x[1]) {
                        best = best.min(kmm_objective(kk, kappa, scale, &x));
                    }
                }
            }
        }
        3 => {
            let (k00, k01, k02, k11, k12, k22) = (kk[(0, 0)], kk[(0, 1)], kk[(0, 2)], kk[(1, 1)], kk[(1, 2)], kk[(2, 2)]);
            for a in 0..=top {
                let x0 = a as f64 * step;
                for c in 0..=top {
                    let x1 = c as f64 * step;
                    if x0 + x1 > hi + slack {
                        break;
                    }
                    let partial = 0.5 * (k00 * x0 * x0 + k11 * x1 * x1) + k01 * x0 * x1 - scale * (kappa[0] * x0 + kappa[1] * x1);
                    for e in 0..=top {
                        let x2 = e as f64 * step;
                        let s = x0 + x1 + x2;
                        if s > hi + slack {
                            break;
                        }
                        if s < lo - slack {
                            continue;
                        }
                        let f = partial + 0.5 * k22 * x2 * x2 + (k02 * x0 + k12 * x1) * x2 - scale * kappa[2] * x2;
                        best = best.min(f);
                    }
                }
            }
        }
        _ => panic!("grid oracle handles at most 3 samples"),
    }
    best
}

/// Points drawn around `center` with the given spread.
pub fn cluster(center: &[f64], spread: f64, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            center
                .iter()
                .map(|c| c + spread * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
                .collect()
        })
        .collect()
}

/// Whether a recorded objective history never increases, up to `tol` relative.
pub fn is_monotone(history: &[f64], tol: f64) -> bool {
    history
        .windows(2)
        .all(|p| p[1] <= p[0] + tol * p[0].abs().max(1.0))
}
