//! Projected gradient for convex quadratics over a box intersected with a
//! band on the coordinate sum.
//!
//! Minimizes `½ xᵀQx + cᵀx`. Each iteration takes a Barzilai–Borwein trial
//! step, projects it, and line-searches exactly along the segment from the
//! current iterate to the projected point. Once two consecutive iterates
//! share the same free coordinates, a truncated conjugate gradient step on
//! that face is tried as well, projected back onto the set and halved until
//! it decreases the objective. Both moves keep the iterate feasible and never
//! increase the objective.

use nalgebra::{DMatrix, DVector};

/// Euclidean projection onto a closed convex set of the form
/// `{0 ≤ x ≤ upper, lower_sum ≤ Σx ≤ upper_sum}`.
pub trait Projection {
    fn project(&self, v: &mut DVector<f64>);

    /// The same set, described by its bounds.
    fn bounds(&self) -> BoxSumBand;
}

/// The probability simplex `{x ≥ 0, Σx = 1}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Simplex;

impl Projection for Simplex {
    fn project(&self, v: &mut DVector<f64>) {
        project_simplex(v);
    }

    fn bounds(&self) -> BoxSumBand {
        BoxSumBand {
            upper: 1.0,
            lower_sum: 1.0,
            upper_sum: 1.0,
        }
    }
}

/// Sort-and-threshold projection onto the probability simplex.
pub fn project_simplex(v: &mut DVector<f64>) {
    let n = v.len();
    if n == 0 {
        return;
    }
    let mut sorted: Vec<f64> = v.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    v.apply(|x| *x = (*x - theta).max(0.0));
}

/// Box `[0, upper]ⁿ` intersected with the band `lower_sum ≤ Σx ≤ upper_sum`.
///
/// The projection is `clamp(v − τ, 0, upper)`, where the shift `τ` is zero if
/// the clamped sum already lies in the band and is otherwise found by
/// bisection on the clamped-sum equation.
#[derive(Debug, Clone, Copy)]
pub struct BoxSumBand {
    pub upper: f64,
    pub lower_sum: f64,
    pub upper_sum: f64,
}

impl BoxSumBand {
    fn clamped_sum(&self, v: &DVector<f64>, tau: f64) -> f64 {
        v.iter().map(|x| (x - tau).clamp(0.0, self.upper)).sum()
    }

    /// Bisects for the shift whose clamped sum hits `target`, returning the
    /// endpoint on the feasible side of the band.
    fn shift_for(&self, v: &DVector<f64>, target: f64, above: bool) -> f64 {
        let mut lo = v.min() - self.upper;
        let mut hi = v.max();
        // clamped_sum(lo) = n·upper, clamped_sum(hi) = 0; the sum decreases in τ.
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.clamped_sum(v, mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // `hi` has sum ≤ target, `lo` has sum ≥ target.
        if above {
            hi
        } else {
            lo
        }
    }
}

impl Projection for BoxSumBand {
    fn project(&self, v: &mut DVector<f64>) {
        let s0 = self.clamped_sum(v, 0.0);
        let tau = if s0 > self.upper_sum {
            self.shift_for(v, self.upper_sum, true)
        } else if s0 < self.lower_sum {
            self.shift_for(v, self.lower_sum, false)
        } else {
            0.0
        };
        let upper = self.upper;
        v.apply(|x| *x = (*x - tau).clamp(0.0, upper));
    }

    fn bounds(&self) -> BoxSumBand {
        *self
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Stop once an iteration improves the objective by less than
    /// `tolerance · max(1, |f|)`.
    pub tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// `½ xᵀQx + cᵀx` at `x`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at the start point and after every accepted iteration.
    pub history: Vec<f64>,
}

fn quadratic(q: &DMatrix<f64>, c: &DVector<f64>, x: &DVector<f64>) -> f64 {
    0.5 * x.dot(&(q * x)) + c.dot(x)
}

/// Coordinates strictly inside `(0, upper)`.
fn free_set(x: &DVector<f64>, upper: f64) -> Vec<usize> {
    let tol = 1e-12 * upper.max(1.0);
    (0..x.len()).filter(|&i| x[i] > tol && x[i] < upper - tol).collect()
}

/// Conjugate gradient iterations per face step.
const FACE_CG_ITERATIONS: usize = 50;

/// Approximate Newton direction on the face of `x`: conjugate gradient on
/// the free coordinates, keeping the fixed ones (and, when `fix_sum` is set,
/// the coordinate sum) unchanged.
fn face_direction(q: &DMatrix<f64>, g: &DVector<f64>, free: &[usize], fix_sum: bool) -> DVector<f64> {
    let h = q.select_rows(free).select_columns(free);
    let project = |v: &mut DVector<f64>| {
        if fix_sum {
            let mean = v.mean();
            v.add_scalar_mut(-mean);
        }
    };
    let mut d = DVector::zeros(free.len());
    let mut r = -DVector::from_iterator(free.len(), free.iter().map(|&i| g[i]));
    project(&mut r);
    let mut p = r.clone();
    let mut rr = r.norm_squared();
    let stop = 1e-20 * rr;
    for _ in 0..FACE_CG_ITERATIONS {
        if rr <= stop || rr == 0.0 {
            break;
        }
        let mut hp = &h * &p;
        let curvature = p.dot(&hp);
        if !(curvature > 0.0) {
            break;
        }
        project(&mut hp);
        let alpha = rr / curvature;
        d.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &hp, 1.0);
        let rr_next = r.norm_squared();
        p = &r + &p * (rr_next / rr);
        rr = rr_next;
    }
    d
}

/// Minimizes `½ xᵀQx + cᵀx` over the set described by `projection`, starting from `x0`.
///
/// `Q` must be symmetric positive semidefinite.
pub fn minimize_quadratic<P: Projection>(
    q: &DMatrix<f64>,
    c: &DVector<f64>,
    x0: DVector<f64>,
    projection: &P,
    opts: SolverOptions,
) -> QpSolution {
    let set = projection.bounds();
    let mut x = x0;
    projection.project(&mut x);
    let mut g = q * &x + c;
    let mut f = quadratic(q, c, &x);
    let mut history = vec![f];

    // The inverse of the largest absolute row sum bounds 1/λmax(Q) from below.
    let row_bound = q
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut step = if row_bound > 0.0 { 1.0 / row_bound } else { 1.0 };

    let mut converged = false;
    let mut iterations = 0;
    let mut previous_free: Option<Vec<usize>> = None;
    while iterations < opts.max_iterations {
        iterations += 1;
        let f_start = f;

        let mut trial = &x - &g * step;
        projection.project(&mut trial);
        let d = trial - &x;
        let stationary = d.amax() <= f64::EPSILON * x.amax().max(1.0);
        let mut moved = false;
        if !stationary {
            let qd = q * &d;
            let slope = g.dot(&d);
            let curvature = d.dot(&qd);
            if slope < 0.0 {
                let t = if curvature > 0.0 { (-slope / curvature).min(1.0) } else { 1.0 };
                x += &d * t;
                g += &qd * t;
                // Exact along the segment; saves a second product with Q.
                f += t * slope + 0.5 * t * t * curvature;
                let ss = t * t * d.norm_squared();
                let sy = t * t * curvature;
                step = if sy > 0.0 { (ss / sy).clamp(1e-30, 1e30) } else { step * 2.0 };
                moved = true;
            }
        }
        if stationary || !moved {
            converged = true;
            break;
        }

        let free = free_set(&x, set.upper);
        if !free.is_empty() && previous_free.as_ref() == Some(&free) {
            face_step(q, &mut x, &mut g, &mut f, &free, &set, projection);
        }
        previous_free = Some(free);

        history.push(f);
        if f_start - f < opts.tolerance * f.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    let objective = quadratic(q, c, &x);
    QpSolution {
        x,
        objective,
        iterations,
        converged,
        history,
    }
}

/// Step along the face direction, projected back onto the feasible set and
/// halved until it decreases the objective sufficiently. Returns whether `x`
/// changed.
fn face_step<P: Projection>(
    q: &DMatrix<f64>,
    x: &mut DVector<f64>,
    g: &mut DVector<f64>,
    f: &mut f64,
    free: &[usize],
    set: &BoxSumBand,
    projection: &P,
) -> bool {
    let sum = x.sum();
    let sum_tol = 1e-9 * sum.abs().max(1.0);
    let fix_sum = sum <= set.lower_sum + sum_tol || sum >= set.upper_sum - sum_tol;
    let d = face_direction(q, g, free, fix_sum);
    if free.iter().zip(d.iter()).map(|(&i, di)| g[i] * di).sum::<f64>() >= 0.0 {
        return false;
    }
    let mut t = 1.0;
    for _ in 0..30 {
        let mut y = x.clone();
        for (&i, &di) in free.iter().zip(d.iter()) {
            y[i] += t * di;
        }
        projection.project(&mut y);
        let delta = &y - &*x;
        let slope = g.dot(&delta);
        if slope < 0.0 {
            let q_delta = q * &delta;
            let f_next = *f + slope + 0.5 * delta.dot(&q_delta);
            if f_next <= *f + 1e-4 * slope {
                *x = y;
                *g += q_delta;
                *f = f_next;
                return true;
            }
        }
        t *= 0.5;
    }
    false
}
