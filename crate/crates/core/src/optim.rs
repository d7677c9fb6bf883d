//! Bound-constrained local minimization and seeded multistart.
//!
//! The local solver is a projected quasi-Newton (BFGS) method working in
//! unit-box coordinates `u = (x − lower) / (upper − lower)`. Convergence is
//! declared when the infinity norm of the projected gradient, measured in
//! those coordinates, falls below the tolerance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::par;

/// A smooth objective over a box.
pub trait Objective: Sync {
    fn value(&self, x: &[f64]) -> Result<f64>;
    /// Writes the gradient into `grad` and returns the value.
    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
}

impl Default for LocalOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

struct Scaled<'a, O: Objective + ?Sized> {
    obj: &'a O,
    lower: &'a [f64],
    width: Vec<f64>,
}

impl<O: Objective + ?Sized> Scaled<'_, O> {
    fn to_x(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.width))
            .map(|(u, (lo, w))| lo + u * w)
            .collect()
    }

    fn eval(&self, u: &[f64], grad: &mut [f64]) -> Result<f64> {
        let v = self.obj.value_and_gradient(&self.to_x(u), grad)?;
        for (g, w) in grad.iter_mut().zip(&self.width) {
            *g *= w;
        }
        if v.is_finite() && grad.iter().all(|g| g.is_finite()) {
            Ok(v)
        } else {
            Err(Error::Numerical("objective is not finite".into()))
        }
    }
}

fn projected_gradient_norm(u: &[f64], g: &[f64]) -> f64 {
    u.iter()
        .zip(g)
        .map(|(&u, &g)| ((u - g).clamp(0.0, 1.0) - u).abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `obj` over `[lower, upper]` from `start` (clamped into the box).
pub fn minimize_box<O: Objective + ?Sized>(
    obj: &O,
    lower: &[f64],
    upper: &[f64],
    start: &[f64],
    options: &LocalOptions,
) -> Result<LocalResult> {
    let d = lower.len();
    let scaled = Scaled {
        obj,
        lower,
        width: lower.iter().zip(upper).map(|(l, u)| u - l).collect(),
    };
    let mut u: Vec<f64> = start
        .iter()
        .zip(lower.iter().zip(&scaled.width))
        .map(|(x, (l, w))| ((x - l) / w).clamp(0.0, 1.0))
        .collect();
    let mut g = vec![0.0; d];
    let mut f = scaled.eval(&u, &mut g)?;
    // Inverse Hessian approximation, row-major.
    let mut h = identity(d, 1.0);
    let mut fresh = true;
    let mut g_new = vec![0.0; d];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < options.max_iterations {
        if projected_gradient_norm(&u, &g) <= options.gradient_tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let free: Vec<bool> = (0..d)
            .map(|i| !((u[i] <= 0.0 && g[i] > 0.0) || (u[i] >= 1.0 && g[i] < 0.0)))
            .collect();
        let mut dir = vec![0.0; d];
        for i in (0..d).filter(|&i| free[i]) {
            dir[i] = -(0..d)
                .filter(|&j| free[j])
                .map(|j| h[i * d + j] * g[j])
                .sum::<f64>();
        }
        if !(dot(&dir, &g) < 0.0) {
            h = identity(d, 1.0);
            fresh = true;
            for i in 0..d {
                dir[i] = if free[i] { -g[i] } else { 0.0 };
            }
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = u
                .iter()
                .zip(&dir)
                .map(|(u, d)| (u + step * d).clamp(0.0, 1.0))
                .collect();
            let moved: Vec<f64> = trial.iter().zip(&u).map(|(a, b)| a - b).collect();
            if let Ok(f_trial) = scaled.eval(&trial, &mut g_new) {
                if f_trial <= f + ARMIJO * dot(&g, &moved) {
                    accepted = Some((trial, moved, f_trial));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((trial, s, f_trial)) = accepted else {
            if fresh {
                break;
            }
            h = identity(d, 1.0);
            fresh = true;
            continue;
        };
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if s.iter().all(|&v| v == 0.0) {
            break;
        }
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if fresh {
                h = identity(d, sy / dot(&y, &y));
                fresh = false;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }
        u = trial;
        f = f_trial;
        g.copy_from_slice(&g_new);
    }
    if !converged && projected_gradient_norm(&u, &g) <= options.gradient_tolerance {
        converged = true;
    }
    Ok(LocalResult {
        x: scaled.to_x(&u),
        value: f,
        iterations,
        converged,
    })
}

fn identity(d: usize, scale: f64) -> Vec<f64> {
    let mut h = vec![0.0; d * d];
    for i in 0..d {
        h[i * d + i] = scale;
    }
    h
}

/// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ`, `ρ = 1/(sᵀy)`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let d = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..d).map(|i| dot(&h[i * d..(i + 1) * d], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..d {
        for j in 0..d {
            h[i * d + j] +=
                -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// `n` points drawn uniformly in the box from a seeded stream.
pub fn uniform_starts(lower: &[f64], upper: &[f64], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            lower
                .iter()
                .zip(upper)
                .map(|(l, u)| l + rng.random::<f64>() * (u - l))
                .collect()
        })
        .collect()
}

/// Runs a local solve from every start in parallel and keeps the smallest
/// value; ties go to the earliest start. Starts whose objective cannot be
/// evaluated are skipped.
pub fn multistart<O: Objective + ?Sized>(
    obj: &O,
    lower: &[f64],
    upper: &[f64],
    starts: &[Vec<f64>],
    options: &LocalOptions,
) -> Result<LocalResult> {
    let results = par::map_slice(starts, |s| minimize_box(obj, lower, upper, s, options));
    let mut best: Option<LocalResult> = None;
    let mut last_error = None;
    for r in results {
        match r {
            Ok(r) if r.value.is_finite() => {
                if best.as_ref().is_none_or(|b| r.value < b.value) {
                    best = Some(r);
                }
            }
            Ok(_) => last_error = Some("non-finite objective".to_string()),
            Err(e) => last_error = Some(e.to_string()),
        }
    }
    best.ok_or_else(|| Error::AllStartsFailed {
        starts: starts.len(),
        last: last_error.unwrap_or_else(|| "no starts".into()),
    })
}
