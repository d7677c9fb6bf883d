//! Tune-quality metrics: weighted χ², linearized posterior covariance, A-
//! and D-optimality, ellipsoid coverage and eigentune intervals.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::chi2::Problem;
use crate::data::{normalize, TuneResult};
use crate::error::{Error, Result};
use crate::par;

/// Symmetric `d × d` covariance with its eigendecomposition (eigenvalues
/// ascending; `eigenvectors[i]` belongs to `eigenvalues[i]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorCovariance {
    pub matrix: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
}

impl PosteriorCovariance {
    /// Symmetrizes `m` and attaches its eigendecomposition.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::Shape("covariance must be a non-empty square matrix".into()));
        }
        let sym = 0.5 * (m + m.transpose());
        let eig = SymmetricEigen::new(sym.clone());
        let mut order: Vec<usize> = (0..sym.nrows()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        Ok(Self {
            matrix: sym.row_iter().map(|r| r.iter().copied().collect()).collect(),
            eigenvalues: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
            eigenvectors: order
                .iter()
                .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
                .collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.len()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.matrix[i][j])
    }
}

/// Inverse of `Σ_O w_O Σ_b ∇f_b ∇f_bᵀ / (Δf_b² + ΔR_b²)` at `p_hat`, with
/// weights normalized first.
pub fn gamma_post(problem: &Problem, p_hat: &[f64], w: &[f64]) -> Result<PosteriorCovariance> {
    let w = normalize(w)?;
    if w.len() != problem.n_observables() {
        return Err(Error::Shape("weight count differs from observable count".into()));
    }
    let d = problem.dim();
    let s = problem.surrogate();
    let at = s.point_with_gradient(p_hat);
    let mut info = DMatrix::<f64>::zeros(d, d);
    let mut gf = vec![0.0; d];
    let mut gdf = vec![0.0; d];
    for o in problem.included() {
        if w[o] == 0.0 {
            continue;
        }
        for b in problem.selected_bins(o).expect("included") {
            let (_, df) = s.eval_bin_gradient(b, &at, &mut gf, &mut gdf)?;
            let (_, dr) = problem.reference_bin(b);
            let scale = w[o] / (df * df + dr * dr);
            let g = DVector::from_column_slice(&gf);
            info += scale * &g * g.transpose();
        }
    }
    let chol = info
        .clone()
        .cholesky()
        .ok_or(Error::Unidentifiable)?;
    let inverse = chol.inverse();
    if inverse.iter().any(|v| !v.is_finite()) {
        return Err(Error::Unidentifiable);
    }
    PosteriorCovariance::from_matrix(&inverse)
}

/// Trace of the covariance.
pub fn a_optimality(g: &PosteriorCovariance) -> f64 {
    (0..g.dim()).map(|i| g.matrix[i][i]).sum()
}

/// `log det` of the covariance, via its Cholesky factor.
pub fn d_optimality_log(g: &PosteriorCovariance) -> Result<f64> {
    let chol = g
        .to_matrix()
        .cholesky()
        .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?;
    Ok(2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// `‖Lᵀ(p − p̂)‖₂` where `Γ = L Lᵀ`; values below 1 lie inside the ellipsoid.
pub fn ellipsoid_coverage(p: &[f64], p_hat: &[f64], g: &PosteriorCovariance) -> Result<f64> {
    if p.len() != g.dim() || p_hat.len() != g.dim() {
        return Err(Error::Shape("point dimension differs from covariance".into()));
    }
    let chol = g
        .to_matrix()
        .cholesky()
        .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?;
    let delta = DVector::from_iterator(p.len(), p.iter().zip(p_hat).map(|(a, b)| a - b));
    Ok((chol.l().transpose() * delta).norm())
}

/// `χ²(p*, w*)` with the result's weights normalized.
pub fn weighted_chi2_metric(result: &TuneResult, problem: &Problem) -> Result<f64> {
    let w = normalize(&result.weights.aligned_to(problem.reference())?)?;
    problem.chi2(&result.p_star, &w)
}

/// `γ((Σw)²/Σw² − d)`; fails when the bracket is not positive.
pub fn effective_n(w: &[f64], d: usize, gamma: f64) -> Result<f64> {
    let sum: f64 = w.iter().sum();
    let sq: f64 = w.iter().map(|v| v * v).sum();
    if !(sq > 0.0) {
        return Err(Error::TrivialWeights);
    }
    let bracket = sum * sum / sq - d as f64;
    if !(bracket > 0.0) {
        return Err(Error::TooFewEffective(gamma * bracket));
    }
    Ok(gamma * bracket)
}

/// One displaced point of an eigentune scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenScan {
    /// Index into the ascending eigenvalues.
    pub eigen_index: usize,
    pub sign: f64,
    pub alpha: f64,
    pub point: Vec<f64>,
    /// `χ²(point) − χ²(p̂) − n`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigentune {
    /// Per-parameter `(min, max)` over the displaced points, clamped at 0.
    pub intervals: Vec<(f64, f64)>,
    pub n_effective: f64,
    pub scans: Vec<EigenScan>,
}

const BRACKET_START: f64 = 1e-3;

/// Moves `p_hat` along the eigenvectors of Γ_post with the largest and
/// smallest eigenvalue, both ways, until χ² rises by `n`.
pub fn eigentune(problem: &Problem, p_hat: &[f64], w: &[f64], n: f64) -> Result<Eigentune> {
    if n < 0.0 || !n.is_finite() {
        return Err(Error::TooFewEffective(n));
    }
    let w = normalize(w)?;
    let cov = gamma_post(problem, p_hat, &w)?;
    let d = cov.dim();
    let base = problem.chi2(p_hat, &w)?;
    let diag = problem
        .space()
        .widths()
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    let alpha_max = 1e3 * diag;
    let jobs = [(d - 1, 1.0), (d - 1, -1.0), (0, 1.0), (0, -1.0)];
    let scans = par::map_slice(&jobs, |&(k, sign)| -> Result<EigenScan> {
        let u = &cov.eigenvectors[k];
        let at = |alpha: f64| -> Vec<f64> {
            p_hat
                .iter()
                .zip(u)
                .map(|(p, u)| p + sign * alpha * u)
                .collect()
        };
        let h = |alpha: f64| -> Result<f64> { Ok(problem.chi2(&at(alpha), &w)? - base - n) };
        if n == 0.0 {
            return Ok(EigenScan {
                eigen_index: k,
                sign,
                alpha: 0.0,
                point: p_hat.to_vec(),
                residual: 0.0,
            });
        }
        let mut lo = 0.0;
        let mut hi = BRACKET_START;
        loop {
            if h(hi)? >= 0.0 {
                break;
            }
            lo = hi;
            hi *= 2.0;
            if hi > alpha_max {
                return Err(Error::FlatDirection(k));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if h(mid)? < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (rl, rh) = (h(lo)?, h(hi)?);
        let (alpha, residual) = if rl.abs() <= rh.abs() { (lo, rl) } else { (hi, rh) };
        Ok(EigenScan {
            eigen_index: k,
            sign,
            alpha,
            point: at(alpha),
            residual,
        })
    });
    let scans = scans.into_iter().collect::<Result<Vec<_>>>()?;
    let intervals = (0..d)
        .map(|j| {
            let lo = scans.iter().map(|s| s.point[j]).fold(f64::INFINITY, f64::min);
            let hi = scans.iter().map(|s| s.point[j]).fold(f64::NEG_INFINITY, f64::max);
            (lo.max(0.0), hi.max(0.0))
        })
        .collect();
    Ok(Eigentune {
        intervals,
        n_effective: n,
        scans,
    })
}

/// Metric summary of one tune.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub weighted_chi2: f64,
    pub a_optimality: f64,
    pub d_optimality_log: f64,
    /// Tuned parameters relative to the sampling range.
    pub r_param: Vec<f64>,
    pub extrapolated: bool,
}

pub fn metric_report(result: &TuneResult, problem: &Problem) -> Result<MetricReport> {
    let w = result.weights.aligned_to(problem.reference())?;
    let cov = gamma_post(problem, &result.p_star, &w)?;
    Ok(MetricReport {
        method: result.method.to_string(),
        weighted_chi2: weighted_chi2_metric(result, problem)?,
        a_optimality: a_optimality(&cov),
        d_optimality_log: d_optimality_log(&cov)?,
        r_param: problem.space().relative_position(&result.p_star),
        extrapolated: !problem.space().contains(&result.p_star),
    })
}
