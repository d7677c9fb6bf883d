//! Robust (minimax) tuning with the μ weight budget, and μ selection by the
//! area between cumulative density curves.
//!
//! For fixed `p` the worst-case slack and the optimal weights both have
//! closed forms, so only `p` is searched, with a derivative-free pattern
//! search.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::chi2::{IdealTuneTable, Problem};
use crate::data::{normalize, HistoryEntry, Method, TuneResult, WeightVector};
use crate::error::{Error, Result};
use crate::optim;
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobustConfig {
    /// Percentage of the observables the weights must cover, in (0, 100].
    pub mu: f64,
    pub multistarts: usize,
    pub seed: u64,
    /// Smoothing of the max over the interval endpoints; 0 is exact.
    pub epsilon: f64,
    /// Objective evaluations allowed per start.
    pub max_evaluations: usize,
    pub initial_step: f64,
    pub min_step: f64,
}

impl Default for RobustConfig {
    fn default() -> Self {
        Self {
            mu: 100.0,
            multistarts: 100,
            seed: 0,
            epsilon: 0.0,
            max_evaluations: 20_000,
            initial_step: 0.25,
            min_step: 1e-9,
        }
    }
}

impl RobustConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu <= 100.0) {
            return Err(Error::invalid(format!("mu must lie in (0, 100], got {}", self.mu)));
        }
        if self.multistarts == 0 {
            return Err(Error::invalid("multistarts must be at least 1"));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::invalid("epsilon must be non-negative"));
        }
        if !(self.initial_step > 0.0 && self.min_step > 0.0) {
            return Err(Error::invalid("pattern steps must be positive"));
        }
        Ok(())
    }
}

/// Largest `(f − R)²` over `R ∈ [R_b − ΔR_b − Δf_b, R_b + ΔR_b + Δf_b]`.
/// With `epsilon > 0` the max of the two endpoint values is smoothed.
pub fn worst_case_residual(f: f64, r: f64, dr: f64, df: f64, epsilon: f64) -> f64 {
    let lo = (f - (r - dr - df)).powi(2);
    let hi = (f - (r + dr + df)).powi(2);
    if epsilon > 0.0 {
        0.5 * (lo + hi) + (0.25 * (lo - hi).powi(2) + epsilon * epsilon).sqrt()
    } else {
        lo.max(hi)
    }
}

/// Minimizes `Σ_O (w_O/|O|) T_O` over `w ∈ [0,1]` subject to
/// `Σ_O w_O/|O| ≥ (μ/100) Σ_O 1/|O|`, given `T_O = Σ_b t_b`.
///
/// Weights are raised to 1 in ascending order of `T_O` (ties by index) and
/// the last one is fractional.
pub fn optimal_weights(totals: &[f64], sizes: &[usize], mu: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..totals.len()).collect();
    order.sort_by(|&a, &b| totals[a].total_cmp(&totals[b]).then(a.cmp(&b)));
    let mut weights = vec![0.0; totals.len()];
    if mu >= 100.0 {
        weights.fill(1.0);
        return weights;
    }
    let mut budget = mu / 100.0 * sizes.iter().map(|&n| 1.0 / n as f64).sum::<f64>();
    for o in order {
        if budget <= 0.0 {
            break;
        }
        let cap = 1.0 / sizes[o] as f64;
        if budget >= cap {
            weights[o] = 1.0;
            budget -= cap;
        } else {
            weights[o] = budget / cap;
            budget = 0.0;
        }
    }
    weights
}

/// Per-observable `T_O(p)` and `|O|` over the included observables.
fn totals(problem: &Problem, p: &[f64], epsilon: f64) -> Result<(Vec<f64>, Vec<usize>)> {
    let surrogate = problem.surrogate();
    let at = surrogate.point(p);
    let mut totals = Vec::new();
    let mut sizes = Vec::new();
    for o in problem.included() {
        let range = problem.selected_bins(o).expect("included observable");
        sizes.push(range.len());
        let mut t = 0.0;
        for b in range {
            let (f, df) = surrogate.eval_bin(b, &at)?;
            let (r, dr) = problem.reference_bin(b);
            t += worst_case_residual(f, r, dr, df, epsilon);
        }
        totals.push(t);
    }
    Ok((totals, sizes))
}

/// Optimal weights at fixed `p` for every observable (0 for excluded ones),
/// before normalization.
pub fn optimal_weights_for_p(problem: &Problem, p: &[f64], mu: f64) -> Result<Vec<f64>> {
    let (t, sizes) = totals(problem, p, 0.0)?;
    let w = optimal_weights(&t, &sizes, mu);
    let mut full = vec![0.0; problem.n_observables()];
    for (&o, v) in problem.included().iter().zip(w) {
        full[o] = v;
    }
    Ok(full)
}

/// Value of the robust objective with weights eliminated:
/// `F(p) = Σ_O (w_O(p)/|O|) T_O(p)`.
pub fn robust_objective(problem: &Problem, p: &[f64], cfg: &RobustConfig) -> Result<f64> {
    let (t, sizes) = totals(problem, p, cfg.epsilon)?;
    let w = optimal_weights(&t, &sizes, cfg.mu);
    Ok(w.iter()
        .zip(&t)
        .zip(&sizes)
        .map(|((w, t), &n)| w / n as f64 * t)
        .sum())
}

/// Objective of the slack formulation at given weights, with every slack at
/// its active constraint.
pub fn slack_objective(problem: &Problem, p: &[f64], weights: &[f64]) -> Result<f64> {
    let (t, sizes) = totals(problem, p, 0.0)?;
    Ok(problem
        .included()
        .iter()
        .zip(t.iter().zip(&sizes))
        .map(|(&o, (t, &n))| weights[o] / n as f64 * t)
        .sum())
}

fn random_basis(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    g.qr().q()
}

/// Pattern search in unit-box coordinates from `start`.
fn pattern_search<F>(f: F, d: usize, start: Vec<f64>, cfg: &RobustConfig, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut u = start;
    let mut best = f(&u)?;
    let mut evaluations = 1;
    let mut step = cfg.initial_step;
    let mut basis = random_basis(d, rng);
    let mut trial = vec![0.0; d];
    while step >= cfg.min_step && evaluations < cfg.max_evaluations {
        let mut improved = false;
        'poll: for j in 0..d {
            for sign in [1.0, -1.0] {
                for i in 0..d {
                    trial[i] = (u[i] + sign * step * basis[(i, j)]).clamp(0.0, 1.0);
                }
                evaluations += 1;
                if let Ok(v) = f(&trial) {
                    if v < best {
                        best = v;
                        u.copy_from_slice(&trial);
                        improved = true;
                        break 'poll;
                    }
                }
                if evaluations >= cfg.max_evaluations {
                    break 'poll;
                }
            }
        }
        if !improved {
            step *= 0.5;
            basis = random_basis(d, rng);
        }
    }
    Ok((u, best))
}

/// Robust tune for one μ: multistart pattern search over `p` with the
/// slack and weights eliminated. Reported weights are normalized.
pub fn solve_robust(problem: &Problem, cfg: &RobustConfig) -> Result<TuneResult> {
    cfg.validate()?;
    let space = problem.space();
    let d = space.dim();
    let starts = optim::uniform_starts(&vec![0.0; d], &vec![1.0; d], cfg.multistarts, cfg.seed);
    let objective = |u: &[f64]| robust_objective(problem, &space.from_relative(u), cfg);
    let runs = par::map_range(starts.len(), |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1)));
        pattern_search(objective, d, starts[i].clone(), cfg, &mut rng)
    });
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut last_error = None;
    for r in runs {
        match r {
            Ok((u, v)) if v.is_finite() => {
                if best.as_ref().is_none_or(|b| v < b.1) {
                    best = Some((u, v));
                }
            }
            Ok(_) => last_error = Some("non-finite objective".to_string()),
            Err(e) => last_error = Some(e.to_string()),
        }
    }
    let (u, value) = best.ok_or_else(|| Error::AllStartsFailed {
        starts: cfg.multistarts,
        last: last_error.unwrap_or_default(),
    })?;
    let p = space.from_relative(&u);
    let raw = optimal_weights_for_p(problem, &p, cfg.mu)?;
    let weights = normalize(&raw)?;
    let mut metadata = BTreeMap::new();
    metadata.insert("mu".into(), cfg.mu.to_string());
    metadata.insert("epsilon".into(), cfg.epsilon.to_string());
    metadata.insert("multistarts".into(), cfg.multistarts.to_string());
    Ok(TuneResult {
        method: Method::Robust,
        weights: WeightVector::new(problem.reference().ids(), weights.clone())?,
        p_star: p.clone(),
        objective_value: value,
        history: vec![HistoryEntry {
            weights,
            p_hat: p,
            value,
        }],
        mask: problem.mask().clone(),
        seed: cfg.seed,
        metadata,
    })
}

/// Number of observables whose statistic is at most each τ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfCurve {
    pub taus: Vec<f64>,
    pub counts: Vec<usize>,
}

impl CdfCurve {
    pub fn from_statistics(statistics: &[f64], taus: &[f64]) -> Self {
        let mut sorted = statistics.to_vec();
        sorted.sort_by(f64::total_cmp);
        let counts = taus
            .iter()
            .map(|&t| sorted.partition_point(|&s| s <= t))
            .collect();
        Self {
            taus: taus.to_vec(),
            counts,
        }
    }

    /// Two-column `tau,count` table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,count\n");
        for (t, c) in self.taus.iter().zip(&self.counts) {
            out.push_str(&format!("{t},{c}\n"));
        }
        out
    }
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_tau_grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Default τ grid: 200 log-spaced points over `[1e-3, 1e3]`.
pub fn default_taus() -> Vec<f64> {
    log_tau_grid(200, 1e-3, 1e3)
}

/// Curve of the bin-averaged χ² of each included observable at `p`.
pub fn cdf_curve(problem: &Problem, p: &[f64], taus: &[f64]) -> Result<CdfCurve> {
    let stats: Vec<f64> = problem.observable_chi2_all(p)?.into_iter().flatten().collect();
    Ok(CdfCurve::from_statistics(&stats, taus))
}

/// Curve of each observable's own ideal χ².
pub fn ideal_cdf_curve(ideal: &IdealTuneTable, taus: &[f64]) -> CdfCurve {
    let stats: Vec<f64> = ideal.entries.iter().map(|e| e.chi_ideal).collect();
    CdfCurve::from_statistics(&stats, taus)
}

/// Trapezoidal area of `|ideal − run|` over the shared τ grid.
pub fn area_between(run: &CdfCurve, ideal: &CdfCurve) -> Result<f64> {
    if run.taus != ideal.taus {
        return Err(Error::Shape("curves use different tau grids".into()));
    }
    let gap: Vec<f64> = run
        .counts
        .iter()
        .zip(&ideal.counts)
        .map(|(&a, &b)| (a as f64 - b as f64).abs())
        .collect();
    Ok(run
        .taus
        .windows(2)
        .zip(gap.windows(2))
        .map(|(t, g)| (t[1] - t[0]) * 0.5 * (g[0] + g[1]))
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuRun {
    pub mu: f64,
    pub result: TuneResult,
    pub curve: CdfCurve,
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuSweep {
    pub best: usize,
    pub runs: Vec<MuRun>,
    pub ideal: CdfCurve,
}

impl MuSweep {
    pub fn best_run(&self) -> &MuRun {
        &self.runs[self.best]
    }
}

/// Robust tunes for every μ (in parallel); the best has the smallest area to
/// the ideal curve, ties going to the smaller μ.
pub fn sweep_mu(
    problem: &Problem,
    mus: &[f64],
    cfg: &RobustConfig,
    ideal: &IdealTuneTable,
    taus: &[f64],
) -> Result<MuSweep> {
    if mus.is_empty() {
        return Err(Error::invalid("no mu values to sweep"));
    }
    let ideal_curve = ideal_cdf_curve(ideal, taus);
    let runs = par::map_slice(mus, |&mu| -> Result<MuRun> {
        let run_cfg = RobustConfig { mu, ..cfg.clone() };
        let mut result = solve_robust(problem, &run_cfg)?;
        result
            .metadata
            .insert("cdf_statistic".into(), "observable_bin_mean".into());
        let curve = cdf_curve(problem, &result.p_star, taus)?;
        let area = area_between(&curve, &ideal_curve)?;
        Ok(MuRun {
            mu,
            result,
            curve,
            area,
        })
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        let b = &runs[best];
        if r.area < b.area || (r.area == b.area && r.mu < b.mu) {
            best = i;
        }
    }
    Ok(MuSweep {
        best,
        runs,
        ideal: ideal_curve,
    })
}

/// `n` values drawn uniformly from (0, 100].
pub fn random_mus(n: usize, seed: u64) -> Vec<f64> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| 100.0 * (1.0 - rng.random::<f64>())).collect()
}
