//! Bilevel weight tuning: an outer derivative-free search over the weight
//! simplex driven by a cubic RBF surrogate, wrapped around the inner χ²
//! minimization.

mod objectives;
mod rbf;

pub use objectives::{mean, median, portfolio, OuterObjective};
pub use rbf::RbfModel;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::chi2::{Chi2Config, Problem};
use crate::data::{HistoryEntry, Method, TuneResult, WeightVector};
use crate::error::{Error, Result};

/// Candidates closer than this to an evaluated point are never proposed.
const MIN_SEPARATION: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OuterConfig {
    /// Initial design size; `None` means one more than the number of
    /// observables.
    pub n0: Option<usize>,
    pub n_max: usize,
    /// Candidate pool size; `None` means 500 per observable.
    pub n_cand: Option<usize>,
    pub nu_cycle: Vec<f64>,
    pub seed: u64,
}

impl Default for OuterConfig {
    fn default() -> Self {
        Self {
            n0: None,
            n_max: 1000,
            n_cand: None,
            nu_cycle: vec![0.3, 0.5, 0.8, 0.95],
            seed: 0,
        }
    }
}

impl OuterConfig {
    fn resolved(&self, k: usize) -> Result<(usize, usize)> {
        let n0 = self.n0.unwrap_or(k + 1);
        let n_cand = self.n_cand.unwrap_or(500 * k).max(1);
        if n0 == 0 {
            return Err(Error::invalid("initial design must contain at least one point"));
        }
        if self.n_max < n0 {
            return Err(Error::invalid(format!(
                "n_max ({}) is smaller than the initial design ({n0})",
                self.n_max
            )));
        }
        if self.nu_cycle.is_empty() || self.nu_cycle.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("nu cycle must be a non-empty list of values in [0, 1]"));
        }
        Ok((n0, n_cand))
    }
}

/// `n` points drawn uniformly on the `dim`-simplex (symmetric Dirichlet with
/// unit concentration).
pub fn dirichlet_design(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| dirichlet_sample(dim, &mut rng)).collect()
}

fn dirichlet_sample(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if dim == 1 {
        return vec![1.0];
    }
    let e: Vec<f64> = (0..dim).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = e.iter().sum();
    e.iter().map(|x| x / total).collect()
}

/// Scales `values` onto `[0, 1]`; a constant vector maps to zeros.
fn min_max(values: &[f64]) -> Vec<f64> {
    let finite = values.iter().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, |a, &b| a.min(b));
    let hi = finite.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if !(hi > lo) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Merit `ν·V_s + (1 − ν)·V_d` of each candidate from its surrogate
/// prediction and its distance to the evaluated set. `V_s` is the scaled
/// prediction; `V_d` is 1 for the closest candidate and 0 for the farthest.
pub fn candidate_scores(predictions: &[f64], distances: &[f64], nu: f64) -> Vec<f64> {
    let vs = min_max(predictions);
    let vd: Vec<f64> = min_max(distances).into_iter().map(|d| 1.0 - d).collect();
    let flat_d = {
        let lo = distances.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        let hi = distances.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        !(hi > lo)
    };
    vs.iter()
        .zip(&vd)
        .map(|(s, d)| nu * s + (1.0 - nu) * if flat_d { 0.0 } else { *d })
        .collect()
}

/// Index of the smallest score; ties go to the first.
pub fn argmin(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if s.is_nan() {
            continue;
        }
        if best.is_none_or(|b| *s < scores[b]) {
            best = Some(i);
        }
    }
    best
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Drops the last coordinate of a simplex point.
fn reduce(w: &[f64]) -> Vec<f64> {
    w[..w.len() - 1].to_vec()
}

/// Rebuilds a simplex point from its first `k − 1` coordinates.
fn expand(reduced: &[f64]) -> Vec<f64> {
    let mut w = reduced.to_vec();
    w.push((1.0 - reduced.iter().sum::<f64>()).max(0.0));
    w
}

/// Picks a new weight vector from `n_cand` Dirichlet candidates. Without a
/// model the choice is by distance alone.
pub fn propose_candidate(
    model: Option<&RbfModel>,
    evaluated: &[Vec<f64>],
    nu: f64,
    n_cand: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let dim = evaluated.first().map_or(1, Vec::len);
    let candidates: Vec<Vec<f64>> = (0..n_cand).map(|_| dirichlet_sample(dim, rng)).collect();
    let distances: Vec<f64> = candidates
        .iter()
        .map(|c| {
            evaluated
                .iter()
                .map(|e| distance(c, e))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let (predictions, nu) = match model {
        Some(m) => (
            candidates.iter().map(|c| m.predict(&reduce(c))).collect(),
            nu,
        ),
        None => (vec![0.0; n_cand], 0.0),
    };
    let mut scores = candidate_scores(&predictions, &distances, nu);
    for (s, d) in scores.iter_mut().zip(&distances) {
        if *d < MIN_SEPARATION {
            *s = f64::INFINITY;
        }
    }
    let i = argmin(&scores).unwrap_or(0);
    expand(&reduce(&candidates[i]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BilevelOutcome {
    pub result: TuneResult,
    /// Largest interpolation error at the centers, one entry per RBF refit.
    pub rbf_refit_errors: Vec<f64>,
}

/// Runs the outer loop for exactly `n_max` weight evaluations.
pub fn run_bilevel(
    problem: &Problem,
    objective: OuterObjective,
    outer: &OuterConfig,
    inner: &Chi2Config,
) -> Result<BilevelOutcome> {
    inner.validate()?;
    let included = problem.included();
    let k = included.len();
    let (n0, n_cand) = outer.resolved(k)?;
    let n_obs = problem.n_observables();
    let full = |w: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n_obs];
        for (&o, &v) in included.iter().zip(w) {
            out[o] = v;
        }
        out
    };
    let evaluate = |w: &[f64]| -> HistoryEntry {
        let weights = full(w);
        let outcome = problem
            .minimize(&weights, inner)
            .and_then(|sol| Ok((objective.evaluate(problem, &sol.p)?, sol.p)));
        match outcome {
            Ok((value, p_hat)) if value.is_finite() => HistoryEntry {
                weights,
                p_hat,
                value,
            },
            Ok(_) => HistoryEntry {
                weights,
                p_hat: Vec::new(),
                value: f64::INFINITY,
            },
            Err(e) => {
                log::warn!("inner solve failed: {e}");
                HistoryEntry {
                    weights,
                    p_hat: Vec::new(),
                    value: f64::INFINITY,
                }
            }
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(outer.seed);
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(outer.n_max);
    let mut history: Vec<HistoryEntry> = Vec::with_capacity(outer.n_max);
    let mut rbf_refit_errors = Vec::new();

    if k == 1 {
        let entry = evaluate(&[1.0]);
        history.extend(std::iter::repeat_n(entry, outer.n_max));
    } else {
        for _ in 0..n0 {
            let w = dirichlet_sample(k, &mut rng);
            history.push(evaluate(&w));
            points.push(w);
        }
        for i in n0..outer.n_max {
            let nu = outer.nu_cycle[(i - n0) % outer.nu_cycle.len()];
            let (centers, values): (Vec<Vec<f64>>, Vec<f64>) = points
                .iter()
                .zip(&history)
                .filter(|(_, h)| h.value.is_finite())
                .map(|(w, h)| (reduce(w), h.value))
                .unzip();
            let model = if centers.len() >= k {
                match RbfModel::fit(&centers, &values) {
                    Ok(m) => {
                        rbf_refit_errors.push(m.center_error());
                        Some(m)
                    }
                    Err(e) => {
                        log::warn!("RBF refit failed ({e}); selecting by distance");
                        None
                    }
                }
            } else {
                None
            };
            let w = propose_candidate(model.as_ref(), &points, nu, n_cand, &mut rng);
            history.push(evaluate(&w));
            points.push(w);
        }
    }

    let best = argmin(&history.iter().map(|h| h.value).collect::<Vec<_>>())
        .filter(|&i| history[i].value.is_finite())
        .ok_or_else(|| Error::Numerical("every inner solve failed".into()))?;
    let ids = problem.reference().ids();
    let mut metadata = BTreeMap::new();
    metadata.insert("objective".into(), objective.name().into());
    if let OuterObjective::Portfolio { lambda } = objective {
        metadata.insert("lambda".into(), lambda.to_string());
    }
    metadata.insert("n0".into(), n0.to_string());
    metadata.insert("n_max".into(), outer.n_max.to_string());
    metadata.insert("n_cand".into(), n_cand.to_string());
    metadata.insert(
        "nu_cycle".into(),
        outer
            .nu_cycle
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(","),
    );
    metadata.insert("inner_seed".into(), inner.seed.to_string());
    metadata.insert("multistarts".into(), inner.multistarts.to_string());
    let entry = &history[best];
    Ok(BilevelOutcome {
        result: TuneResult {
            method: objective.method(),
            weights: WeightVector::new(ids, entry.weights.clone())?,
            p_star: entry.p_hat.clone(),
            objective_value: entry.value,
            history,
            mask: problem.mask().clone(),
            seed: outer.seed,
            metadata,
        },
        rbf_refit_errors,
    })
}

/// Single inner solve with every included observable weighted equally.
pub fn tune_equal_weights(problem: &Problem, inner: &Chi2Config) -> Result<TuneResult> {
    let included = problem.included();
    let mut w = vec![0.0; problem.n_observables()];
    for &o in &included {
        w[o] = 1.0 / included.len() as f64;
    }
    let sol = problem.minimize(&w, inner)?;
    let mut metadata = BTreeMap::new();
    metadata.insert("multistarts".into(), inner.multistarts.to_string());
    Ok(TuneResult {
        method: Method::AllWeightsEqual,
        weights: WeightVector::new(problem.reference().ids(), w.clone())?,
        p_star: sol.p.clone(),
        objective_value: sol.value,
        history: vec![HistoryEntry {
            weights: w,
            p_hat: sol.p,
            value: sol.value,
        }],
        mask: problem.mask().clone(),
        seed: inner.seed,
        metadata,
    })
}
