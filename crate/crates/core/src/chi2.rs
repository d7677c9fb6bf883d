//! Weighted χ² over the surrogate, its gradient, the multistart inner
//! optimizer and per-observable ideal tunes.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::data::{normalize, FilterMask, ParameterSpace, ReferenceSet};
use crate::error::{Error, Result};
use crate::optim::{self, LocalOptions, Objective};
use crate::par;
use crate::surrogate::{EvalPoint, SurrogateSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Chi2Config {
    pub multistarts: usize,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub seed: u64,
}

impl Default for Chi2Config {
    fn default() -> Self {
        Self {
            multistarts: 100,
            max_iterations: 500,
            gradient_tolerance: 1e-8,
            seed: 0,
        }
    }
}

impl Chi2Config {
    pub fn validate(&self) -> Result<()> {
        if self.multistarts == 0 {
            return Err(Error::invalid("multistarts must be at least 1"));
        }
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::invalid("gradient tolerance must be positive"));
        }
        Ok(())
    }

    fn local(&self) -> LocalOptions {
        LocalOptions {
            max_iterations: self.max_iterations,
            gradient_tolerance: self.gradient_tolerance,
        }
    }
}

/// Best point found by the inner optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub p: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdealTune {
    pub id: String,
    pub p_ideal: Vec<f64>,
    pub chi_ideal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IdealTuneTable {
    pub entries: Vec<IdealTune>,
}

impl IdealTuneTable {
    pub fn get(&self, id: &str) -> Option<&IdealTune> {
        self.entries.iter().find(|e| e.id == id)
    }
}

/// Surrogate, reference data and the bins selected by a filter mask.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    surrogate: &'a SurrogateSet,
    reference: &'a ReferenceSet,
    /// Global bin range per observable; `None` when excluded.
    selection: Vec<Option<Range<usize>>>,
    mask: FilterMask,
    ref_values: Vec<f64>,
    ref_errors: Vec<f64>,
}

impl<'a> Problem<'a> {
    pub fn new(
        surrogate: &'a SurrogateSet,
        reference: &'a ReferenceSet,
        mask: &FilterMask,
    ) -> Result<Self> {
        surrogate.check_covers(reference)?;
        let local = mask.resolve(reference)?;
        let selection = local
            .into_iter()
            .enumerate()
            .map(|(o, r)| {
                let start = reference.bin_range(o).start;
                r.map(|r| start + r.start..start + r.end)
            })
            .collect::<Vec<_>>();
        if selection.iter().all(Option::is_none) {
            return Err(Error::invalid("the filter mask excludes every observable"));
        }
        let ref_values = reference
            .observables()
            .iter()
            .flat_map(|o| o.values.iter().copied())
            .collect();
        let ref_errors = reference
            .observables()
            .iter()
            .flat_map(|o| o.uncertainties.iter().copied())
            .collect();
        Ok(Self {
            surrogate,
            reference,
            selection,
            mask: mask.clone(),
            ref_values,
            ref_errors,
        })
    }

    pub fn unmasked(surrogate: &'a SurrogateSet, reference: &'a ReferenceSet) -> Result<Self> {
        Self::new(surrogate, reference, &FilterMask::default())
    }

    pub fn surrogate(&self) -> &'a SurrogateSet {
        self.surrogate
    }

    pub fn reference(&self) -> &'a ReferenceSet {
        self.reference
    }

    pub fn mask(&self) -> &FilterMask {
        &self.mask
    }

    pub fn space(&self) -> &'a ParameterSpace {
        self.surrogate.space()
    }

    pub fn dim(&self) -> usize {
        self.surrogate.dim()
    }

    pub fn n_observables(&self) -> usize {
        self.selection.len()
    }

    /// Global bins of observable `o` that survive the mask.
    pub fn selected_bins(&self, o: usize) -> Option<Range<usize>> {
        self.selection[o].clone()
    }

    pub fn is_included(&self, o: usize) -> bool {
        self.selection[o].is_some()
    }

    /// Indices of observables that survive the mask.
    pub fn included(&self) -> Vec<usize> {
        (0..self.n_observables())
            .filter(|&o| self.is_included(o))
            .collect()
    }

    /// `(f_b − R_b, Δf_b² + ΔR_b², ΔR_b)` for a global bin.
    fn residual(&self, bin: usize, at: &EvalPoint) -> Result<(f64, f64, f64)> {
        let (f, df) = self.surrogate.eval_bin(bin, at)?;
        let (r, dr) = self.reference_bin(bin);
        Ok((f - r, df * df + dr * dr, dr))
    }

    /// `(R_b, ΔR_b)` for a global bin.
    pub fn reference_bin(&self, bin: usize) -> (f64, f64) {
        (self.ref_values[bin], self.ref_errors[bin])
    }

    fn check_weights(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.n_observables() {
            return Err(Error::Shape(format!(
                "{} weights for {} observables",
                w.len(),
                self.n_observables()
            )));
        }
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("weights must be finite and non-negative"));
        }
        Ok(())
    }

    /// Σ_O w_O Σ_b (f_b − R_b)² / (Δf_b² + ΔR_b²) over selected bins.
    /// Observables with zero weight are not evaluated.
    pub fn chi2(&self, p: &[f64], w: &[f64]) -> Result<f64> {
        self.check_weights(w)?;
        let at = self.surrogate.point(p);
        let mut total = 0.0;
        for (o, sel) in self.selection.iter().enumerate() {
            let Some(range) = sel else { continue };
            if w[o] == 0.0 {
                continue;
            }
            let mut sum = 0.0;
            for b in range.clone() {
                let (r, d, _) = self.residual(b, &at)?;
                sum += r * r / d;
            }
            total += w[o] * sum;
        }
        Ok(total)
    }

    /// Value and gradient of [`chi2`](Self::chi2), differentiating `Δf_b(p)`
    /// as well as `f_b(p)`.
    pub fn chi2_gradient(&self, p: &[f64], w: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.check_weights(w)?;
        let d = self.dim();
        let at = self.surrogate.point_with_gradient(p);
        let mut gf = vec![0.0; d];
        let mut gdf = vec![0.0; d];
        grad.fill(0.0);
        let mut total = 0.0;
        for (o, sel) in self.selection.iter().enumerate() {
            let Some(range) = sel else { continue };
            if w[o] == 0.0 {
                continue;
            }
            for b in range.clone() {
                let (f, df) = self.surrogate.eval_bin_gradient(b, &at, &mut gf, &mut gdf)?;
                let (rv, dr) = self.reference_bin(b);
                let r = f - rv;
                let den = df * df + dr * dr;
                total += w[o] * r * r / den;
                let a = w[o] * 2.0 * r / den;
                let c = w[o] * r * r * 2.0 * df / (den * den);
                for j in 0..d {
                    grad[j] += a * gf[j] - c * gdf[j];
                }
            }
        }
        Ok(total)
    }

    /// Mean bin term of observable `o` over its selected bins.
    pub fn observable_chi2(&self, p: &[f64], o: usize) -> Result<f64> {
        let at = self.surrogate.point(p);
        self.observable_chi2_at(&at, o)
    }

    fn observable_chi2_at(&self, at: &EvalPoint, o: usize) -> Result<f64> {
        let range = self.selection[o]
            .clone()
            .ok_or_else(|| Error::invalid("observable is excluded by the mask"))?;
        let n = range.len() as f64;
        let mut sum = 0.0;
        for b in range {
            let (r, d, _) = self.residual(b, at)?;
            sum += r * r / d;
        }
        Ok(sum / n)
    }

    /// [`observable_chi2`](Self::observable_chi2) for every observable;
    /// `None` for excluded ones.
    pub fn observable_chi2_all(&self, p: &[f64]) -> Result<Vec<Option<f64>>> {
        let at = self.surrogate.point(p);
        (0..self.n_observables())
            .map(|o| {
                if self.is_included(o) {
                    self.observable_chi2_at(&at, o).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect()
    }

    /// Bin scores `((f_b − R_b)/ΔR_b)² + ln ΔR_b²` of observable `o`.
    pub fn bin_scores(&self, p: &[f64], o: usize) -> Result<Vec<f64>> {
        let at = self.surrogate.point(p);
        self.bin_scores_at(&at, o)
    }

    pub(crate) fn bin_scores_at(&self, at: &EvalPoint, o: usize) -> Result<Vec<f64>> {
        let range = self.selection[o]
            .clone()
            .ok_or_else(|| Error::invalid("observable is excluded by the mask"))?;
        range
            .map(|b| {
                let (r, _, dr) = self.residual(b, at)?;
                Ok((r / dr).powi(2) + (dr * dr).ln())
            })
            .collect()
    }

    pub fn point(&self, p: &[f64]) -> EvalPoint {
        self.surrogate.point(p)
    }

    fn starts(&self, cfg: &Chi2Config) -> Vec<Vec<f64>> {
        let s = self.space();
        optim::uniform_starts(s.lower(), s.upper(), cfg.multistarts, cfg.seed)
    }

    /// Multistart minimization of χ² with weights normalized to sum 1. The
    /// reported value uses the weights as given.
    pub fn minimize(&self, w: &[f64], cfg: &Chi2Config) -> Result<InnerSolution> {
        cfg.validate()?;
        self.check_weights(w)?;
        let normalized = normalize(w)?;
        let objective = Weighted {
            problem: self,
            weights: normalized,
        };
        let s = self.space();
        let best = optim::multistart(&objective, s.lower(), s.upper(), &self.starts(cfg), &cfg.local())?;
        let value = self.chi2(&best.x, w)?;
        Ok(InnerSolution { p: best.x, value })
    }

    /// Single local solve from `start`, with the same conventions as
    /// [`minimize`](Self::minimize).
    pub fn minimize_from(&self, w: &[f64], start: &[f64], cfg: &Chi2Config) -> Result<InnerSolution> {
        self.check_weights(w)?;
        let objective = Weighted {
            problem: self,
            weights: normalize(w)?,
        };
        let s = self.space();
        let r = optim::minimize_box(&objective, s.lower(), s.upper(), start, &cfg.local())?;
        let value = self.chi2(&r.x, w)?;
        Ok(InnerSolution { p: r.x, value })
    }

    /// Minimizes each included observable's mean χ² separately.
    pub fn ideal_tunes(&self, cfg: &Chi2Config) -> Result<IdealTuneTable> {
        cfg.validate()?;
        let included = self.included();
        let starts = self.starts(cfg);
        let s = self.space();
        let results = par::map_slice(&included, |&o| -> Result<IdealTune> {
            let n = self.selection[o].as_ref().map_or(1, |r| r.len()) as f64;
            let mut weights = vec![0.0; self.n_observables()];
            weights[o] = 1.0 / n;
            let objective = Weighted {
                problem: self,
                weights,
            };
            let best = optim::multistart(&objective, s.lower(), s.upper(), &starts, &cfg.local())?;
            Ok(IdealTune {
                id: self.reference.observables()[o].id.clone(),
                chi_ideal: self.observable_chi2(&best.x, o)?,
                p_ideal: best.x,
            })
        });
        Ok(IdealTuneTable {
            entries: results.into_iter().collect::<Result<_>>()?,
        })
    }
}

struct Weighted<'p, 'a> {
    problem: &'p Problem<'a>,
    weights: Vec<f64>,
}

impl Objective for Weighted<'_, '_> {
    fn value(&self, x: &[f64]) -> Result<f64> {
        self.problem.chi2(x, &self.weights)
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.problem.chi2_gradient(x, &self.weights, grad)
    }
}

/// Mean χ² of observable `id` over all its bins, ignoring any mask.
pub fn per_observable_chi2(
    surrogate: &SurrogateSet,
    reference: &ReferenceSet,
    p: &[f64],
    id: &str,
) -> Result<f64> {
    let o = reference
        .position(id)
        .ok_or_else(|| Error::invalid(format!("unknown observable \"{id}\"")))?;
    Problem::unmasked(surrogate, reference)?.observable_chi2(p, o)
}
