//! Data pre-processing: envelope pre-filter, Z-score rejection of outlying
//! observables, and contiguous bin-window hypothesis tests.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf_inv;
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::chi2::{Chi2Config, IdealTuneTable, Problem};
use crate::data::{FilterMask, McRunGrid, ReferenceSet};
use crate::error::{Error, Result};
use crate::par;
use crate::surrogate::envelope;

/// Drops observables with no reference bin inside the run envelope.
pub fn envelope_prefilter(reference: &ReferenceSet, grid: &McRunGrid) -> Result<FilterMask> {
    if grid.layout() != reference.layout() {
        return Err(Error::Shape("run grid layout differs from the reference".into()));
    }
    let env = envelope(grid);
    let mut mask = FilterMask::default();
    for (o, obs) in reference.observables().iter().enumerate() {
        let range = reference.bin_range(o);
        let inside = obs
            .values
            .iter()
            .zip(&env[range])
            .any(|(v, (lo, hi))| lo <= v && v <= hi);
        if !inside {
            mask.exclude(obs.id.clone());
        }
    }
    Ok(mask)
}

/// Indices with `(χ_i − m)/s ≥ threshold`, `s` the population standard
/// deviation. A zero spread flags nothing.
pub fn zscore_outliers(chis: &[f64], threshold: f64) -> Result<Vec<usize>> {
    if chis.len() < 2 {
        return Err(Error::invalid("Z-scores need at least two values"));
    }
    let n = chis.len() as f64;
    let m = chis.iter().sum::<f64>() / n;
    let s = (chis.iter().map(|c| (c - m) * (c - m)).sum::<f64>() / n).sqrt();
    if !(s > 0.0) {
        return Ok(Vec::new());
    }
    Ok(chis
        .iter()
        .enumerate()
        .filter(|(_, c)| (*c - m) / s >= threshold)
        .map(|(i, _)| i)
        .collect())
}

/// Upper critical value: the `1 − alpha` quantile of χ² with `rho` degrees
/// of freedom.
pub fn chi2_critical(rho: usize, alpha: f64) -> Result<f64> {
    if rho == 0 {
        return Err(Error::invalid("degrees of freedom must be at least 1"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(chi2_quantile(rho as f64, 1.0 - alpha))
}

fn chi2_cdf(k: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(0.5 * k, 0.5 * x)
    }
}

fn chi2_pdf(k: f64, x: f64) -> f64 {
    let h = 0.5 * k;
    ((h - 1.0) * x.ln() - 0.5 * x - h * std::f64::consts::LN_2 - ln_gamma(h)).exp()
}

/// Inverts the regularized lower incomplete gamma function: Wilson–Hilferty
/// start, then Newton steps kept inside a bisection bracket.
fn chi2_quantile(k: f64, q: f64) -> f64 {
    let z = std::f64::consts::SQRT_2 * erf_inv(2.0 * q - 1.0);
    let c = 2.0 / (9.0 * k);
    let mut x = (k * (1.0 - c + z * c.sqrt()).powi(3)).max(1e-8);
    let (mut lo, mut hi) = (0.0, x.max(1.0));
    while chi2_cdf(k, hi) < q {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let f = chi2_cdf(k, x) - q;
        if f < 0.0 {
            lo = lo.max(x);
        } else {
            hi = hi.min(x);
        }
        let pdf = chi2_pdf(k, x);
        let mut next = x - f / pdf;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.max(1.0) || hi - lo <= 1e-15 * hi {
            return next;
        }
        x = next;
    }
    x
}

/// How bin terms over a window are aggregated before comparison with the
/// critical value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinStatistic {
    /// Average of the bin terms.
    #[default]
    Mean,
    /// Sum of the bin terms.
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HypothesisConfig {
    pub alpha: f64,
    pub statistic: BinStatistic,
}

impl Default for HypothesisConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            statistic: BinStatistic::Mean,
        }
    }
}

/// Outcome of the window search on one observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BinWindow {
    /// Too few bins for any window with positive degrees of freedom.
    NotApplicable,
    /// No window of more than `d` bins passes.
    Infeasible,
    /// 1-based inclusive window.
    Kept {
        start: usize,
        end: usize,
        statistic: f64,
        critical: f64,
    },
}

fn statistic(sum: f64, len: usize, kind: BinStatistic) -> f64 {
    match kind {
        BinStatistic::Mean => sum / len as f64,
        BinStatistic::Sum => sum,
    }
}

/// Longest contiguous window of `terms` whose statistic is at most the
/// critical value at `len − d` degrees of freedom. Among windows of that
/// length the smallest statistic wins, then the earliest start.
pub fn best_window(terms: &[f64], d: usize, cfg: &HypothesisConfig) -> Result<BinWindow> {
    let n = terms.len();
    if n <= d {
        return Ok(BinWindow::NotApplicable);
    }
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for t in terms {
        prefix.push(prefix.last().unwrap() + t);
    }
    for len in (d + 1..=n).rev() {
        let critical = chi2_critical(len - d, cfg.alpha)?;
        let mut best: Option<(usize, f64)> = None;
        for s in 0..=n - len {
            let stat = statistic(prefix[s + len] - prefix[s], len, cfg.statistic);
            if stat <= critical && best.is_none_or(|(_, b)| stat < b) {
                best = Some((s, stat));
            }
        }
        if let Some((s, stat)) = best {
            return Ok(BinWindow::Kept {
                start: s + 1,
                end: s + len,
                statistic: stat,
                critical,
            });
        }
    }
    Ok(BinWindow::Infeasible)
}

/// Per-bin `(f_b − R_b)²/(Δf_b² + ΔR_b²)` of observable `o` at `p`.
pub fn bin_terms(problem: &Problem, o: usize, p: &[f64]) -> Result<Vec<f64>> {
    let range = problem
        .selected_bins(o)
        .ok_or_else(|| Error::invalid("observable is excluded by the mask"))?;
    let s = problem.surrogate();
    let at = s.point(p);
    range
        .map(|b| {
            let (f, df) = s.eval_bin(b, &at)?;
            let (r, dr) = problem.reference_bin(b);
            Ok((f - r).powi(2) / (df * df + dr * dr))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    None,
    Observable,
    Bin,
}

impl std::str::FromStr for FilterMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(FilterMode::None),
            "observable" => Ok(FilterMode::Observable),
            "bin" => Ok(FilterMode::Bin),
            other => Err(Error::invalid(format!("unknown filter mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub hypothesis: HypothesisConfig,
    pub zscore_threshold: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            hypothesis: HypothesisConfig::default(),
            zscore_threshold: 3.0,
        }
    }
}

/// One line of the filter report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRow {
    pub id: String,
    pub bins: usize,
    pub bins_removed: usize,
    pub chi_ideal: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zscore: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<BinWindow>,
    /// Statistic over all bins, before filtering.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistic_before: Option<f64>,
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub mode: FilterMode,
    pub rows: Vec<FilterRow>,
    pub bins_total: usize,
    pub bins_removed: usize,
    pub observables_excluded: usize,
    /// Statistic conventions used by the run.
    pub metadata: BTreeMap<String, String>,
}

impl FilterReport {
    /// Plain-text table, one observable per line.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<40} {:>5} {:>8} {:>10} {:>10} {:>10} {:>10}\n",
            "observable", "bins", "removed", "critical", "before", "after", "chi_ideal"
        );
        for r in &self.rows {
            let (critical, after) = match &r.window {
                Some(BinWindow::Kept {
                    critical, statistic, ..
                }) => (format!("{critical:.2}"), format!("{statistic:.2}")),
                Some(BinWindow::Infeasible) => ("-".into(), "excluded".into()),
                Some(BinWindow::NotApplicable) => ("n/a".into(), "-".into()),
                None => ("-".into(), if r.excluded { "excluded".into() } else { "-".into() }),
            };
            let before = r.statistic_before.map_or("-".into(), |v| format!("{v:.2}"));
            out.push_str(&format!(
                "{:<40} {:>5} {:>8} {:>10} {:>10} {:>10} {:>10.4}\n",
                r.id, r.bins, r.bins_removed, critical, before, after, r.chi_ideal
            ));
        }
        out.push_str(&format!(
            "removed {} of {} bins; {} observables excluded\n",
            self.bins_removed, self.bins_total, self.observables_excluded
        ));
        out
    }
}

/// Runs the requested filter on the observables included in `problem`,
/// using per-observable ideal tunes. The returned mask already contains the
/// problem's own mask.
pub fn apply_filters(
    problem: &Problem,
    mode: FilterMode,
    cfg: &FilterConfig,
    inner: &Chi2Config,
) -> Result<(FilterMask, FilterReport)> {
    let included = problem.included();
    let bins_total: usize = included
        .iter()
        .map(|&o| problem.selected_bins(o).map_or(0, |r| r.len()))
        .sum();
    if mode == FilterMode::None {
        return Ok((
            problem.mask().clone(),
            FilterReport {
                mode,
                rows: Vec::new(),
                bins_total,
                bins_removed: 0,
                observables_excluded: 0,
                metadata: BTreeMap::new(),
            },
        ));
    }
    let ideal = problem.ideal_tunes(inner)?;
    filter_with_ideal(problem, mode, cfg, &ideal)
}

/// [`apply_filters`] with precomputed ideal tunes (one entry per included
/// observable, in order).
pub fn filter_with_ideal(
    problem: &Problem,
    mode: FilterMode,
    cfg: &FilterConfig,
    ideal: &IdealTuneTable,
) -> Result<(FilterMask, FilterReport)> {
    let included = problem.included();
    if ideal.entries.len() != included.len() {
        return Err(Error::Shape(format!(
            "{} ideal tunes for {} observables",
            ideal.entries.len(),
            included.len()
        )));
    }
    let ids = problem.reference().ids();
    let d = problem.dim();
    let bins_total: usize = included
        .iter()
        .map(|&o| problem.selected_bins(o).map_or(0, |r| r.len()))
        .sum();
    let mut mask = problem.mask().clone();
    let rows: Vec<FilterRow> = match mode {
        FilterMode::None => Vec::new(),
        FilterMode::Observable => {
            let chis: Vec<f64> = ideal.entries.iter().map(|e| e.chi_ideal).collect();
            let outliers: BTreeSet<usize> = zscore_outliers(&chis, cfg.zscore_threshold)?
                .into_iter()
                .collect();
            let n = chis.len() as f64;
            let m = chis.iter().sum::<f64>() / n;
            let s = (chis.iter().map(|c| (c - m) * (c - m)).sum::<f64>() / n).sqrt();
            included
                .iter()
                .enumerate()
                .map(|(i, &o)| {
                    let bins = problem.selected_bins(o).map_or(0, |r| r.len());
                    let excluded = outliers.contains(&i);
                    FilterRow {
                        id: ids[o].clone(),
                        bins,
                        bins_removed: if excluded { bins } else { 0 },
                        chi_ideal: chis[i],
                        zscore: (s > 0.0).then(|| (chis[i] - m) / s),
                        window: None,
                        statistic_before: None,
                        excluded,
                    }
                })
                .collect()
        }
        FilterMode::Bin => {
            let rows = par::map_range(included.len(), |i| -> Result<FilterRow> {
                let o = included[i];
                let entry = &ideal.entries[i];
                let terms = bin_terms(problem, o, &entry.p_ideal)?;
                let bins = terms.len();
                let window = best_window(&terms, d, &cfg.hypothesis)?;
                let bins_removed = match &window {
                    BinWindow::NotApplicable => 0,
                    BinWindow::Infeasible => bins,
                    BinWindow::Kept { start, end, .. } => bins - (end + 1 - start),
                };
                Ok(FilterRow {
                    id: ids[o].clone(),
                    bins,
                    bins_removed,
                    chi_ideal: entry.chi_ideal,
                    zscore: None,
                    statistic_before: Some(statistic(
                        terms.iter().sum(),
                        bins,
                        cfg.hypothesis.statistic,
                    )),
                    excluded: matches!(window, BinWindow::Infeasible),
                    window: Some(window),
                })
            });
            rows.into_iter().collect::<Result<_>>()?
        }
    };
    for (row, &o) in rows.iter().zip(&included) {
        if row.excluded {
            mask.exclude(row.id.clone());
        } else if let Some(BinWindow::Kept { start, end, .. }) = row.window {
            // Windows are relative to the already selected bins.
            let offset = problem.selected_bins(o).map_or(0, |r| r.start)
                - problem.reference().bin_range(o).start;
            let mut restrict = FilterMask::default();
            restrict.keep_range(row.id.clone(), offset + start, offset + end);
            mask = mask.merge(&restrict);
        }
    }
    let mut metadata = BTreeMap::new();
    match mode {
        FilterMode::Observable => {
            metadata.insert("zscore_deviation".into(), "population".into());
            metadata.insert("zscore_threshold".into(), cfg.zscore_threshold.to_string());
        }
        FilterMode::Bin => {
            let stat = match cfg.hypothesis.statistic {
                BinStatistic::Mean => "mean",
                BinStatistic::Sum => "sum",
            };
            metadata.insert("bin_statistic".into(), stat.into());
            metadata.insert("alpha".into(), cfg.hypothesis.alpha.to_string());
        }
        FilterMode::None => {}
    }
    let report = FilterReport {
        metadata,
        mode,
        bins_total,
        bins_removed: rows.iter().map(|r| r.bins_removed).sum(),
        observables_excluded: rows.iter().filter(|r| r.excluded).count(),
        rows,
    };
    Ok((mask, report))
}
