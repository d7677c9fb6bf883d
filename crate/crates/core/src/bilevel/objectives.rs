//! Outer objectives scoring an inner optimum `p̂`.

use serde::{Deserialize, Serialize};

use crate::chi2::Problem;
use crate::data::Method;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "objective", rename_all = "snake_case")]
pub enum OuterObjective {
    /// Mean plus `lambda` times the population variance of the
    /// per-observable mean χ².
    Portfolio { lambda: f64 },
    /// Sum over observables of the mean bin score.
    MeanScore,
    /// Sum over observables of the median bin score.
    MedianScore,
}

impl OuterObjective {
    pub fn name(self) -> &'static str {
        match self {
            OuterObjective::Portfolio { .. } => "portfolio",
            OuterObjective::MeanScore => "meanscore",
            OuterObjective::MedianScore => "medianscore",
        }
    }

    pub fn method(self) -> Method {
        match self {
            OuterObjective::Portfolio { .. } => Method::BilevelPortfolio,
            OuterObjective::MeanScore => Method::BilevelMeanscore,
            OuterObjective::MedianScore => Method::BilevelMedianscore,
        }
    }

    /// Value at `p_hat` over the observables included in `problem`.
    pub fn evaluate(self, problem: &Problem, p_hat: &[f64]) -> Result<f64> {
        let included = problem.included();
        match self {
            OuterObjective::Portfolio { lambda } => {
                let errors = problem
                    .observable_chi2_all(p_hat)?
                    .into_iter()
                    .flatten()
                    .collect::<Vec<_>>();
                Ok(portfolio(&errors, lambda))
            }
            OuterObjective::MeanScore | OuterObjective::MedianScore => {
                let at = problem.point(p_hat);
                let mut total = 0.0;
                for o in included {
                    let scores = problem.bin_scores_at(&at, o)?;
                    total += if self == OuterObjective::MeanScore {
                        mean(&scores)
                    } else {
                        median(&scores)
                    };
                }
                Ok(total)
            }
        }
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Median; an even count averages the two central values.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `mean(e) + λ·var(e)` with the population variance.
pub fn portfolio(errors: &[f64], lambda: f64) -> f64 {
    let m = mean(errors);
    let var = errors.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / errors.len() as f64;
    m + lambda * var
}
