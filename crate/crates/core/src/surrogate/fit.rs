//! Least-squares fitting of per-bin surrogates.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{
    layout_label, BinModel, MonomialBasis, Model, ModelKind, PolynomialModel, RationalModel,
    Scaling, SurrogateSet,
};
use crate::data::McRunGrid;
use crate::error::{Error, Result};
use crate::par;

/// Smallest accepted ratio of smallest to largest singular value for the
/// polynomial design matrix.
const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Reweight the linearized rational problem by the previous denominator.
    pub reweight: bool,
    pub max_sweeps: usize,
    pub sweep_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            reweight: true,
            max_sweeps: 20,
            sweep_tolerance: 1e-10,
        }
    }
}

/// Residual summary of one fitted bin, over the simulator runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinFit {
    pub bin: String,
    pub value_rms: f64,
    pub value_max_abs: f64,
    pub uncertainty_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub model: ModelKind,
    pub n_runs: usize,
    pub n_coefficients: usize,
    /// Condition number of the shared polynomial design matrix.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub condition_number: Option<f64>,
    pub bins: Vec<BinFit>,
}

impl FitReport {
    /// Bin with the largest value RMS residual.
    pub fn worst(&self) -> Option<&BinFit> {
        self.bins
            .iter()
            .max_by(|a, b| a.value_rms.total_cmp(&b.value_rms))
    }
}

pub fn fit(grid: &McRunGrid, kind: ModelKind) -> Result<(SurrogateSet, FitReport)> {
    fit_with(grid, kind, &FitOptions::default())
}

pub fn fit_polynomial(grid: &McRunGrid, degree: usize) -> Result<(SurrogateSet, FitReport)> {
    fit(grid, ModelKind::Polynomial { degree })
}

pub fn fit_rational(
    grid: &McRunGrid,
    num_degree: usize,
    den_degree: usize,
) -> Result<(SurrogateSet, FitReport)> {
    fit(
        grid,
        ModelKind::Rational {
            num_degree,
            den_degree,
        },
    )
}

pub fn fit_with(
    grid: &McRunGrid,
    kind: ModelKind,
    options: &FitOptions,
) -> Result<(SurrogateSet, FitReport)> {
    let layout = grid.layout().to_vec();
    if grid.n_bins() == 0 {
        return Err(Error::invalid("simulator grid has no bins"));
    }
    let scaling = Scaling::for_space(&grid.space);
    let scaled: Vec<Vec<f64>> = grid.points.iter().map(|p| scaling.apply(p)).collect();
    let n_runs = grid.n_runs();
    let d = grid.space.dim();

    let (bins, n_coefficients, condition_number) = match kind {
        ModelKind::Polynomial { degree } => {
            let basis = MonomialBasis::new(d, degree);
            let m = basis.len();
            if n_runs < m {
                return Err(Error::InsufficientRuns {
                    bin: layout_label(&layout, 0),
                    have: n_runs,
                    need: m,
                });
            }
            let x = design(&basis, &scaled);
            let svd = x.svd(true, true);
            let sv = &svd.singular_values;
            let (smax, smin) = (sv.max(), sv.min());
            if !(smin > smax * RANK_TOLERANCE) {
                return Err(Error::RankDeficient {
                    bin: layout_label(&layout, 0),
                });
            }
            let pinv = svd
                .pseudo_inverse(0.0)
                .map_err(|e| Error::Numerical(e.to_string()))?;
            let coeffs = |y: Vec<f64>| -> Model {
                Model::Polynomial(PolynomialModel {
                    degree,
                    coefficients: (&pinv * DVector::from_vec(y)).iter().copied().collect(),
                })
            };
            let bins = par::map_range(grid.n_bins(), |b| BinModel {
                value: coeffs(grid.column(b)),
                uncertainty: coeffs(grid.uncertainty_column(b)),
            });
            (bins, m, Some(smax / smin))
        }
        ModelKind::Rational {
            num_degree,
            den_degree,
        } => {
            let nb = MonomialBasis::new(d, num_degree);
            let db = MonomialBasis::new(d, den_degree);
            let need = nb.len() + db.len() - 1;
            if n_runs < need {
                return Err(Error::InsufficientRuns {
                    bin: layout_label(&layout, 0),
                    have: n_runs,
                    need,
                });
            }
            let xn = design(&nb, &scaled);
            let xd = design(&db, &scaled);
            let fitted = par::map_range(grid.n_bins(), |b| {
                let value = rational_column(&xn, &xd, &grid.column(b), options);
                let unc = rational_column(&xn, &xd, &grid.uncertainty_column(b), options);
                match (value, unc) {
                    (Some((a, q)), Some((ua, uq))) => Ok(BinModel {
                        value: Model::Rational(RationalModel {
                            num_degree,
                            den_degree,
                            num_coefficients: a,
                            den_coefficients: q,
                        }),
                        uncertainty: Model::Rational(RationalModel {
                            num_degree,
                            den_degree,
                            num_coefficients: ua,
                            den_coefficients: uq,
                        }),
                    }),
                    _ => Err(Error::Pole {
                        bin: layout_label(&layout, b),
                    }),
                }
            });
            let bins = fitted.into_iter().collect::<Result<Vec<_>>>()?;
            (bins, need, None)
        }
    };

    let set = SurrogateSet::from_models(grid.space.clone(), kind, layout.clone(), bins)?;
    let points: Vec<_> = grid.points.iter().map(|p| set.point(p)).collect();
    let report_bins = par::map_range(grid.n_bins(), |b| {
        let mut sv = 0.0;
        let mut su = 0.0;
        let mut max_abs: f64 = 0.0;
        for (r, at) in points.iter().enumerate() {
            let (f, df) = set
                .eval_bin(b, at)
                .expect("denominator checked positive on every run");
            let rv = f - grid.values[r][b];
            let ru = df - grid.uncertainties[r][b];
            sv += rv * rv;
            su += ru * ru;
            max_abs = max_abs.max(rv.abs());
        }
        BinFit {
            bin: layout_label(&layout, b),
            value_rms: (sv / n_runs as f64).sqrt(),
            value_max_abs: max_abs,
            uncertainty_rms: (su / n_runs as f64).sqrt(),
        }
    });
    let report = FitReport {
        model: kind,
        n_runs,
        n_coefficients,
        condition_number,
        bins: report_bins,
    };
    Ok((set, report))
}

fn design(basis: &MonomialBasis, scaled: &[Vec<f64>]) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = scaled.iter().map(|z| basis.values(z)).collect();
    DMatrix::from_fn(rows.len(), basis.len(), |r, c| rows[r][c])
}

/// Linearized fit of `y ≈ P(z)/Q(z)` with `Q`'s constant pinned to 1:
/// `P(z_i) − y_i (Q(z_i) − 1) = y_i`. Returns `None` if `Q` is not
/// positive at every run.
fn rational_column(
    xn: &DMatrix<f64>,
    xd: &DMatrix<f64>,
    y: &[f64],
    options: &FitOptions,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = y.len();
    let nn = xn.ncols();
    let nd = xd.ncols() - 1;
    let solve = |weights: &[f64]| -> Option<DVector<f64>> {
        let a = DMatrix::from_fn(n, nn + nd, |r, c| {
            let v = if c < nn {
                xn[(r, c)]
            } else {
                -y[r] * xd[(r, c - nn + 1)]
            };
            weights[r] * v
        });
        let rhs = DVector::from_fn(n, |r, _| weights[r] * y[r]);
        let svd = a.svd(true, true);
        let eps = svd.singular_values.max() * (n.max(nn + nd) as f64) * f64::EPSILON;
        svd.solve(&rhs, eps).ok()
    };
    let denominators = |c: &DVector<f64>| -> Vec<f64> {
        (0..n)
            .map(|r| 1.0 + (0..nd).map(|k| c[nn + k] * xd[(r, k + 1)]).sum::<f64>())
            .collect()
    };

    let mut c = solve(&vec![1.0; n])?;
    if options.reweight && nd > 0 {
        for _ in 0..options.max_sweeps {
            let q = denominators(&c);
            if q.iter().any(|&v| v <= 0.0) {
                break;
            }
            let w: Vec<f64> = q.iter().map(|v| 1.0 / v).collect();
            let Some(next) = solve(&w) else { break };
            let change = (&next - &c).amax();
            c = next;
            if change < options.sweep_tolerance {
                break;
            }
        }
    }
    if denominators(&c).iter().any(|&v| !(v > 0.0)) {
        return None;
    }
    let num = c.rows(0, nn).iter().copied().collect();
    let mut den = Vec::with_capacity(nd + 1);
    den.push(1.0);
    den.extend(c.rows(nn, nd).iter().copied());
    Some((num, den))
}

/// Per-bin `(min, max)` of the simulator predictions across runs.
pub fn envelope(grid: &McRunGrid) -> Vec<(f64, f64)> {
    (0..grid.n_bins())
        .map(|b| {
            grid.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), row| {
                (lo.min(row[b]), hi.max(row[b]))
            })
        })
        .collect()
}
