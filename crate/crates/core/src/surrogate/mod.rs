//! Per-bin analytic surrogates `f_b(p)` and `Δf_b(p)` fitted to simulator
//! runs.
//!
//! Parameters are mapped affinely onto `[-1, 1]^d` before the monomial basis
//! is built. Value and uncertainty models of a bin are fitted independently
//! with the same basis.

mod basis;
mod fit;

pub use basis::{binomial, MonomialBasis};
pub use fit::{
    envelope, fit, fit_polynomial, fit_rational, fit_with, BinFit, FitOptions, FitReport,
};

use serde::{Deserialize, Serialize};

use crate::data::{ParameterSpace, ReferenceSet};
use crate::error::{Error, Result};

/// Model family and degrees shared by every bin of a [`SurrogateSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Polynomial { degree: usize },
    Rational { num_degree: usize, den_degree: usize },
}

impl ModelKind {
    /// Cubic polynomial.
    pub const DEFAULT_POLYNOMIAL: ModelKind = ModelKind::Polynomial { degree: 3 };
    /// Cubic numerator over linear denominator.
    pub const DEFAULT_RATIONAL: ModelKind = ModelKind::Rational {
        num_degree: 3,
        den_degree: 1,
    };
}

/// Polynomial over the scaled monomial basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialModel {
    pub degree: usize,
    pub coefficients: Vec<f64>,
}

/// Ratio of two polynomials; `den_coefficients[0]` (the constant) is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalModel {
    pub num_degree: usize,
    pub den_degree: usize,
    pub num_coefficients: Vec<f64>,
    pub den_coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Polynomial(PolynomialModel),
    Rational(RationalModel),
}

impl Model {
    fn kind(&self) -> ModelKind {
        match self {
            Model::Polynomial(m) => ModelKind::Polynomial { degree: m.degree },
            Model::Rational(m) => ModelKind::Rational {
                num_degree: m.num_degree,
                den_degree: m.den_degree,
            },
        }
    }

    fn value(&self, at: &EvalPoint) -> Option<f64> {
        match self {
            Model::Polynomial(m) => Some(dot(&m.coefficients, &at.num)),
            Model::Rational(m) => {
                let q = dot(&m.den_coefficients, &at.den);
                if q > 0.0 {
                    Some(dot(&m.num_coefficients, &at.num) / q)
                } else {
                    None
                }
            }
        }
    }

    fn value_and_gradient(&self, at: &EvalPoint, grad: &mut [f64]) -> Option<f64> {
        let d = grad.len();
        match self {
            Model::Polynomial(m) => {
                grad.fill(0.0);
                for (c, row) in m.coefficients.iter().zip(at.num_grad.chunks_exact(d)) {
                    for (g, r) in grad.iter_mut().zip(row) {
                        *g += c * r;
                    }
                }
                Some(dot(&m.coefficients, &at.num))
            }
            Model::Rational(m) => {
                let q = dot(&m.den_coefficients, &at.den);
                if q <= 0.0 {
                    return None;
                }
                let n = dot(&m.num_coefficients, &at.num);
                let v = n / q;
                grad.fill(0.0);
                for (c, row) in m.num_coefficients.iter().zip(at.num_grad.chunks_exact(d)) {
                    for (g, r) in grad.iter_mut().zip(row) {
                        *g += c * r;
                    }
                }
                // ∇(n/q) = (∇n − v ∇q) / q
                for (c, row) in m.den_coefficients.iter().zip(at.den_grad.chunks_exact(d)) {
                    for (g, r) in grad.iter_mut().zip(row) {
                        *g -= v * c * r;
                    }
                }
                for g in grad.iter_mut() {
                    *g /= q;
                }
                Some(v)
            }
        }
    }

    fn coefficient_lengths(&self) -> (usize, usize) {
        match self {
            Model::Polynomial(m) => (m.coefficients.len(), 0),
            Model::Rational(m) => (m.num_coefficients.len(), m.den_coefficients.len()),
        }
    }
}

/// `id[k]` label (1-based k) of a global bin index.
pub(crate) fn layout_label(layout: &[(String, usize)], bin: usize) -> String {
    let mut offset = 0;
    for (id, n) in layout {
        if bin < offset + n {
            return format!("{id}[{}]", bin - offset + 1);
        }
        offset += n;
    }
    format!("#{bin}")
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Value model `f_b` and uncertainty model `Δf_b` of one bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinModel {
    pub value: Model,
    pub uncertainty: Model,
}

/// Affine map `z = (p − center) · scale` onto `[-1, 1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaling {
    pub fn for_space(space: &ParameterSpace) -> Self {
        Self {
            center: space
                .lower()
                .iter()
                .zip(space.upper())
                .map(|(lo, hi)| 0.5 * (lo + hi))
                .collect(),
            scale: space
                .lower()
                .iter()
                .zip(space.upper())
                .map(|(lo, hi)| 2.0 / (hi - lo))
                .collect(),
        }
    }

    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(self.center.iter().zip(&self.scale))
            .map(|(x, (c, s))| (x - c) * s)
            .collect()
    }
}

/// Precomputed basis values at one parameter point, shared by all bins.
#[derive(Debug, Clone)]
pub struct EvalPoint {
    num: Vec<f64>,
    num_grad: Vec<f64>,
    den: Vec<f64>,
    den_grad: Vec<f64>,
    /// True when the point lies outside the sampled parameter box.
    pub extrapolated: bool,
}

/// Surrogate predictions for every bin at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub values: Vec<f64>,
    pub uncertainties: Vec<f64>,
    pub extrapolated: bool,
}

/// Predictions plus gradients; gradients are row-major `bins × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPrediction {
    pub values: Vec<f64>,
    pub uncertainties: Vec<f64>,
    pub value_gradients: Vec<f64>,
    pub uncertainty_gradients: Vec<f64>,
    pub extrapolated: bool,
}

/// Complete set of per-bin surrogates for a reference layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SurrogateDocument", into = "SurrogateDocument")]
pub struct SurrogateSet {
    space: ParameterSpace,
    kind: ModelKind,
    scaling: Scaling,
    layout: Vec<(String, usize)>,
    bins: Vec<BinModel>,
    num_basis: MonomialBasis,
    den_basis: Option<MonomialBasis>,
}

#[derive(Serialize, Deserialize)]
struct SurrogateDocument {
    space: ParameterSpace,
    model: ModelKind,
    scaling: Scaling,
    observables: Vec<LayoutEntry>,
    bins: Vec<BinModel>,
}

#[derive(Serialize, Deserialize)]
struct LayoutEntry {
    id: String,
    bins: usize,
}

impl TryFrom<SurrogateDocument> for SurrogateSet {
    type Error = Error;
    fn try_from(doc: SurrogateDocument) -> Result<Self> {
        let layout = doc.observables.into_iter().map(|e| (e.id, e.bins)).collect();
        let mut set = SurrogateSet::from_models(doc.space, doc.model, layout, doc.bins)?;
        set.scaling = doc.scaling;
        Ok(set)
    }
}

impl From<SurrogateSet> for SurrogateDocument {
    fn from(s: SurrogateSet) -> Self {
        SurrogateDocument {
            space: s.space,
            model: s.kind,
            scaling: s.scaling,
            observables: s
                .layout
                .into_iter()
                .map(|(id, bins)| LayoutEntry { id, bins })
                .collect(),
            bins: s.bins,
        }
    }
}

impl SurrogateSet {
    /// Assembles a set from explicit coefficients, checking that every model
    /// matches `kind` and the basis sizes.
    pub fn from_models(
        space: ParameterSpace,
        kind: ModelKind,
        layout: Vec<(String, usize)>,
        bins: Vec<BinModel>,
    ) -> Result<Self> {
        let d = space.dim();
        let (num_basis, den_basis) = match kind {
            ModelKind::Polynomial { degree } => (MonomialBasis::new(d, degree), None),
            ModelKind::Rational {
                num_degree,
                den_degree,
            } => (
                MonomialBasis::new(d, num_degree),
                Some(MonomialBasis::new(d, den_degree)),
            ),
        };
        let expected = (num_basis.len(), den_basis.as_ref().map_or(0, |b| b.len()));
        let total: usize = layout.iter().map(|(_, n)| n).sum();
        if total != bins.len() {
            return Err(Error::Shape(format!(
                "layout covers {total} bins but {} bin models were given",
                bins.len()
            )));
        }
        for (i, b) in bins.iter().enumerate() {
            for m in [&b.value, &b.uncertainty] {
                if m.kind() != kind {
                    return Err(Error::invalid(format!(
                        "bin {i}: model {:?} does not match surrogate kind {kind:?}",
                        m.kind()
                    )));
                }
                if m.coefficient_lengths() != expected {
                    return Err(Error::Shape(format!(
                        "bin {i}: coefficient lengths {:?}, expected {expected:?}",
                        m.coefficient_lengths()
                    )));
                }
            }
        }
        Ok(Self {
            scaling: Scaling::for_space(&space),
            space,
            kind,
            layout,
            bins,
            num_basis,
            den_basis,
        })
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn scaling(&self) -> &Scaling {
        &self.scaling
    }

    pub fn layout(&self) -> &[(String, usize)] {
        &self.layout
    }

    pub fn bins(&self) -> &[BinModel] {
        &self.bins
    }

    pub fn n_bins(&self) -> usize {
        self.bins.len()
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    /// Checks that this set covers exactly the bins of `reference`.
    pub fn check_covers(&self, reference: &ReferenceSet) -> Result<()> {
        if self.layout != reference.layout() {
            return Err(Error::Shape(
                "surrogate layout (observable ids and bin counts) differs from the reference".into(),
            ));
        }
        Ok(())
    }

    fn label(&self, bin: usize) -> String {
        layout_label(&self.layout, bin)
    }

    /// Basis values at `p`, without gradients.
    pub fn point(&self, p: &[f64]) -> EvalPoint {
        let z = self.scaling.apply(p);
        EvalPoint {
            num: self.num_basis.values(&z),
            num_grad: Vec::new(),
            den: self.den_basis.as_ref().map_or_else(Vec::new, |b| b.values(&z)),
            den_grad: Vec::new(),
            extrapolated: !self.space.contains(p),
        }
    }

    /// Basis values and gradients (in original parameter units) at `p`.
    pub fn point_with_gradient(&self, p: &[f64]) -> EvalPoint {
        let z = self.scaling.apply(p);
        let d = self.dim();
        let rescale = |mut g: Vec<f64>| {
            for row in g.chunks_exact_mut(d) {
                for (x, s) in row.iter_mut().zip(&self.scaling.scale) {
                    *x *= s;
                }
            }
            g
        };
        let (num, num_grad) = self.num_basis.values_and_gradients(&z);
        let (den, den_grad) = match &self.den_basis {
            Some(b) => b.values_and_gradients(&z),
            None => (Vec::new(), Vec::new()),
        };
        EvalPoint {
            num,
            num_grad: rescale(num_grad),
            den,
            den_grad: rescale(den_grad),
            extrapolated: !self.space.contains(p),
        }
    }

    /// `(f_b, Δf_b)` for one bin; `Δf_b` is clamped at zero.
    pub fn eval_bin(&self, bin: usize, at: &EvalPoint) -> Result<(f64, f64)> {
        let m = &self.bins[bin];
        let f = m.value.value(at);
        let df = m.uncertainty.value(at);
        match (f, df) {
            (Some(f), Some(df)) => Ok((f, df.max(0.0))),
            _ => Err(Error::DenominatorNotPositive {
                bin: self.label(bin),
            }),
        }
    }

    /// Like [`eval_bin`](Self::eval_bin), also writing `∇f_b` and `∇Δf_b`.
    /// The uncertainty gradient is zero wherever the clamp is active.
    pub fn eval_bin_gradient(
        &self,
        bin: usize,
        at: &EvalPoint,
        grad_f: &mut [f64],
        grad_df: &mut [f64],
    ) -> Result<(f64, f64)> {
        let m = &self.bins[bin];
        let f = m.value.value_and_gradient(at, grad_f);
        let df = m.uncertainty.value_and_gradient(at, grad_df);
        match (f, df) {
            (Some(f), Some(df)) => {
                if df < 0.0 {
                    grad_df.fill(0.0);
                }
                Ok((f, df.max(0.0)))
            }
            _ => Err(Error::DenominatorNotPositive {
                bin: self.label(bin),
            }),
        }
    }

    pub fn eval(&self, p: &[f64]) -> Result<Prediction> {
        let at = self.point(p);
        let mut values = Vec::with_capacity(self.n_bins());
        let mut uncertainties = Vec::with_capacity(self.n_bins());
        for b in 0..self.n_bins() {
            let (f, df) = self.eval_bin(b, &at)?;
            values.push(f);
            uncertainties.push(df);
        }
        Ok(Prediction {
            values,
            uncertainties,
            extrapolated: at.extrapolated,
        })
    }

    pub fn eval_gradient(&self, p: &[f64]) -> Result<GradientPrediction> {
        let at = self.point_with_gradient(p);
        let d = self.dim();
        let n = self.n_bins();
        let mut out = GradientPrediction {
            values: Vec::with_capacity(n),
            uncertainties: Vec::with_capacity(n),
            value_gradients: vec![0.0; n * d],
            uncertainty_gradients: vec![0.0; n * d],
            extrapolated: at.extrapolated,
        };
        for b in 0..n {
            let (f, df) = self.eval_bin_gradient(
                b,
                &at,
                &mut out.value_gradients[b * d..(b + 1) * d],
                &mut out.uncertainty_gradients[b * d..(b + 1) * d],
            )?;
            out.values.push(f);
            out.uncertainties.push(df);
        }
        Ok(out)
    }
}
