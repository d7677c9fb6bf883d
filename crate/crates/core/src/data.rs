//! Shared domain types, file ingestion and validation.
//!
//! Bins are addressed two ways: by `(observable, local bin)` and by a global
//! column index that runs through the observables in reference order. The
//! mapping is fixed at ingest and used consistently by every module.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Names and box bounds of the tunable parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace", into = "RawSpace")]
pub struct ParameterSpace {
    names: Vec<String>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawSpace {
    names: Vec<String>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<RawSpace> for ParameterSpace {
    type Error = Error;
    fn try_from(raw: RawSpace) -> Result<Self> {
        ParameterSpace::new(raw.names, raw.lower, raw.upper)
    }
}

impl From<ParameterSpace> for RawSpace {
    fn from(s: ParameterSpace) -> Self {
        RawSpace {
            names: s.names,
            lower: s.lower,
            upper: s.upper,
        }
    }
}

impl ParameterSpace {
    pub fn new(names: Vec<String>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let d = names.len();
        if d == 0 {
            return Err(Error::invalid("parameter space needs at least one parameter"));
        }
        if lower.len() != d || upper.len() != d {
            return Err(Error::Shape(format!(
                "{d} parameter names but {} lower and {} upper bounds",
                lower.len(),
                upper.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for (i, name) in names.iter().enumerate() {
            if !seen.insert(name.as_str()) {
                return Err(Error::invalid(format!("duplicate parameter name {name:?}")));
            }
            if !(lower[i].is_finite() && upper[i].is_finite() && lower[i] < upper[i]) {
                return Err(Error::invalid(format!(
                    "parameter {name:?}: lower bound {} must be below upper bound {}",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(Self { names, lower, upper })
    }

    /// Unnamed parameters `p1..pd`.
    pub fn from_bounds(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let names = (1..=lower.len()).map(|i| format!("p{i}")).collect();
        Self::new(names, lower, upper)
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&x, (&lo, &hi))| x >= lo && x <= hi)
    }

    pub fn clamp(&self, p: &mut [f64]) {
        for ((x, &lo), &hi) in p.iter_mut().zip(&self.lower).zip(&self.upper) {
            *x = x.clamp(lo, hi);
        }
    }

    /// Position of each coordinate relative to its range: 0 at the lower
    /// bound, 1 at the upper bound.
    pub fn relative_position(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&x, (&lo, &hi))| (x - lo) / (hi - lo))
            .collect()
    }

    /// Inverse of [`relative_position`](Self::relative_position).
    pub fn from_relative(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&t, (&lo, &hi))| lo + t * (hi - lo))
            .collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(lo, hi)| hi - lo).collect()
    }
}

/// One measured histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    pub id: String,
    pub group: Option<String>,
    pub values: Vec<f64>,
    pub uncertainties: Vec<f64>,
}

impl Observable {
    pub fn new(
        id: impl Into<String>,
        values: Vec<f64>,
        uncertainties: Vec<f64>,
    ) -> Result<Self> {
        let obs = Observable {
            id: id.into(),
            group: None,
            values,
            uncertainties,
        };
        obs.validate()?;
        Ok(obs)
    }

    pub fn with_group(mut self, group: impl Into<String>) -> Self {
        self.group = Some(group.into());
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::invalid(format!("observable {:?} has no bins", self.id)));
        }
        if self.values.len() != self.uncertainties.len() {
            return Err(Error::Shape(format!(
                "observable {:?}: {} values but {} uncertainties",
                self.id,
                self.values.len(),
                self.uncertainties.len()
            )));
        }
        for (b, (&v, &u)) in self.values.iter().zip(&self.uncertainties).enumerate() {
            if !v.is_finite() {
                return Err(Error::invalid(format!(
                    "observable {:?} bin {}: value is not finite",
                    self.id,
                    b + 1
                )));
            }
            if !(u.is_finite() && u > 0.0) {
                return Err(Error::invalid(format!(
                    "observable {:?} bin {}: uncertainty {u} must be strictly positive",
                    self.id,
                    b + 1
                )));
            }
        }
        Ok(())
    }
}

/// The reference data: observables in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    observables: Vec<Observable>,
    index: HashMap<String, usize>,
    offsets: Vec<usize>,
}

impl ReferenceSet {
    pub fn new(observables: Vec<Observable>) -> Result<Self> {
        if observables.is_empty() {
            return Err(Error::invalid("no observables"));
        }
        let mut index = HashMap::with_capacity(observables.len());
        let mut offsets = Vec::with_capacity(observables.len() + 1);
        let mut total = 0;
        for (i, obs) in observables.iter().enumerate() {
            obs.validate()?;
            if index.insert(obs.id.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate observable id {:?}", obs.id)));
            }
            offsets.push(total);
            total += obs.len();
        }
        offsets.push(total);
        Ok(Self {
            observables,
            index,
            offsets,
        })
    }

    pub fn observables(&self) -> &[Observable] {
        &self.observables
    }

    pub fn len(&self) -> usize {
        self.observables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observables.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Observable> {
        self.index.get(id).map(|&i| &self.observables[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn total_bins(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    /// Global column range of observable `obs`.
    pub fn bin_range(&self, obs: usize) -> Range<usize> {
        self.offsets[obs]..self.offsets[obs + 1]
    }

    pub fn ids(&self) -> Vec<String> {
        self.observables.iter().map(|o| o.id.clone()).collect()
    }

    /// `(id, bin count)` per observable, the layout a surrogate must match.
    pub fn layout(&self) -> Vec<(String, usize)> {
        self.observables
            .iter()
            .map(|o| (o.id.clone(), o.len()))
            .collect()
    }

    /// Human-readable name for global column `bin`.
    pub fn bin_label(&self, bin: usize) -> String {
        let obs = self.offsets.partition_point(|&o| o <= bin) - 1;
        format!(
            "{}[{}]",
            self.observables[obs].id,
            bin - self.offsets[obs] + 1
        )
    }

    pub fn to_document(&self) -> ReferenceDocument {
        ReferenceDocument {
            observables: self
                .observables
                .iter()
                .map(|o| ObservableDocument {
                    id: o.id.clone(),
                    group: o.group.clone(),
                    bins: o
                        .values
                        .iter()
                        .zip(&o.uncertainties)
                        .map(|(&value, &uncertainty)| BinDocument { value, uncertainty })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: ReferenceDocument) -> Result<Self> {
        let observables = doc
            .observables
            .into_iter()
            .map(|o| Observable {
                id: o.id,
                group: o.group,
                values: o.bins.iter().map(|b| b.value).collect(),
                uncertainties: o.bins.iter().map(|b| b.uncertainty).collect(),
            })
            .collect();
        Self::new(observables)
    }
}

/// On-disk reference format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceDocument {
    pub observables: Vec<ObservableDocument>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservableDocument {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    pub bins: Vec<BinDocument>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BinDocument {
    pub value: f64,
    pub uncertainty: f64,
}

/// Simulator runs: sampled parameter points with per-bin predictions.
///
/// `values[run][column]` uses the global column order of the reference set
/// the grid was loaded against.
#[derive(Debug, Clone, PartialEq)]
pub struct McRunGrid {
    pub space: ParameterSpace,
    pub points: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
    pub uncertainties: Vec<Vec<f64>>,
    layout: Vec<(String, usize)>,
}

impl McRunGrid {
    pub fn new(
        space: ParameterSpace,
        reference: &ReferenceSet,
        points: Vec<Vec<f64>>,
        values: Vec<Vec<f64>>,
        uncertainties: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("no simulator runs"));
        }
        if points.len() == 1 {
            log::warn!("only one simulator run; surrogate fits above degree 0 will fail");
        }
        let n_bins = reference.total_bins();
        if values.len() != points.len() || uncertainties.len() != points.len() {
            return Err(Error::Shape(format!(
                "{} points but {} value rows and {} uncertainty rows",
                points.len(),
                values.len(),
                uncertainties.len()
            )));
        }
        for (r, p) in points.iter().enumerate() {
            if p.len() != space.dim() {
                return Err(Error::Shape(format!(
                    "run {r}: point has {} coordinates, expected {}",
                    p.len(),
                    space.dim()
                )));
            }
            if !space.contains(p) {
                return Err(Error::invalid(format!(
                    "run {r}: point {p:?} lies outside the parameter bounds"
                )));
            }
            if values[r].len() != n_bins || uncertainties[r].len() != n_bins {
                return Err(Error::Shape(format!(
                    "run {r}: {} values and {} uncertainties for {n_bins} reference bins",
                    values[r].len(),
                    uncertainties[r].len()
                )));
            }
            if let Some(c) = values[r].iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "run {r}: non-finite prediction in bin {}",
                    reference.bin_label(c)
                )));
            }
            if let Some(c) = uncertainties[r].iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::invalid(format!(
                    "run {r}: invalid uncertainty in bin {}",
                    reference.bin_label(c)
                )));
            }
        }
        Ok(Self {
            space,
            points,
            values,
            uncertainties,
            layout: reference.layout(),
        })
    }

    pub fn n_runs(&self) -> usize {
        self.points.len()
    }

    pub fn n_bins(&self) -> usize {
        self.layout.iter().map(|(_, n)| n).sum()
    }

    pub fn layout(&self) -> &[(String, usize)] {
        &self.layout
    }

    /// Predictions of one column across all runs.
    pub fn column(&self, bin: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[bin]).collect()
    }

    pub fn uncertainty_column(&self, bin: usize) -> Vec<f64> {
        self.uncertainties.iter().map(|row| row[bin]).collect()
    }

    pub fn to_document(&self) -> McRunDocument {
        let runs = self
            .points
            .iter()
            .enumerate()
            .map(|(r, point)| {
                let mut observables = BTreeMap::new();
                let mut offset = 0;
                for (id, n) in &self.layout {
                    observables.insert(
                        id.clone(),
                        RunObservable {
                            values: self.values[r][offset..offset + n].to_vec(),
                            uncertainties: self.uncertainties[r][offset..offset + n].to_vec(),
                        },
                    );
                    offset += n;
                }
                RunDocument {
                    point: point.clone(),
                    observables,
                }
            })
            .collect();
        McRunDocument {
            params: self.space.clone(),
            runs,
        }
    }

    pub fn from_document(doc: McRunDocument, reference: &ReferenceSet) -> Result<Self> {
        let n_bins = reference.total_bins();
        let mut points = Vec::with_capacity(doc.runs.len());
        let mut values = Vec::with_capacity(doc.runs.len());
        let mut uncertainties = Vec::with_capacity(doc.runs.len());
        for (r, run) in doc.runs.into_iter().enumerate() {
            let mut v = Vec::with_capacity(n_bins);
            let mut u = Vec::with_capacity(n_bins);
            for obs in reference.observables() {
                let entry = run.observables.get(&obs.id).ok_or_else(|| {
                    Error::Shape(format!("run {r}: missing observable {:?}", obs.id))
                })?;
                if entry.values.len() != obs.len() || entry.uncertainties.len() != obs.len() {
                    return Err(Error::Shape(format!(
                        "run {r}: observable {:?} has {} values and {} uncertainties, reference has {} bins",
                        obs.id,
                        entry.values.len(),
                        entry.uncertainties.len(),
                        obs.len()
                    )));
                }
                v.extend_from_slice(&entry.values);
                u.extend_from_slice(&entry.uncertainties);
            }
            if run.observables.len() > reference.len() {
                log::warn!(
                    "run {r}: ignoring {} observables absent from the reference",
                    run.observables.len() - reference.len()
                );
            }
            points.push(run.point);
            values.push(v);
            uncertainties.push(u);
        }
        Self::new(doc.params, reference, points, values, uncertainties)
    }
}

/// On-disk simulator-run format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McRunDocument {
    pub params: ParameterSpace,
    pub runs: Vec<RunDocument>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunDocument {
    pub point: Vec<f64>,
    pub observables: BTreeMap<String, RunObservable>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunObservable {
    pub values: Vec<f64>,
    pub uncertainties: Vec<f64>,
}

/// Per-observable weights, in reference order.
///
/// Serializes as a JSON object whose key order is the vector order; input
/// key order is preserved.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    ids: Vec<String>,
    values: Vec<f64>,
}

impl Serialize for WeightVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(self.ids.len()))?;
        for (id, w) in self.ids.iter().zip(&self.values) {
            map.serialize_entry(id, w)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for WeightVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct Visitor;
        impl<'de> serde::de::Visitor<'de> for Visitor {
            type Value = WeightVector;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a map from observable id to weight")
            }
            fn visit_map<A: serde::de::MapAccess<'de>>(
                self,
                mut access: A,
            ) -> std::result::Result<WeightVector, A::Error> {
                let mut ids = Vec::new();
                let mut values = Vec::new();
                while let Some((id, w)) = access.next_entry::<String, f64>()? {
                    if ids.contains(&id) {
                        return Err(serde::de::Error::custom(format!("duplicate weight id {id:?}")));
                    }
                    ids.push(id);
                    values.push(w);
                }
                WeightVector::new(ids, values).map_err(serde::de::Error::custom)
            }
        }
        d.deserialize_map(Visitor)
    }
}

impl WeightVector {
    pub fn new(ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if ids.len() != values.len() {
            return Err(Error::Shape(format!(
                "{} ids but {} weights",
                ids.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid(format!(
                "weight for {:?} must be finite and non-negative, got {}",
                ids[i], values[i]
            )));
        }
        Ok(Self { ids, values })
    }

    /// Weight 1 for every observable of `reference`.
    pub fn ones(reference: &ReferenceSet) -> Self {
        Self {
            ids: reference.ids(),
            values: vec![1.0; reference.len()],
        }
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.ids.iter().position(|i| i == id).map(|i| self.values[i])
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.sum() - 1.0).abs() <= 1e-12
    }

    /// Reorders to match `reference`, rejecting unknown or missing ids.
    pub fn aligned_to(&self, reference: &ReferenceSet) -> Result<Vec<f64>> {
        let mut out = vec![f64::NAN; reference.len()];
        for (id, &w) in self.ids.iter().zip(&self.values) {
            let pos = reference
                .position(id)
                .ok_or_else(|| Error::invalid(format!("weight given for unknown observable {id:?}")))?;
            out[pos] = w;
        }
        if let Some(i) = out.iter().position(|w| w.is_nan()) {
            return Err(Error::invalid(format!(
                "no weight given for observable {:?}",
                reference.observables()[i].id
            )));
        }
        Ok(out)
    }
}

/// Rescales `w` so its entries sum to one.
pub fn normalize_weights(w: &WeightVector) -> Result<WeightVector> {
    let values = normalize(w.values())?;
    Ok(WeightVector {
        ids: w.ids.clone(),
        values,
    })
}

pub(crate) fn normalize(w: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = w.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::TrivialWeights);
    }
    Ok(w.iter().map(|x| x / total).collect())
}

/// Excluded observables and restricted bin windows.
///
/// Bin ranges are 1-based and inclusive, as printed in filter reports.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterMask {
    pub excluded_observables: BTreeSet<String>,
    pub kept_bin_range: BTreeMap<String, (usize, usize)>,
}

impl FilterMask {
    pub fn is_empty(&self) -> bool {
        self.excluded_observables.is_empty() && self.kept_bin_range.is_empty()
    }

    pub fn exclude(&mut self, id: impl Into<String>) {
        let id = id.into();
        self.kept_bin_range.remove(&id);
        self.excluded_observables.insert(id);
    }

    pub fn keep_range(&mut self, id: impl Into<String>, start: usize, end: usize) {
        let id = id.into();
        if !self.excluded_observables.contains(&id) {
            self.kept_bin_range.insert(id, (start, end));
        }
    }

    /// Union of exclusions; where both restrict an observable, the
    /// intersection of the windows is kept.
    pub fn merge(&self, other: &FilterMask) -> FilterMask {
        let mut out = self.clone();
        for id in &other.excluded_observables {
            out.exclude(id.clone());
        }
        for (id, &(s, e)) in &other.kept_bin_range {
            if out.excluded_observables.contains(id) {
                continue;
            }
            match out.kept_bin_range.get(id).copied() {
                Some((s0, e0)) => {
                    let (ns, ne) = (s.max(s0), e.min(e0));
                    if ns > ne {
                        out.exclude(id.clone());
                    } else {
                        out.kept_bin_range.insert(id.clone(), (ns, ne));
                    }
                }
                None => {
                    out.kept_bin_range.insert(id.clone(), (s, e));
                }
            }
        }
        out
    }

    /// Resolves the mask against `reference` into per-observable local bin
    /// ranges (`None` = excluded).
    pub fn resolve(&self, reference: &ReferenceSet) -> Result<Vec<Option<Range<usize>>>> {
        for id in self.excluded_observables.iter().chain(self.kept_bin_range.keys()) {
            if reference.get(id).is_none() {
                return Err(Error::invalid(format!("mask names unknown observable {id:?}")));
            }
        }
        for id in self.kept_bin_range.keys() {
            if self.excluded_observables.contains(id) {
                return Err(Error::invalid(format!(
                    "observable {id:?} is both excluded and given a bin range"
                )));
            }
        }
        reference
            .observables()
            .iter()
            .map(|obs| {
                if self.excluded_observables.contains(&obs.id) {
                    return Ok(None);
                }
                match self.kept_bin_range.get(&obs.id) {
                    None => Ok(Some(0..obs.len())),
                    Some(&(s, e)) => {
                        if s < 1 || s > e || e > obs.len() {
                            Err(Error::invalid(format!(
                                "bin range ({s}, {e}) for {:?} is outside [1, {}]",
                                obs.id,
                                obs.len()
                            )))
                        } else {
                            Ok(Some(s - 1..e))
                        }
                    }
                }
            })
            .collect()
    }
}

/// Tuning method that produced a [`TuneResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    BilevelPortfolio,
    BilevelMeanscore,
    BilevelMedianscore,
    Robust,
    AllWeightsEqual,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::BilevelPortfolio => "bilevel-portfolio",
            Method::BilevelMeanscore => "bilevel-meanscore",
            Method::BilevelMedianscore => "bilevel-medianscore",
            Method::Robust => "robust",
            Method::AllWeightsEqual => "all-weights-equal",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One evaluated weight vector of an iterative tune.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    /// Weights in the same order as [`TuneResult::weights`].
    pub weights: Vec<f64>,
    /// Inner optimum; empty when the inner solve failed.
    pub p_hat: Vec<f64>,
    /// Objective value; `+inf` (serialized as null) on failure.
    #[serde(with = "finite_or_null")]
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub method: Method,
    pub weights: WeightVector,
    pub p_star: Vec<f64>,
    pub objective_value: f64,
    pub history: Vec<HistoryEntry>,
    pub mask: FilterMask,
    pub seed: u64,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads any JSON document, attaching the path to parse errors.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|source| Error::Parse {
        context: path.display().to_string(),
        source,
    })
}

/// Writes `value` as pretty JSON followed by a newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = to_json_string(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|source| Error::Parse {
        context: "serialization".into(),
        source,
    })
}

pub fn load_reference(path: &Path) -> Result<ReferenceSet> {
    ReferenceSet::from_document(read_json(path)?)
}

pub fn parse_reference(text: &str) -> Result<ReferenceSet> {
    let doc = serde_json::from_str(text).map_err(|source| Error::Parse {
        context: "reference document".into(),
        source,
    })?;
    ReferenceSet::from_document(doc)
}

pub fn write_reference(path: &Path, reference: &ReferenceSet) -> Result<()> {
    write_json(path, &reference.to_document())
}

pub fn load_mc_runs(path: &Path, reference: &ReferenceSet) -> Result<McRunGrid> {
    McRunGrid::from_document(read_json(path)?, reference)
}

pub fn write_mc_runs(path: &Path, grid: &McRunGrid) -> Result<()> {
    write_json(path, &grid.to_document())
}

/// Reads a weight file (map id → weight) aligned to `reference`.
pub fn load_weights(path: &Path, reference: &ReferenceSet) -> Result<WeightVector> {
    let w: WeightVector = read_json(path)?;
    let aligned = w.aligned_to(reference)?;
    WeightVector::new(reference.ids(), aligned)
}
