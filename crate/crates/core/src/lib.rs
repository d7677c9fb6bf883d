//! Surrogate-based tuning of black-box simulator parameters against binned
//! reference data, with automatic per-observable weighting.
//!
//! The pipeline is: ingest reference data and simulator runs ([`data`]), fit
//! per-bin surrogates ([`surrogate`]), optionally filter observables or bins
//! ([`filtering`]), tune with fixed, bilevel or robust weights ([`chi2`],
//! [`bilevel`], [`robust`]) and report quality metrics ([`evaluation`]).

pub mod bilevel;
pub mod chi2;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod filtering;
pub mod optim;
pub mod par;
pub mod robust;
pub mod surrogate;

pub use chi2::{Chi2Config, IdealTuneTable, Problem};
pub use data::{
    FilterMask, McRunGrid, Method, Observable, ParameterSpace, ReferenceSet, TuneResult,
    WeightVector,
};
pub use error::{Error, Result};
pub use surrogate::{ModelKind, SurrogateSet};
