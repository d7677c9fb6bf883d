//! Declarative run configuration. A JSON file supplies defaults; flags given
//! on the command line override individual fields.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub reference: Option<PathBuf>,
    pub runs: Option<PathBuf>,
    pub surrogate: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub result: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub history: Option<PathBuf>,

    pub model: Option<String>,
    pub degree: Option<usize>,
    pub num_degree: Option<usize>,
    pub den_degree: Option<usize>,

    pub filter: Option<String>,
    pub envelope: Option<bool>,
    pub alpha: Option<f64>,
    pub statistic: Option<String>,
    pub zscore_threshold: Option<f64>,

    pub method: Option<String>,
    pub objective: Option<String>,
    pub lambda: Option<f64>,
    pub n0: Option<usize>,
    pub n_max: Option<usize>,
    pub n_cand: Option<usize>,
    pub nu_cycle: Option<Vec<f64>>,
    pub multistarts: Option<usize>,
    pub max_iterations: Option<usize>,
    pub mu: Option<Vec<f64>>,
    pub mu_count: Option<usize>,
    pub epsilon: Option<f64>,
    pub robust_multistarts: Option<usize>,

    pub seed: Option<u64>,
    pub gamma: Option<f64>,
    pub taus: Option<usize>,
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($field:ident),* $(,)?) => {
        $( if $src.$field.is_some() { $dst.$field = $src.$field.clone(); } )*
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Fields set in `flags` replace those of `self`.
    pub fn overlay(mut self, flags: &RunConfig) -> Self {
        let dst = &mut self;
        overlay!(dst, flags;
            reference, runs, surrogate, mask, result, output, output_dir, history,
            model, degree, num_degree, den_degree,
            filter, envelope, alpha, statistic, zscore_threshold,
            method, objective, lambda, n0, n_max, n_cand, nu_cycle, multistarts,
            max_iterations, mu, mu_count, epsilon, robust_multistarts,
            seed, gamma, taus, threads,
        );
        self
    }

    pub fn require<'a>(field: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
        let path = field
            .as_deref()
            .with_context(|| format!("missing --{name} (or \"{name}\" in the config file)"))?;
        anyhow::ensure!(path.exists(), "{name} file {} does not exist", path.display());
        Ok(path)
    }

    pub fn output(&self) -> Result<&Path> {
        self.output
            .as_deref()
            .context("missing --output (or \"output\" in the config file)")
    }
}
