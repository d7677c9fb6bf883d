use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use tunefit::bilevel::{run_bilevel, tune_equal_weights, OuterConfig, OuterObjective};
use tunefit::data::{load_mc_runs, load_reference, FilterMask, ReferenceSet, TuneResult};
use tunefit::evaluation::{effective_n, eigentune as run_eigentune, metric_report};
use tunefit::filtering::{
    apply_filters, envelope_prefilter, BinStatistic, FilterConfig, FilterMode, HypothesisConfig,
};
use tunefit::robust::{
    cdf_curve, default_taus, ideal_cdf_curve, log_tau_grid, random_mus, sweep_mu, RobustConfig,
};
use tunefit::surrogate::{fit, ModelKind};
use tunefit::{Chi2Config, Problem, SurrogateSet};

use crate::config::RunConfig;

const DEFAULT_MU_COUNT: usize = 100;
const DEFAULT_GAMMA: f64 = 0.01;

/// Reads `key` from an output envelope, or the whole document when it is a
/// bare payload.
fn load_doc<T: DeserializeOwned>(path: &Path, key: &str) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut value: Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let enveloped = value.get("config").is_some() && value.get(key).is_some();
    let inner = if enveloped { value[key].take() } else { value };
    serde_json::from_value(inner).with_context(|| format!("decoding {key} from {}", path.display()))
}

fn write_doc(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_ref(cfg: &RunConfig) -> Result<ReferenceSet> {
    let path = RunConfig::require(&cfg.reference, "reference")?;
    Ok(load_reference(path)?)
}

fn load_surrogate(cfg: &RunConfig, reference: &ReferenceSet) -> Result<SurrogateSet> {
    let path = RunConfig::require(&cfg.surrogate, "surrogate")?;
    let set: SurrogateSet = load_doc(path, "surrogate")?;
    set.check_covers(reference)?;
    Ok(set)
}

fn load_mask(cfg: &RunConfig) -> Result<FilterMask> {
    match &cfg.mask {
        Some(_) => load_doc(RunConfig::require(&cfg.mask, "mask")?, "mask"),
        None => Ok(FilterMask::default()),
    }
}

fn load_result(cfg: &RunConfig) -> Result<TuneResult> {
    load_doc(RunConfig::require(&cfg.result, "result")?, "result")
}

fn inner_config(cfg: &RunConfig) -> Result<Chi2Config> {
    let d = Chi2Config::default();
    let c = Chi2Config {
        multistarts: cfg.multistarts.unwrap_or(d.multistarts),
        max_iterations: cfg.max_iterations.unwrap_or(d.max_iterations),
        seed: cfg.seed.unwrap_or(d.seed),
        ..d
    };
    c.validate()?;
    Ok(c)
}

fn tau_grid(cfg: &RunConfig) -> Result<Vec<f64>> {
    match cfg.taus {
        None => Ok(default_taus()),
        Some(0) => bail!("taus must be at least 1"),
        Some(n) => Ok(log_tau_grid(n, 1e-3, 1e3)),
    }
}

fn model_kind(cfg: &RunConfig) -> Result<ModelKind> {
    match cfg.model.as_deref().unwrap_or("polynomial") {
        "polynomial" => {
            let ModelKind::Polynomial { degree } = ModelKind::DEFAULT_POLYNOMIAL else {
                unreachable!()
            };
            Ok(ModelKind::Polynomial {
                degree: cfg.degree.unwrap_or(degree),
            })
        }
        "rational" => {
            let ModelKind::Rational {
                num_degree,
                den_degree,
            } = ModelKind::DEFAULT_RATIONAL
            else {
                unreachable!()
            };
            Ok(ModelKind::Rational {
                num_degree: cfg.num_degree.unwrap_or(num_degree),
                den_degree: cfg.den_degree.unwrap_or(den_degree),
            })
        }
        other => bail!("unknown model {other:?}; expected polynomial or rational"),
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn surrogate(cfg: &RunConfig) -> Result<()> {
    let reference = load_ref(cfg)?;
    let runs = load_mc_runs(RunConfig::require(&cfg.runs, "runs")?, &reference)?;
    let kind = model_kind(cfg)?;
    let output = cfg.output()?;
    let (set, report) = fit(&runs, kind)?;
    let mut rms: Vec<f64> = report.bins.iter().map(|b| b.value_rms).collect();
    rms.sort_by(f64::total_cmp);
    let quantiles = json!({
        "min": quantile(&rms, 0.0),
        "median": quantile(&rms, 0.5),
        "p90": quantile(&rms, 0.9),
        "max": quantile(&rms, 1.0),
    });
    if let Some(w) = report.worst() {
        log::info!("worst bin {} (rms {:.3e})", w.bin, w.value_rms);
    }
    write_doc(
        output,
        &json!({
            "config": cfg,
            "report": { "fit": report, "rms_quantiles": quantiles },
            "surrogate": set,
        }),
    )
}

pub fn filter(cfg: &RunConfig) -> Result<()> {
    let reference = load_ref(cfg)?;
    let set = load_surrogate(cfg, &reference)?;
    let output = cfg.output()?;
    let mode: FilterMode = cfg.filter.as_deref().unwrap_or("none").parse()?;
    let statistic = match cfg.statistic.as_deref().unwrap_or("mean") {
        "mean" => BinStatistic::Mean,
        "sum" => BinStatistic::Sum,
        other => bail!("unknown statistic {other:?}; expected mean or sum"),
    };
    let fcfg = FilterConfig {
        hypothesis: HypothesisConfig {
            alpha: cfg.alpha.unwrap_or(HypothesisConfig::default().alpha),
            statistic,
        },
        zscore_threshold: cfg
            .zscore_threshold
            .unwrap_or(FilterConfig::default().zscore_threshold),
    };
    let mut start = load_mask(cfg)?;
    let use_envelope = cfg.envelope.unwrap_or(cfg.runs.is_some());
    if use_envelope {
        let runs = load_mc_runs(RunConfig::require(&cfg.runs, "runs")?, &reference)?;
        start = start.merge(&envelope_prefilter(&reference, &runs)?);
    }
    let problem = Problem::new(&set, &reference, &start)?;
    let (mask, report) = apply_filters(&problem, mode, &fcfg, &inner_config(cfg)?)?;
    print!("{}", report.to_table());
    write_doc(output, &json!({ "config": cfg, "mask": mask, "report": report }))
}

fn outer_objective(cfg: &RunConfig) -> Result<OuterObjective> {
    Ok(match cfg.objective.as_deref().unwrap_or("portfolio") {
        "portfolio" => OuterObjective::Portfolio {
            lambda: cfg.lambda.unwrap_or(1.0),
        },
        "meanscore" => OuterObjective::MeanScore,
        "medianscore" => OuterObjective::MedianScore,
        other => bail!("unknown objective {other:?}; expected portfolio, meanscore or medianscore"),
    })
}

fn history_csv(result: &TuneResult) -> String {
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
    let mut out = String::from("iteration,weights,p_hat,value\n");
    for (i, h) in result.history.iter().enumerate() {
        let _ = writeln!(out, "{},{},{},{}", i + 1, join(&h.weights), join(&h.p_hat), h.value);
    }
    out
}

pub fn tune(cfg: &RunConfig) -> Result<()> {
    let reference = load_ref(cfg)?;
    let set = load_surrogate(cfg, &reference)?;
    let mask = load_mask(cfg)?;
    let output = cfg.output()?;
    let problem = Problem::new(&set, &reference, &mask)?;
    let inner = inner_config(cfg)?;
    let seed = cfg.seed.unwrap_or(0);
    let method = cfg.method.as_deref().unwrap_or("bilevel");
    let (result, extra) = match method {
        "all-weights-equal" => (tune_equal_weights(&problem, &inner)?, json!({})),
        "bilevel" => {
            let d = OuterConfig::default();
            let outer = OuterConfig {
                n0: cfg.n0,
                n_max: cfg.n_max.unwrap_or(d.n_max),
                n_cand: cfg.n_cand,
                nu_cycle: cfg.nu_cycle.clone().unwrap_or(d.nu_cycle),
                seed,
            };
            let outcome = run_bilevel(&problem, outer_objective(cfg)?, &outer, &inner)?;
            (outcome.result, json!({ "rbf_refit_errors": outcome.rbf_refit_errors }))
        }
        "robust" => {
            let d = RobustConfig::default();
            let rcfg = RobustConfig {
                multistarts: cfg.robust_multistarts.unwrap_or(d.multistarts),
                seed,
                epsilon: cfg.epsilon.unwrap_or(d.epsilon),
                ..d
            };
            rcfg.validate()?;
            let mus = match &cfg.mu {
                Some(m) => m.clone(),
                None => random_mus(cfg.mu_count.unwrap_or(DEFAULT_MU_COUNT), seed),
            };
            let taus = tau_grid(cfg)?;
            let ideal = problem.ideal_tunes(&inner)?;
            let sweep = sweep_mu(&problem, &mus, &rcfg, &ideal, &taus)?;
            if let Some(dir) = &cfg.output_dir {
                write_text(&dir.join("ideal_cdf.csv"), &sweep.ideal.to_csv())?;
                for (i, run) in sweep.runs.iter().enumerate() {
                    write_doc(
                        &dir.join(format!("mu_{i:03}.json")),
                        &json!({ "config": cfg, "mu": run.mu, "area": run.area, "result": run.result }),
                    )?;
                    write_text(&dir.join(format!("mu_{i:03}_cdf.csv")), &run.curve.to_csv())?;
                }
            }
            let summary: Vec<Value> = sweep
                .runs
                .iter()
                .map(|r| json!({ "mu": r.mu, "area": r.area, "objective_value": r.result.objective_value }))
                .collect();
            let best = sweep.best_run();
            let extra = json!({ "best_mu": best.mu, "sweep": summary });
            (best.result.clone(), extra)
        }
        other => bail!("unknown method {other:?}; expected all-weights-equal, bilevel or robust"),
    };
    if let Some(path) = &cfg.history {
        write_text(path, &history_csv(&result))?;
    }
    let mut doc = json!({ "config": cfg, "result": result });
    if let (Value::Object(d), Value::Object(e)) = (&mut doc, extra) {
        d.extend(e);
    }
    write_doc(output, &doc)
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let reference = load_ref(cfg)?;
    let set = load_surrogate(cfg, &reference)?;
    let result = load_result(cfg)?;
    let output = cfg.output()?;
    let problem = Problem::new(&set, &reference, &result.mask)?;
    let metrics = metric_report(&result, &problem)?;
    let curve = cdf_curve(&problem, &result.p_star, &tau_grid(cfg)?)?;
    if let Some(dir) = &cfg.output_dir {
        write_text(&dir.join("cdf.csv"), &curve.to_csv())?;
    }
    write_doc(output, &json!({ "config": cfg, "metrics": metrics, "curve": curve }))
}

pub fn eigentune(cfg: &RunConfig) -> Result<()> {
    let reference = load_ref(cfg)?;
    let set = load_surrogate(cfg, &reference)?;
    let result = load_result(cfg)?;
    let output = cfg.output()?;
    let problem = Problem::new(&set, &reference, &result.mask)?;
    let w = result.weights.aligned_to(&reference)?;
    let gamma = cfg.gamma.unwrap_or(DEFAULT_GAMMA);
    let n = effective_n(&w, problem.dim(), gamma)?;
    if !(n > 0.0) {
        bail!("effective sample size {n} is not positive");
    }
    let tune = run_eigentune(&problem, &result.p_star, &w, n)?;
    let table: Vec<Value> = problem
        .space()
        .names()
        .iter()
        .zip(&result.p_star)
        .zip(&tune.intervals)
        .map(|((name, p), (lo, hi))| json!({ "parameter": name, "p_star": p, "low": lo, "high": hi }))
        .collect();
    write_doc(output, &json!({ "config": cfg, "eigentune": tune, "table": table }))
}

pub fn cdf(cfg: &RunConfig) -> Result<()> {
    let reference = load_ref(cfg)?;
    let set = load_surrogate(cfg, &reference)?;
    let output = cfg.output()?;
    let taus = tau_grid(cfg)?;
    let curve = match &cfg.result {
        Some(_) => {
            let result = load_result(cfg)?;
            let problem = Problem::new(&set, &reference, &result.mask)?;
            cdf_curve(&problem, &result.p_star, &taus)?
        }
        None => {
            let mask = load_mask(cfg)?;
            let problem = Problem::new(&set, &reference, &mask)?;
            ideal_cdf_curve(&problem.ideal_tunes(&inner_config(cfg)?)?, &taus)
        }
    };
    write_text(output, &curve.to_csv())
}
