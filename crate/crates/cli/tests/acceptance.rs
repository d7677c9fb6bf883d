//! Acceptance suite. Prints one `[PASS]` or `[FAIL]` line per criterion and
//! exits nonzero if any criterion fails or exceeds its time limit.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tunefit::bilevel::{dirichlet_design, run_bilevel, tune_equal_weights, OuterConfig, OuterObjective, RbfModel};
use tunefit::data::{write_mc_runs, write_reference, McRunGrid, Observable, ParameterSpace, ReferenceSet};
use tunefit::evaluation::{a_optimality, d_optimality_log, effective_n, eigentune, PosteriorCovariance};
use tunefit::filtering::{best_window, chi2_critical, BinWindow, HypothesisConfig};
use tunefit::robust::{optimal_weights, robust_objective, solve_robust, worst_case_residual, RobustConfig};
use tunefit::surrogate::{binomial, fit, BinModel, Model, ModelKind, PolynomialModel, RationalModel};
use tunefit::{Chi2Config, Problem, SurrogateSet};

use common::{normalized_error, synthetic};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

fn ac1() -> Outcome {
    let table = [(1, 3.84), (3, 7.81), (9, 16.92), (8, 15.51), (13, 22.36)];
    let mut worst: f64 = 0.0;
    for (rho, expected) in table {
        let c = chi2_critical(rho, 0.05).map_err(|e| e.to_string())?;
        let gap = (c - expected).abs();
        ensure!(gap <= 0.01, "rho={rho}: {c} vs {expected}");
        worst = worst.max(gap);
    }
    Ok(format!("max deviation {worst:.4}"))
}

/// Longest feasible window length by enumeration, `None` when no window of
/// more than `d` bins passes.
fn exhaustive_window(terms: &[f64], d: usize, alpha: f64) -> Option<usize> {
    let n = terms.len();
    let mut best = None;
    for s in 0..n {
        for e in s + d + 1..=n {
            let len = e - s;
            let mean = terms[s..e].iter().sum::<f64>() / len as f64;
            if mean <= chi2_critical(len - d, alpha).unwrap() && best.is_none_or(|b| len > b) {
                best = Some(len);
            }
        }
    }
    best
}

fn ac2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = HypothesisConfig::default();
    let mut kept = 0;
    for i in 0..1000 {
        let n = rng.random_range(1..=25);
        let d = rng.random_range(2..=10);
        let scale = rng.random_range(0.1..20.0);
        let terms: Vec<f64> = (0..n).map(|_| scale * rng.random::<f64>().powi(2) * 3.0).collect();
        let window = best_window(&terms, d, &cfg).map_err(|e| e.to_string())?;
        let oracle = exhaustive_window(&terms, d, cfg.alpha);
        match window {
            BinWindow::NotApplicable => ensure!(n <= d, "instance {i}: not applicable with n={n} d={d}"),
            BinWindow::Infeasible => ensure!(n > d && oracle.is_none(), "instance {i}: infeasible but oracle {oracle:?}"),
            BinWindow::Kept { start, end, statistic, critical } => {
                kept += 1;
                let len = end + 1 - start;
                ensure!(Some(len) == oracle, "instance {i}: length {len} vs oracle {oracle:?}");
                let mean = terms[start - 1..end].iter().sum::<f64>() / len as f64;
                ensure!((mean - statistic).abs() <= 1e-12 * mean.max(1.0), "instance {i}: statistic mismatch");
                let own = chi2_critical(len - d, cfg.alpha).unwrap();
                ensure!(critical == own && mean <= own, "instance {i}: window fails its own test");
            }
        }
    }
    Ok(format!("1000 instances, {kept} with a kept window"))
}

/// Minimum of `Σ w_O T_O/|O|` over the vertices of the box cut by the
/// coverage constraint.
fn lp_by_vertices(totals: &[f64], sizes: &[usize], mu: f64) -> f64 {
    let k = totals.len();
    let c: Vec<f64> = sizes.iter().map(|&n| 1.0 / n as f64).collect();
    let budget = mu / 100.0 * c.iter().sum::<f64>();
    let objective = |w: &[f64]| w.iter().zip(totals).zip(&c).map(|((w, t), c)| w * t * c).sum::<f64>();
    let cover = |w: &[f64]| w.iter().zip(&c).map(|(w, c)| w * c).sum::<f64>();
    let mut best = f64::INFINITY;
    for mask in 0..1usize << k {
        let w: Vec<f64> = (0..k).map(|i| ((mask >> i) & 1) as f64).collect();
        if cover(&w) >= budget - 1e-15 {
            best = best.min(objective(&w));
        }
        for free in 0..k {
            if mask >> free & 1 == 1 {
                continue;
            }
            let mut w = w.clone();
            let v = (budget - cover(&w)) / c[free];
            if (0.0..=1.0).contains(&v) {
                w[free] = v;
                best = best.min(objective(&w));
            }
        }
    }
    best
}

fn ac3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let k = rng.random_range(1..=6);
        let totals: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..50.0)).collect();
        let sizes: Vec<usize> = (0..k).map(|_| rng.random_range(1..=20)).collect();
        let mu = 100.0 * (1.0 - rng.random::<f64>());
        let w = optimal_weights(&totals, &sizes, mu);
        ensure!(w.iter().all(|v| (0.0..=1.0).contains(v)), "instance {i}: weights outside [0, 1]");
        let c: Vec<f64> = sizes.iter().map(|&n| 1.0 / n as f64).collect();
        let cover: f64 = w.iter().zip(&c).map(|(w, c)| w * c).sum();
        ensure!(cover >= mu / 100.0 * c.iter().sum::<f64>() - 1e-12, "instance {i}: coverage violated");
        let value: f64 = w.iter().zip(&totals).zip(&c).map(|((w, t), c)| w * t * c).sum();
        let oracle = lp_by_vertices(&totals, &sizes, mu);
        let gap = (value - oracle).abs();
        ensure!(gap <= 1e-9, "instance {i}: {value} vs vertex optimum {oracle}");
        worst = worst.max(gap);
        let full = optimal_weights(&totals, &sizes, 100.0);
        ensure!(full.iter().all(|&v| v == 1.0), "instance {i}: mu=100 weights {full:?}");
    }
    Ok(format!("max objective gap {worst:.2e}"))
}

fn ac4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for i in 0..10_000 {
        let f = rng.random_range(-10.0..10.0);
        let r = rng.random_range(-10.0..10.0);
        let dr = rng.random_range(0.0..3.0);
        let df = rng.random_range(0.0..3.0);
        let (lo, hi) = (r - dr - df, r + dr + df);
        let grid = (0..=1000)
            .map(|j| {
                let x = lo + (hi - lo) * j as f64 / 1000.0;
                (f - x) * (f - x)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let v = worst_case_residual(f, r, dr, df, 0.0);
        let gap = (v - grid).abs();
        ensure!(gap <= 1e-9 * grid.max(1.0), "bin {i}: {v} vs grid {grid}");
        worst = worst.max(gap);
    }
    Ok(format!("max gap {worst:.2e}"))
}

fn monomials(dim: usize, degree: usize) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|e: Vec<u32>| (0..=degree as u32).map(move |k| [e.clone(), vec![k]].concat()))
            .filter(|e| e.iter().sum::<u32>() as usize <= degree)
            .collect();
    }
    out
}

fn poly(coefs: &[f64], exps: &[Vec<u32>], p: &[f64]) -> f64 {
    coefs
        .iter()
        .zip(exps)
        .map(|(c, e)| c * e.iter().zip(p).map(|(&k, x)| x.powi(k as i32)).product::<f64>())
        .sum()
}

fn single_observable(n: usize) -> ReferenceSet {
    ReferenceSet::new(vec![Observable::new("/truth", vec![1.0; n], vec![0.1; n]).unwrap()]).unwrap()
}

fn held_out_error(set: &SurrogateSet, space: &ParameterSpace, truth: impl Fn(&[f64]) -> f64, rng: &mut ChaCha8Rng) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p: Vec<f64> = space.lower().iter().zip(space.upper()).map(|(l, u)| rng.random_range(*l..*u)).collect();
        let pred = set.eval(&p).unwrap().values[0];
        let t = truth(&p);
        worst = worst.max((pred - t).abs() / t.abs().max(1.0));
    }
    worst
}

fn ac5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let reference = single_observable(1);

    let space = ParameterSpace::from_bounds(vec![-1.0, 0.0, 2.0], vec![2.0, 0.5, 5.0]).unwrap();
    let exps = monomials(3, 3);
    let coefs: Vec<f64> = exps.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
    let truth = |p: &[f64]| poly(&coefs, &exps, p);
    let points: Vec<Vec<f64>> = (0..80)
        .map(|_| space.lower().iter().zip(space.upper()).map(|(l, u)| rng.random_range(*l..*u)).collect())
        .collect();
    let values = points.iter().map(|p| vec![truth(p)]).collect();
    let grid = McRunGrid::new(space.clone(), &reference, points.clone(), values, vec![vec![0.5]; 80]).unwrap();
    let (set, _) = fit(&grid, ModelKind::Polynomial { degree: 3 }).map_err(|e| e.to_string())?;
    let poly_err = held_out_error(&set, &space, truth, &mut rng);
    ensure!(poly_err <= 1e-8, "polynomial held-out error {poly_err:e}");

    let space = ParameterSpace::from_bounds(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
    let exps = monomials(2, 3);
    let num: Vec<f64> = exps.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
    let truth = |p: &[f64]| poly(&num, &exps, p) / (1.0 + 0.3 * p[0] - 0.2 * p[1]);
    let points: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
    let values = points.iter().map(|p| vec![truth(p)]).collect();
    let grid = McRunGrid::new(space.clone(), &reference, points, values, vec![vec![0.5]; 60]).unwrap();
    let (set, _) = fit(&grid, ModelKind::Rational { num_degree: 3, den_degree: 1 }).map_err(|e| e.to_string())?;
    let rat_err = held_out_error(&set, &space, truth, &mut rng);
    ensure!(rat_err <= 1e-8, "rational held-out error {rat_err:e}");
    Ok(format!("polynomial {poly_err:.1e}, rational {rat_err:.1e}"))
}

fn random_surrogate(rng: &mut ChaCha8Rng, d: usize, bins: usize, rational: bool) -> (SurrogateSet, ParameterSpace) {
    let lower: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..0.0)).collect();
    let upper: Vec<f64> = lower.iter().map(|l| l + rng.random_range(0.5..2.0)).collect();
    let space = ParameterSpace::from_bounds(lower, upper).unwrap();
    let m3 = binomial(d + 3, 3);
    let m2 = binomial(d + 2, 2);
    let m1 = binomial(d + 1, 1);
    let coefs = |rng: &mut ChaCha8Rng, m: usize| -> Vec<f64> { (0..m).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let positive = |rng: &mut ChaCha8Rng, m: usize, base: f64, spread: f64| -> Vec<f64> {
        let mut c: Vec<f64> = (0..m).map(|_| rng.random_range(-spread..spread) / (m - 1).max(1) as f64).collect();
        c[0] = base;
        c
    };
    let models = (0..bins)
        .map(|_| {
            if rational {
                let rat = |rng: &mut ChaCha8Rng, num: Vec<f64>| {
                    Model::Rational(RationalModel {
                        num_degree: 2,
                        den_degree: 1,
                        num_coefficients: num,
                        den_coefficients: positive(rng, m1, 1.0, 0.5),
                    })
                };
                let value = coefs(rng, m2);
                let unc = positive(rng, m2, 0.5, 0.3);
                BinModel {
                    value: rat(rng, value),
                    uncertainty: rat(rng, unc),
                }
            } else {
                BinModel {
                    value: Model::Polynomial(PolynomialModel { degree: 3, coefficients: coefs(rng, m3) }),
                    uncertainty: Model::Polynomial(PolynomialModel {
                        degree: 3,
                        coefficients: positive(rng, m3, 0.5, 0.3),
                    }),
                }
            }
        })
        .collect();
    let kind = if rational {
        ModelKind::Rational { num_degree: 2, den_degree: 1 }
    } else {
        ModelKind::Polynomial { degree: 3 }
    };
    let set = SurrogateSet::from_models(space.clone(), kind, vec![("/o0".into(), bins / 2), ("/o1".into(), bins - bins / 2)], models).unwrap();
    (set, space)
}

fn rel_error(g: &[f64], fd: &[f64]) -> f64 {
    let diff = g.iter().zip(fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / norm.max(1e-8)
}

fn ac6() -> Outcome {
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let d = rng.random_range(1..=4);
        let bins = rng.random_range(2..=6);
        let (set, space) = random_surrogate(&mut rng, d, bins, i % 2 == 1);
        let reference = ReferenceSet::new(
            set.layout()
                .iter()
                .map(|(id, n)| {
                    let v = (0..*n).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let e = (0..*n).map(|_| rng.random_range(0.1..1.0)).collect();
                    Observable::new(id.clone(), v, e).unwrap()
                })
                .collect(),
        )
        .unwrap();
        let problem = Problem::unmasked(&set, &reference).map_err(|e| e.to_string())?;
        let p: Vec<f64> = space.lower().iter().zip(space.upper()).map(|(l, u)| rng.random_range(l + 0.01..u - 0.01)).collect();
        let w = vec![rng.random_range(0.1..1.0), rng.random_range(0.1..1.0)];
        let shifted = |j: usize, s: f64| -> Vec<f64> {
            let mut q = p.clone();
            q[j] += s;
            q
        };

        let mut grad = vec![0.0; d];
        problem.chi2_gradient(&p, &w, &mut grad).map_err(|e| e.to_string())?;
        let fd: Vec<f64> = (0..d)
            .map(|j| (problem.chi2(&shifted(j, H), &w).unwrap() - problem.chi2(&shifted(j, -H), &w).unwrap()) / (2.0 * H))
            .collect();
        let e = rel_error(&grad, &fd);
        ensure!(e <= 1e-5, "instance {i}: chi2 gradient rel error {e:e}");
        worst = worst.max(e);

        let gp = set.eval_gradient(&p).map_err(|e| e.to_string())?;
        let (plus, minus): (Vec<_>, Vec<_>) = (0..d)
            .map(|j| (set.eval(&shifted(j, H)).unwrap(), set.eval(&shifted(j, -H)).unwrap()))
            .unzip();
        for b in 0..set.n_bins() {
            let fdv: Vec<f64> = (0..d).map(|j| (plus[j].values[b] - minus[j].values[b]) / (2.0 * H)).collect();
            let fdu: Vec<f64> = (0..d)
                .map(|j| (plus[j].uncertainties[b] - minus[j].uncertainties[b]) / (2.0 * H))
                .collect();
            let ev = rel_error(&gp.value_gradients[b * d..(b + 1) * d], &fdv);
            let eu = rel_error(&gp.uncertainty_gradients[b * d..(b + 1) * d], &fdu);
            ensure!(ev <= 1e-5 && eu <= 1e-5, "instance {i} bin {b}: surrogate gradient rel errors {ev:e} {eu:e}");
            worst = worst.max(ev).max(eu);
        }
    }
    Ok(format!("max rel error {worst:.1e}"))
}

fn small_inner(multistarts: usize) -> Chi2Config {
    Chi2Config {
        multistarts,
        ..Chi2Config::default()
    }
}

fn ac7() -> Outcome {
    let s = synthetic(&[3, 4, 5, 6], &[0.4, 0.6], &[(3, vec![0.9, 0.1])], 70);
    let problem = Problem::unmasked(&s.surrogate, &s.reference).map_err(|e| e.to_string())?;
    let outer = OuterConfig {
        n_max: 40,
        seed: 7,
        ..OuterConfig::default()
    };
    let out = run_bilevel(&problem, OuterObjective::Portfolio { lambda: 1.0 }, &outer, &small_inner(8))
        .map_err(|e| e.to_string())?;
    ensure!(!out.rbf_refit_errors.is_empty(), "no RBF refits recorded");
    let refit = out.rbf_refit_errors.iter().copied().fold(0.0, f64::max);
    ensure!(refit <= 1e-8, "center interpolation error {refit:e}");

    let k = 5;
    let slope = [0.3, -1.2, 2.0, 0.7, -0.4];
    let linear = |w: &[f64]| w.iter().zip(&slope).map(|(a, b)| a * b).sum::<f64>();
    let centers = dirichlet_design(25, k, 11);
    let reduced: Vec<Vec<f64>> = centers.iter().map(|w| w[..k - 1].to_vec()).collect();
    let values: Vec<f64> = centers.iter().map(|w| linear(w)).collect();
    let model = RbfModel::fit(&reduced, &values).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for w in dirichlet_design(20, k, 12) {
        worst = worst.max((model.predict(&w[..k - 1]) - linear(&w)).abs());
    }
    ensure!(worst <= 1e-8, "linear reproduction error {worst:e}");
    Ok(format!("{} refits, max center error {refit:.1e}, linear error {worst:.1e}", out.rbf_refit_errors.len()))
}

fn ac8() -> Outcome {
    let s = synthetic(&[3, 4, 5], &[0.3, 0.7], &[(2, vec![0.8, 0.2])], 80);
    let problem = Problem::unmasked(&s.surrogate, &s.reference).map_err(|e| e.to_string())?;
    let outer = OuterConfig {
        n_max: 200,
        seed: 8,
        ..OuterConfig::default()
    };
    let out = run_bilevel(&problem, OuterObjective::MeanScore, &outer, &small_inner(4)).map_err(|e| e.to_string())?;
    let history = &out.result.history;
    ensure!(history.len() == 200, "{} evaluations", history.len());
    let mut worst: f64 = 0.0;
    for (i, h) in history.iter().enumerate() {
        let sum: f64 = h.weights.iter().sum();
        ensure!(h.weights.iter().all(|&v| v >= 0.0), "evaluation {i}: negative weight");
        ensure!((sum - 1.0).abs() <= 1e-10, "evaluation {i}: sum {sum}");
        worst = worst.max((sum - 1.0).abs());
    }
    Ok(format!("200 evaluations, max |Σw − 1| {worst:.1e}"))
}

fn ac9() -> Outcome {
    let sizes = [3, 5, 8, 12];
    let p_true = [0.37, 0.61];
    let inner = small_inner(20);
    let outer = OuterConfig {
        n_max: 40,
        seed: 9,
        ..OuterConfig::default()
    };
    let objectives = [
        OuterObjective::Portfolio { lambda: 1.0 },
        OuterObjective::MeanScore,
        OuterObjective::MedianScore,
    ];
    let robust_cfg = RobustConfig {
        mu: 85.0,
        multistarts: 10,
        seed: 9,
        ..RobustConfig::default()
    };

    let clean = synthetic(&sizes, &p_true, &[], 90);
    let problem = Problem::unmasked(&clean.surrogate, &clean.reference).map_err(|e| e.to_string())?;
    let mut recovered = Vec::new();
    for obj in objectives {
        let r = run_bilevel(&problem, obj, &outer, &inner).map_err(|e| e.to_string())?.result;
        recovered.push((obj.name(), r.p_star));
    }
    let robust = solve_robust(&problem, &robust_cfg).map_err(|e| e.to_string())?;
    recovered.push(("robust", robust.p_star));
    let equal = tune_equal_weights(&problem, &inner).map_err(|e| e.to_string())?;
    recovered.push(("all-weights-equal", equal.p_star));
    let mut worst: f64 = 0.0;
    for (name, p) in &recovered {
        let e = normalized_error(&clean.space, p, &p_true);
        ensure!(e <= 1e-3, "{name}: normalized error {e:e}");
        worst = worst.max(e);
    }

    let dirty = synthetic(&sizes, &p_true, &[(3, vec![0.85, 0.1])], 90);
    let problem = Problem::unmasked(&dirty.surrogate, &dirty.reference).map_err(|e| e.to_string())?;
    let equal = tune_equal_weights(&problem, &inner).map_err(|e| e.to_string())?;
    let mut margins = Vec::new();
    for obj in objectives {
        let r = run_bilevel(&problem, obj, &outer, &inner).map_err(|e| e.to_string())?.result;
        let base = obj.evaluate(&problem, &equal.p_star).map_err(|e| e.to_string())?;
        ensure!(r.objective_value < base, "{}: {} not below equal-weight {}", obj.name(), r.objective_value, base);
        margins.push(base - r.objective_value);
    }
    let robust = solve_robust(&problem, &robust_cfg).map_err(|e| e.to_string())?;
    let ours = robust_objective(&problem, &robust.p_star, &robust_cfg).map_err(|e| e.to_string())?;
    let base = robust_objective(&problem, &equal.p_star, &robust_cfg).map_err(|e| e.to_string())?;
    ensure!(ours < base, "robust: {ours} not below equal-weight {base}");
    margins.push(base - ours);
    let margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(format!("max recovery error {worst:.1e}, smallest corrupted margin {margin:.3}"))
}

fn ac10() -> Outcome {
    let space = ParameterSpace::from_bounds(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
    let slopes = [[1.0, 0.2], [0.3, -0.8], [0.5, 0.5], [-0.4, 0.9], [1.1, -0.3], [0.2, 0.4]];
    let sizes = [2, 2, 2];
    let errors = [0.9, 1.3, 0.7, 1.0, 1.6, 1.2];
    let p_hat = [0.05, 0.3];
    let line = |a: &[f64; 2], p: &[f64]| a[0] * p[0] + a[1] * p[1];
    let mut offset = 0;
    let observables = sizes
        .iter()
        .enumerate()
        .map(|(o, &n)| {
            let bins = offset..offset + n;
            offset += n;
            Observable::new(
                format!("/lin/{o}"),
                bins.clone().map(|b| line(&slopes[b], &p_hat)).collect(),
                bins.map(|b| errors[b]).collect(),
            )
            .unwrap()
        })
        .collect();
    let reference = ReferenceSet::new(observables).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let points: Vec<Vec<f64>> = (0..12).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    let values = points.iter().map(|p| slopes.iter().map(|a| line(a, p)).collect()).collect();
    let grid = McRunGrid::new(space, &reference, points, values, vec![vec![0.0; 6]; 12]).unwrap();
    let (set, _) = fit(&grid, ModelKind::Polynomial { degree: 1 }).map_err(|e| e.to_string())?;
    let problem = Problem::unmasked(&set, &reference).map_err(|e| e.to_string())?;

    let w = [0.5, 0.2, 0.3];
    let n = 1.0;
    let mut info = DMatrix::<f64>::zeros(2, 2);
    for (b, a) in slopes.iter().enumerate() {
        let g = DVector::from_column_slice(a);
        info += w[b / 2] / (errors[b] * errors[b]) * &g * g.transpose();
    }
    let curv = SymmetricEigen::new(info).eigenvalues;
    let (k_min, k_max) = (curv.min(), curv.max());

    let tune = eigentune(&problem, &p_hat, &w, n).map_err(|e| e.to_string())?;
    let base = problem.chi2(&p_hat, &w).unwrap();
    let mut worst_alpha: f64 = 0.0;
    for s in &tune.scans {
        let r = problem.chi2(&s.point, &w).unwrap() - base - n;
        ensure!(r.abs() <= 1e-6 * (1.0 + n), "scan {}{}: residual {r:e}", s.eigen_index, s.sign);
        let kappa = if s.eigen_index == 0 { k_max } else { k_min };
        let gap = (s.alpha - (n / kappa).sqrt()).abs();
        ensure!(gap <= 1e-6, "scan {}: alpha {} vs {}", s.eigen_index, s.alpha, (n / kappa).sqrt());
        worst_alpha = worst_alpha.max(gap);
    }
    let mut clamped = 0;
    for j in 0..2 {
        let raw_min = tune.scans.iter().map(|s| s.point[j]).fold(f64::INFINITY, f64::min);
        if raw_min < 0.0 {
            ensure!(tune.intervals[j].0 == 0.0, "parameter {j}: negative edge {raw_min} not clamped");
            clamped += 1;
        }
    }
    ensure!(clamped > 0, "constructed case has no negative interval edge");
    Ok(format!("max alpha gap {worst_alpha:.1e}, {clamped} clamped edges"))
}

fn ac11() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut worst_a, mut worst_d): (f64, f64) = (0.0, 0.0);
    for i in 0..100 {
        let d = rng.random_range(1..=8);
        let q = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0)).qr().q();
        let lambda: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..10.0)).collect();
        let m = &q * DMatrix::from_diagonal(&DVector::from_column_slice(&lambda)) * q.transpose();
        let cov = PosteriorCovariance::from_matrix(&m).map_err(|e| e.to_string())?;
        let ga = (a_optimality(&cov) - lambda.iter().sum::<f64>()).abs();
        let gd = (d_optimality_log(&cov).map_err(|e| e.to_string())? - lambda.iter().map(|l| l.ln()).sum::<f64>()).abs();
        ensure!(ga <= 1e-9, "matrix {i}: trace gap {ga:e}");
        ensure!(gd <= 1e-8, "matrix {i}: log det gap {gd:e}");
        worst_a = worst_a.max(ga);
        worst_d = worst_d.max(gd);
    }
    for _ in 0..200 {
        let d = rng.random_range(1..=20);
        let n = rng.random_range(d + 1..=1000);
        let gamma = rng.random_range(0.001..1.0);
        let got = effective_n(&vec![1.0; n], d, gamma).map_err(|e| e.to_string())?;
        ensure!(got == gamma * (n - d) as f64, "N={n} d={d}: {got} vs {}", gamma * (n - d) as f64);
    }
    Ok(format!("trace gap {worst_a:.1e}, log det gap {worst_d:.1e}"))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_tunefit"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("tunefit {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(())
}

fn same_bytes(a: &Path, b: &Path) -> Result<(), String> {
    let (x, y) = (std::fs::read(a).map_err(|e| e.to_string())?, std::fs::read(b).map_err(|e| e.to_string())?);
    if x != y {
        return Err(format!("{} and {} differ", a.display(), b.display()));
    }
    Ok(())
}

fn ac12() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let s = synthetic(&[3, 4, 5, 6], &[0.4, 0.55], &[(3, vec![0.9, 0.2])], 120);
    let reference = root.join("reference.json");
    let runs = root.join("runs.json");
    write_reference(&reference, &s.reference).map_err(|e| e.to_string())?;
    write_mc_runs(&runs, &s.grid).map_err(|e| e.to_string())?;
    let r = reference.to_str().unwrap();
    let g = runs.to_str().unwrap();
    let a = |name: &str| root.join("a").join(name).to_str().unwrap().to_string();
    let b = |name: &str| root.join("b").join(name).to_str().unwrap().to_string();
    let surrogate = a("surrogate.json");
    let equal = a("equal.json");
    let steps: Vec<(&str, Vec<&str>)> = vec![
        ("surrogate.json", vec!["surrogate", "--reference", r, "--runs", g, "--degree", "2"]),
        ("filter.json", vec!["filter", "--reference", r, "--surrogate", &surrogate, "--runs", g, "--mode", "bin", "--multistarts", "5"]),
        ("equal.json", vec!["tune", "--reference", r, "--surrogate", &surrogate, "--method", "all-weights-equal", "--multistarts", "5"]),
        ("bilevel.json", vec!["tune", "--reference", r, "--surrogate", &surrogate, "--method", "bilevel", "--n-max", "12", "--multistarts", "5", "--seed", "3"]),
        ("robust.json", vec!["tune", "--reference", r, "--surrogate", &surrogate, "--method", "robust", "--mu", "60,100", "--robust-multistarts", "3", "--multistarts", "5", "--seed", "3"]),
        ("evaluate.json", vec!["evaluate", "--reference", r, "--surrogate", &surrogate, "--result", &equal]),
        ("eigentune.json", vec!["eigentune", "--reference", r, "--surrogate", &surrogate, "--result", &equal]),
        ("cdf.csv", vec!["cdf", "--reference", r, "--surrogate", &surrogate, "--result", &equal]),
    ];
    for (name, args) in &steps {
        for (out, threads) in [(a(name), None), (b(name), Some("1"))] {
            let mut full = args.clone();
            full.extend(["--output", out.as_str()]);
            full.extend(threads.map(|t| ["--threads", t]).into_iter().flatten());
            run_cli(&full)?;
        }
        same_bytes(Path::new(&a(name)), Path::new(&b(name)))?;
    }
    Ok(format!("{} commands byte-identical across reruns and thread counts", steps.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, u64); 12] = [
        ("AC-1", ac1, 1),
        ("AC-2", ac2, 30),
        ("AC-3", ac3, 30),
        ("AC-4", ac4, 10),
        ("AC-5", ac5, 10),
        ("AC-6", ac6, 10),
        ("AC-7", ac7, 5),
        ("AC-8", ac8, 120),
        ("AC-9", ac9, 600),
        ("AC-10", ac10, 5),
        ("AC-11", ac11, 5),
        ("AC-12", ac12, 60),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with("AC-")).collect();
    let mut failed = 0;
    for (name, check, limit) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == name) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if elapsed > Duration::from_secs(limit) => Err(format!("{msg}; exceeded {limit} s limit")),
            other => other,
        };
        match outcome {
            Ok(msg) => println!("[PASS] {name} ({:.2} s) {msg}", elapsed.as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("[FAIL] {name} ({:.2} s) {msg}", elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
