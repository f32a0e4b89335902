//! Experiment orchestration: problem assembly from config, multi-seed
//! multi-method runs, and emission of CSVs, plot series, SVG charts, and a
//! structured summary.

use std::fmt::Write as _;
use std::path::Path;
use std::process::Command;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::data::{self, DesignMatrix, SplitSpec};
use crate::error::Result;
use crate::gaussian::{symmetrize, GaussianParams};
use crate::harness::config::{config_digest, ExperimentConfig, ProblemSource};
use crate::harness::csv::{fmt_f64, write_run_csv, write_series_csv, write_timing_csv};
use crate::harness::metrics::{compute_test_metrics, TestMetrics};
use crate::harness::svg::write_svg_chart;
use crate::optim::{run_optimizer, Method, RunRecord, StepConfig};
use crate::oracle::{OracleConfig, ProblemSpec};

/// One (method, seed) run: either a record or the abort message.
#[derive(Debug)]
pub struct MethodOutcome {
    pub method: Method,
    pub seed: u64,
    pub record: Option<RunRecord>,
    pub abort: Option<String>,
    pub test: Option<TestMetrics>,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub outcomes: Vec<MethodOutcome>,
    pub problem_dim: usize,
    pub dataset_digest: Option<String>,
}

/// The training problem plus any held-out test rows.
pub struct AssembledProblem {
    pub problem: ProblemSpec,
    pub test: Option<DesignMatrix>,
    pub dataset_digest: Option<String>,
}

/// Seeded random strongly convex quadratic instance.
pub fn synthetic_quadratic(dim: usize, seed: u64, gamma: f64) -> Result<ProblemSpec> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let w = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let a = symmetrize(&(&w * w.transpose())) / dim as f64 + DMatrix::identity(dim, dim) * 0.5;
    let b = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    ProblemSpec::quadratic(a, b, 0.0, gamma)
}

/// Seeded linearly-generated binary classification rows in sparse text form.
pub fn synthetic_logistic_data(n: usize, dim: usize, seed: u64) -> Result<DesignMatrix> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let theta = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut text = String::new();
    let scale = 1.0 / (dim as f64).sqrt();
    for _ in 0..n {
        let x = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal) * scale);
        let noise: f64 = rng.sample::<f64, _>(StandardNormal);
        let label = if x.dot(&theta) + 0.1 * noise >= 0.0 { "+1" } else { "-1" };
        text.push_str(label);
        for j in 0..dim {
            write!(text, " {}:{}", j + 1, fmt_f64(x[j])).expect("string write");
        }
        text.push('\n');
    }
    data::parse_libsvm(text.as_bytes(), Some(dim))
}

fn subsample_rows(dm: &DesignMatrix, keep: usize) -> DesignMatrix {
    if keep >= dm.rows() {
        return dm.clone();
    }
    let mut order: Vec<usize> = (0..dm.rows()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    order.shuffle(&mut rng);
    dm.take_rows(&order[..keep])
}

/// Build the training problem (and test split) described by the config.
pub fn assemble_problem(
    cfg: &ExperimentConfig,
    cache_dir: &Path,
    offline: bool,
) -> Result<AssembledProblem> {
    match &cfg.source {
        ProblemSource::SyntheticQuadratic { dim, seed } => Ok(AssembledProblem {
            problem: synthetic_quadratic(*dim, *seed, cfg.gamma)?,
            test: None,
            dataset_digest: None,
        }),
        ProblemSource::SyntheticLogistic { n, dim, seed } => {
            let full = synthetic_logistic_data(*n, *dim, *seed)?;
            let train_count = cfg.train_count.unwrap_or(full.rows() * 4 / 5);
            let spec = SplitSpec { train_count, shuffle_seed: 0, scale: cfg.scale };
            let (train, test) = data::split(&full, &spec)?;
            Ok(AssembledProblem {
                problem: ProblemSpec::logistic(train, cfg.beta, cfg.gamma)?,
                test: Some(test),
                dataset_digest: None,
            })
        }
        ProblemSource::Dataset { name } => {
            let path = data::fetch_dataset(name, cache_dir, offline)?;
            let digest = data::file_digest(&path)?;
            let mut full = data::load_dataset(name, cache_dir, offline)?;
            if let Some(keep) = cfg.subsample {
                full = subsample_rows(&full, keep);
            }
            let default_train = if cfg.subsample.is_some() {
                full.rows() * 4 / 5
            } else {
                data::dataset_info(name)?.train_count
            };
            let train_count = cfg.train_count.unwrap_or(default_train);
            let spec = SplitSpec { train_count, shuffle_seed: 0, scale: cfg.scale };
            let (train, test) = data::split(&full, &spec)?;
            Ok(AssembledProblem {
                problem: ProblemSpec::logistic(train, cfg.beta, cfg.gamma)?,
                test: Some(test),
                dataset_digest: Some(digest),
            })
        }
    }
}

/// Initial state per the isotropic-initialization convention: seeded
/// standard-normal mean, `C0 = c0 I`.
pub fn initial_state(dim: usize, c0: f64, seed: u64) -> Result<GaussianParams> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mean = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    GaussianParams::isotropic(mean, c0)
}

/// Run every configured (seed, method) pair and emit all output files into
/// `out_dir`. A failing method is recorded and does not abort its siblings.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    config_text: &str,
    cache_dir: &Path,
    offline: bool,
    out_dir: &Path,
) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let assembled = assemble_problem(cfg, cache_dir, offline)?;
    let dim = assembled.problem.dim();
    let ocfg = OracleConfig { quadrature_nodes: cfg.quadrature_nodes, ..Default::default() };

    let mut outcomes = Vec::new();
    for &seed in &cfg.seeds {
        let init = initial_state(dim, cfg.c0, seed)?;
        for &method in &cfg.methods {
            let step = StepConfig {
                rho: cfg.steps[&method],
                gamma: cfg.gamma,
                max_iters: cfg.max_iters,
                grad_tol: cfg.grad_tol,
                fixed_point_tol: cfg.fixed_point_tol,
            };
            let outcome = match run_optimizer(method, &init, &assembled.problem, &ocfg, &step) {
                Ok(record) => {
                    let test = match &assembled.test {
                        Some(t) => Some(compute_test_metrics(record.final_state.mean(), t)?),
                        None => None,
                    };
                    let stem = format!("{}_{}_seed{}", cfg.name, method.as_str(), seed);
                    write_run_csv(&record, &out_dir.join(format!("{stem}.csv")))?;
                    write_timing_csv(&record, &out_dir.join(format!("{stem}_timing.csv")))?;
                    MethodOutcome { method, seed, record: Some(record), abort: None, test }
                }
                Err(e) => MethodOutcome {
                    method,
                    seed,
                    record: None,
                    abort: Some(e.to_string()),
                    test: None,
                },
            };
            outcomes.push(outcome);
        }
    }

    emit_plot_data(cfg, &outcomes, out_dir)?;
    write_summary(cfg, config_text, &assembled, &outcomes, out_dir)?;
    Ok(ExperimentOutcome {
        outcomes,
        problem_dim: dim,
        dataset_digest: assembled.dataset_digest,
    })
}

fn global_min_elbo(outcomes: &[MethodOutcome]) -> f64 {
    outcomes
        .iter()
        .filter_map(|o| o.record.as_ref())
        .flat_map(|r| r.rows.iter().map(|row| row.neg_elbo))
        .fold(f64::INFINITY, f64::min)
}

/// Per (method, metric, axis) envelope series across seeds, plus SVG charts.
/// The objective series is shifted by the best value any method reached, so
/// curves plot the gap to the overall best.
pub fn emit_plot_data(
    cfg: &ExperimentConfig,
    outcomes: &[MethodOutcome],
    out_dir: &Path,
) -> Result<()> {
    if outcomes.iter().all(|o| o.record.is_none()) {
        return Ok(());
    }
    let best = global_min_elbo(outcomes);
    let mut svg_series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();

    for &method in &cfg.methods {
        let records: Vec<&RunRecord> = outcomes
            .iter()
            .filter(|o| o.method == method)
            .filter_map(|o| o.record.as_ref())
            .collect();
        if records.is_empty() {
            continue;
        }
        let len = records.iter().map(|r| r.rows.len()).min().unwrap_or(0);
        for (metric, extract) in [
            ("elbo_gap", Box::new(|r: &RunRecord, i: usize| r.rows[i].neg_elbo - best)
                as Box<dyn Fn(&RunRecord, usize) -> f64>),
            ("grad_norm", Box::new(|r: &RunRecord, i: usize| r.rows[i].grad_norm)),
        ] {
            for axis in ["iteration", "seconds"] {
                let mut xs = Vec::with_capacity(len);
                let mut mean = Vec::with_capacity(len);
                let mut lo = Vec::with_capacity(len);
                let mut hi = Vec::with_capacity(len);
                for i in 0..len {
                    let x = match axis {
                        "iteration" => i as f64,
                        _ => {
                            records.iter().map(|r| r.rows[i].wall_ms).sum::<f64>()
                                / records.len() as f64
                                / 1e3
                        }
                    };
                    let vals: Vec<f64> = records.iter().map(|r| extract(r, i)).collect();
                    xs.push(x);
                    mean.push(vals.iter().sum::<f64>() / vals.len() as f64);
                    lo.push(vals.iter().cloned().fold(f64::INFINITY, f64::min));
                    hi.push(vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
                }
                let file = format!("{}_{}_{}_{}.csv", cfg.name, method.as_str(), metric, axis);
                write_series_csv(&out_dir.join(file), axis, &xs, &mean, &lo, &hi)?;
                if metric == "elbo_gap" && axis == "iteration" {
                    svg_series.push((
                        method.as_str().to_string(),
                        xs.iter().cloned().zip(mean.iter().cloned()).collect(),
                    ));
                }
            }
        }
    }
    if !svg_series.is_empty() {
        let series_refs: Vec<(&str, &[(f64, f64)])> = svg_series
            .iter()
            .map(|(n, pts)| (n.as_str(), pts.as_slice()))
            .collect();
        write_svg_chart(
            &out_dir.join(format!("{}_elbo_gap.svg", cfg.name)),
            "objective gap to best (log10)",
            "iteration",
            &series_refs,
            true,
        )?;
    }
    Ok(())
}

fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

fn json_str(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn write_summary(
    cfg: &ExperimentConfig,
    config_text: &str,
    assembled: &AssembledProblem,
    outcomes: &[MethodOutcome],
    out_dir: &Path,
) -> Result<()> {
    let mut s = String::new();
    s.push_str("{\n");
    let _ = writeln!(s, "  \"experiment\": {},", json_str(&cfg.name));
    let _ = writeln!(s, "  \"config_sha256\": {},", json_str(&config_digest(config_text)));
    let _ = writeln!(s, "  \"git_describe\": {},", json_str(&git_describe()));
    let _ = writeln!(
        s,
        "  \"dataset_sha256\": {},",
        assembled
            .dataset_digest
            .as_deref()
            .map(json_str)
            .unwrap_or_else(|| "null".into())
    );
    s.push_str("  \"runs\": [\n");
    for (i, o) in outcomes.iter().enumerate() {
        let comma = if i + 1 == outcomes.len() { "" } else { "," };
        match &o.record {
            Some(r) => {
                let last = r.rows.last().expect("runs record at least one row");
                let test = match &o.test {
                    Some(t) => format!(
                        "{{\"nll_sum\": {}, \"nll_mean\": {}, \"accuracy\": {}}}",
                        fmt_f64(t.nll_sum),
                        fmt_f64(t.nll_mean),
                        fmt_f64(t.accuracy)
                    ),
                    None => "null".into(),
                };
                let _ = writeln!(
                    s,
                    "    {{\"method\": {}, \"seed\": {}, \"converged\": {}, \"iterations\": {}, \"train_neg_elbo\": {}, \"fixed_point_residual\": {}, \"test\": {}}}{comma}",
                    json_str(o.method.as_str()),
                    o.seed,
                    r.converged,
                    r.iterations,
                    fmt_f64(last.neg_elbo),
                    fmt_f64(r.fixed_point_residual),
                    test,
                );
            }
            None => {
                let _ = writeln!(
                    s,
                    "    {{\"method\": {}, \"seed\": {}, \"aborted\": {}}}{comma}",
                    json_str(o.method.as_str()),
                    o.seed,
                    json_str(o.abort.as_deref().unwrap_or("unknown")),
                );
            }
        }
    }
    s.push_str("  ]\n}\n");
    std::fs::write(out_dir.join(format!("{}_summary.json", cfg.name)), s)?;
    Ok(())
}

/// Terminal train objective of the best-converged run for a method, if any.
pub fn terminal_neg_elbo(outcomes: &[MethodOutcome], method: Method) -> Option<f64> {
    outcomes
        .iter()
        .filter(|o| o.method == method)
        .filter_map(|o| o.record.as_ref())
        .filter_map(|r| r.rows.last().map(|row| row.neg_elbo))
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
}
