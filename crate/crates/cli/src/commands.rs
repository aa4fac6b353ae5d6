use std::path::Path;

use anyhow::{bail, Context, Result};
use dignn::data::{homophily, save_dataset, Dataset, Split};
use dignn::equilibrium::{build_markov, solve_direct, solve_implicit_layer, stationary_distribution, ConstraintSet};
use dignn::laplacian::{build_canonical, build_parameterized};
use dignn::linalg::{frobenius, matrix_to_csv, to_rows};
use dignn::model::{evaluate, grad_check, train, Checkpoint, Dignn, ModelConfig};
use dignn::oversmoothing::{check_ost, check_osi, smoothing_trajectory, trajectory_csv, OstGeometry};
use dignn::spectral::{certify, lambda_max, DEFAULT_MAX_ITER, DEFAULT_SEED, DEFAULT_TOL};
use dignn::{Error, GeometryParams, Graph, LaplacianKind, LaplacianOperator, Matrix};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{
    EvalConfig, GenDataConfig, GradcheckConfig, OsiConfig, OstConfig, SolveConfig, SpectrumConfig,
    TrainRunConfig,
};
use crate::input::{dataset, graph_and_features, sbm};
use crate::output::{to_json_line, write, write_json};

/// How a command finished when it did not hit an I/O or usage error.
#[derive(Debug, PartialEq)]
pub enum Status {
    Success,
    /// a domain condition was not met (exit code 2)
    Unmet(String),
}

/// Canonical operator, or a parameterized one from a seeded random geometry.
/// The geometry is returned with bounds fitted to `x`.
fn operator(
    g: &Graph,
    x: &Matrix,
    kind: LaplacianKind,
    geometry_hidden: usize,
    seed: u64,
) -> Result<(LaplacianOperator, Option<GeometryParams>)> {
    if kind != LaplacianKind::Parameterized {
        return Ok((build_canonical(g, kind)?, None));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = GeometryParams::random(x.ncols(), geometry_hidden, &mut rng);
    let op = build_parameterized(g, x, &p)?;
    Ok((op, Some(p.with_fitted_bounds(x))))
}

#[derive(Serialize)]
struct SpectrumReport {
    laplacian: LaplacianKind,
    num_nodes: usize,
    num_edges: usize,
    lambda_max: dignn::spectral::EigenEstimate,
    certificate: dignn::spectral::WellPosednessReport,
}

pub fn spectrum(cfg: &SpectrumConfig, out: &Path) -> Result<Status> {
    let (g, x) = graph_and_features(&cfg.input, cfg.seed)?;
    let (op, geometry) = operator(&g, &x, cfg.laplacian, cfg.geometry_hidden, cfg.seed)?;
    let est = lambda_max(&op, DEFAULT_TOL, DEFAULT_MAX_ITER, DEFAULT_SEED);
    let cert = certify(&op, cfg.mu, geometry.as_ref());
    write_json(
        out,
        "spectrum.json",
        &SpectrumReport {
            laplacian: cfg.laplacian,
            num_nodes: g.num_nodes(),
            num_edges: g.num_edges(),
            lambda_max: est,
            certificate: cert,
        },
    )?;
    println!("lambda_max={:.16e} mu={:.16e} well_posed={}", est.value, cfg.mu, cert.well_posed);
    if cert.well_posed {
        Ok(Status::Success)
    } else {
        Ok(Status::Unmet(format!(
            "not well-posed: mu = {} does not exceed lambda_max = {}",
            cfg.mu, cert.lambda_max_estimate
        )))
    }
}

#[derive(Serialize)]
struct SolveReport {
    method: &'static str,
    laplacian: LaplacianKind,
    mu: f64,
    converged: bool,
    iterations: usize,
    z_star_norm: Option<f64>,
    residual_history: Vec<f64>,
    z_star: Option<Vec<Vec<f64>>>,
}

pub fn solve(cfg: &SolveConfig, out: &Path) -> Result<Status> {
    let (g, x) = graph_and_features(&cfg.input, cfg.seed)?;
    let (op, _) = operator(&g, &x, cfg.laplacian, cfg.geometry_hidden, cfg.seed)?;
    let mut report = SolveReport {
        method: if cfg.direct { "direct" } else { "fixed_point" },
        laplacian: cfg.laplacian,
        mu: cfg.mu,
        converged: false,
        iterations: 0,
        z_star_norm: None,
        residual_history: Vec::new(),
        z_star: None,
    };
    let z = if cfg.direct {
        match solve_direct(&op, &x, cfg.mu) {
            Ok(z) => {
                report.converged = true;
                Some(z)
            }
            Err(Error::Singular) => None,
            Err(e) => return Err(e.into()),
        }
    } else {
        match solve_implicit_layer(&op, &x, cfg.mu, cfg.tol, cfg.max_iter) {
            Ok(r) => {
                write(out, "residuals.csv", &r.residual_csv())?;
                report.converged = r.converged;
                report.iterations = r.iterations;
                report.residual_history = r.residual_history;
                Some(r.z_star)
            }
            Err(Error::NonFiniteIterate { iteration }) => {
                report.iterations = iteration;
                None
            }
            Err(e) => return Err(e.into()),
        }
    };
    if let Some(z) = &z {
        report.z_star_norm = Some(frobenius(z));
        report.z_star = Some(to_rows(z));
        write(out, "z_star.csv", &matrix_to_csv(z))?;
    }
    write_json(out, "equilibrium.json", &report)?;
    println!("method={} converged={} iterations={}", report.method, report.converged, report.iterations);
    if report.converged {
        Ok(Status::Success)
    } else if cfg.direct {
        Ok(Status::Unmet("the direct system is singular".into()))
    } else {
        Ok(Status::Unmet(format!(
            "fixed point not reached in {} iterations (mu = {})",
            report.iterations, cfg.mu
        )))
    }
}

#[derive(Serialize)]
struct OstOutput {
    laplacian: LaplacianKind,
    mu: f64,
    tol: f64,
    constrained_nodes: Vec<usize>,
    report: dignn::oversmoothing::OstReport,
}

pub fn demo_ost(cfg: &OstConfig, out: &Path) -> Result<Status> {
    let (g, _) = graph_and_features(&cfg.input, cfg.seed)?;
    let n = g.num_nodes();
    if !(0.0..=1.0).contains(&cfg.constrained_fraction) || cfg.target_dim == 0 {
        bail!("constrained_fraction must lie in [0, 1] and target_dim must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let m = (cfg.constrained_fraction * n as f64).round() as usize;
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(&mut rng);
    nodes.truncate(m);
    nodes.sort_unstable();
    let d = cfg.target_dim;
    let targets = Matrix::from_fn(m, d, |_, _| rng.random::<f64>());
    let x_a = Matrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
    let x_b = Matrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
    let geometry = match cfg.laplacian {
        LaplacianKind::Parameterized => {
            OstGeometry::Parameterized(GeometryParams::random(d, cfg.geometry_hidden, &mut rng))
        }
        kind => OstGeometry::Fixed(kind),
    };
    let cs = ConstraintSet::new(n, &nodes, targets)?;
    let report = check_ost(&g, &geometry, &cs, &x_a, &x_b, cfg.mu, cfg.tol)?;
    println!(
        "feature_independent={} max_abs_difference={:.16e} converged={}",
        report.feature_independent, report.max_abs_difference, report.converged
    );
    let converged = report.converged;
    write_json(
        out,
        "ost.json",
        &OstOutput { laplacian: cfg.laplacian, mu: cfg.mu, tol: cfg.tol, constrained_nodes: nodes, report },
    )?;
    if converged {
        Ok(Status::Success)
    } else {
        Ok(Status::Unmet("constrained solve did not converge".into()))
    }
}

#[derive(Serialize)]
struct OsiOutput {
    laplacian: LaplacianKind,
    stationary_distribution: Vec<f64>,
    report: dignn::oversmoothing::OsiReport,
}

pub fn demo_osi(cfg: &OsiConfig, out: &Path) -> Result<Status> {
    let (g, x) = graph_and_features(&cfg.input, cfg.seed)?;
    let f0 = match &cfg.f0 {
        Some(v) if v.len() != g.num_nodes() => {
            bail!("f0 has {} entries for {} nodes", v.len(), g.num_nodes())
        }
        Some(v) => Matrix::from_column_slice(v.len(), 1, v),
        None => x.clone(),
    };
    let (op, _) = operator(&g, &x, cfg.laplacian, 16, cfg.seed)?;
    let markov = build_markov(&op)?;
    write(out, "trajectory.csv", &trajectory_csv(&smoothing_trajectory(&markov, &f0, cfg.trajectory_steps)))?;
    let report = match check_osi(&markov, &f0, cfg.tol, cfg.max_iter) {
        Ok(r) => r,
        Err(e @ (Error::BipartiteGraph | Error::Disconnected)) => return Ok(Status::Unmet(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    println!(
        "rows_identical={} max_row_deviation={:.16e} iterations={}",
        report.rows_identical, report.max_row_deviation, report.iterations
    );
    let identical = report.rows_identical;
    let iterations = report.iterations;
    write_json(
        out,
        "osi.json",
        &OsiOutput { laplacian: cfg.laplacian, stationary_distribution: stationary_distribution(&markov), report },
    )?;
    if identical {
        Ok(Status::Success)
    } else {
        Ok(Status::Unmet(format!("rows still differ after {iterations} diffusion steps")))
    }
}

/// Fills the data-dependent model dimensions, refusing explicit mismatches.
fn fit_dims(model: &mut ModelConfig, ds: &Dataset) -> Result<()> {
    let d = ds.features.ncols();
    if model.input_dim != 0 && model.input_dim != d {
        bail!("model.input_dim is {} but the features have {d} columns", model.input_dim);
    }
    model.input_dim = d;
    model.num_classes = model.num_classes.max(ds.num_classes);
    Ok(())
}

#[derive(Serialize)]
struct GradcheckOutput {
    threshold: f64,
    passes: bool,
    worst: f64,
    report: dignn::model::GradCheckReport,
}

pub fn gradcheck(cfg: &GradcheckConfig, out: &Path) -> Result<Status> {
    let ds = dataset(&cfg.input, cfg.seed)?;
    let mut mc = cfg.model.clone();
    fit_dims(&mut mc, &ds)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = Dignn::new(&mc, &mut rng)?;
    let report = grad_check(&model, &ds.graph, &ds.features, ds.labels(), ds.mask(Split::Train), cfg.step)?;
    let (passes, worst) = (report.passes(cfg.threshold), report.worst());
    for (group, err) in &report.max_rel_error {
        println!("{group} {err:.16e}");
    }
    write_json(out, "gradcheck.json", &GradcheckOutput { threshold: cfg.threshold, passes, worst, report })?;
    if passes {
        Ok(Status::Success)
    } else {
        Ok(Status::Unmet(format!("max relative error {worst:e} is not below {:e}", cfg.threshold)))
    }
}

#[derive(Serialize)]
struct Accuracies {
    train_acc: Option<f64>,
    val_acc: Option<f64>,
    test_acc: Option<f64>,
}

fn accuracies(model: &Dignn, ds: &Dataset) -> Result<Accuracies> {
    let acc = |s: Split| match evaluate(model, ds, s) {
        Ok(a) => Ok(Some(a)),
        Err(Error::EmptySplit(_)) => Ok(None),
        Err(e) => Err(e),
    };
    Ok(Accuracies { train_acc: acc(Split::Train)?, val_acc: acc(Split::Val)?, test_acc: acc(Split::Test)? })
}

#[derive(Serialize)]
struct TrainOutput {
    epochs: usize,
    best_epoch: Option<usize>,
    best_val_acc: Option<f64>,
    #[serde(flatten)]
    final_accuracy: Accuracies,
}

pub fn train_cmd(cfg: &TrainRunConfig, out: &Path) -> Result<Status> {
    let ds = dataset(&cfg.input, cfg.seed)?;
    let mut mc = cfg.model.clone();
    fit_dims(&mut mc, &ds)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = Dignn::new(&mc, &mut rng)?;
    let report = train(model, &ds, &cfg.train)?;
    let mut lines = String::new();
    for m in &report.metrics {
        lines.push_str(&to_json_line(m)?);
    }
    write(out, "metrics.jsonl", &lines)?;
    let final_accuracy = accuracies(&report.model, &ds)?;
    println!(
        "best_epoch={} test_acc={}",
        report.best_epoch.map_or("none".into(), |e| e.to_string()),
        final_accuracy.test_acc.map_or("none".into(), |a| format!("{a:.16e}"))
    );
    write_json(
        out,
        "train.json",
        &TrainOutput {
            epochs: cfg.train.epochs,
            best_epoch: report.best_epoch,
            best_val_acc: report.best_val_acc,
            final_accuracy,
        },
    )?;
    Checkpoint::new(report.model, Some(cfg.train.clone()), Some(report.rng))
        .save(&out.join("checkpoint.json"))
        .context("writing checkpoint")?;
    Ok(Status::Success)
}

#[derive(Serialize)]
struct EvalOutput {
    max_iter: usize,
    tol: f64,
    #[serde(flatten)]
    accuracy: Accuracies,
}

pub fn eval(cfg: &EvalConfig, out: &Path) -> Result<Status> {
    let Some(path) = &cfg.checkpoint else {
        bail!("eval needs a checkpoint (--checkpoint or \"checkpoint\" in the config)");
    };
    let mut model = Checkpoint::load(path)
        .with_context(|| format!("loading checkpoint {}", path.display()))?
        .model;
    if let Some(k) = cfg.max_iter {
        model.max_iter = k;
    }
    if let Some(t) = cfg.tol {
        model.tol = t;
    }
    let ds = dataset(&cfg.input, cfg.seed)?;
    let accuracy = accuracies(&model, &ds)?;
    println!("test_acc={}", accuracy.test_acc.map_or("none".into(), |a| format!("{a:.16e}")));
    write_json(out, "eval.json", &EvalOutput { max_iter: model.max_iter, tol: model.tol, accuracy })?;
    Ok(Status::Success)
}

#[derive(Serialize)]
struct DatasetSummary {
    num_nodes: usize,
    num_edges: usize,
    num_classes: usize,
    feature_dim: usize,
    homophily: f64,
}

pub fn gen_data(cfg: &GenDataConfig, out: &Path) -> Result<Status> {
    let ds = sbm(&cfg.sbm, cfg.seed)?;
    save_dataset(&ds, out)?;
    let summary = DatasetSummary {
        num_nodes: ds.graph.num_nodes(),
        num_edges: ds.graph.num_edges(),
        num_classes: ds.num_classes,
        feature_dim: ds.features.ncols(),
        homophily: homophily(&ds.graph, ds.labels()),
    };
    println!("nodes={} edges={} homophily={:.16e}", summary.num_nodes, summary.num_edges, summary.homophily);
    write_json(out, "dataset.json", &summary)?;
    Ok(Status::Success)
}
