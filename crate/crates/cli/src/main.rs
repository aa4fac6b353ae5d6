//! `dignn`: batch front-end for the implicit graph diffusion library.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 domain condition unmet
//! (not well-posed, bipartite or disconnected graph, no convergence).

mod commands;
mod config;
mod input;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use commands::Status;
use config::Override;

#[derive(Parser)]
#[command(name = "dignn", version, about = "Implicit graph neural diffusion toolkit")]
struct Cli {
    /// JSON parameter document for the subcommand
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// run seed (overrides the config)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// worker threads; output is byte-reproducible with 1
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// more log output on stderr (repeat for more)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate lambda_max and certify well-posedness for mu
    Spectrum(SpectrumArgs),
    /// Solve the implicit layer Z = X - (1/mu) L Z
    Solve(SolveArgs),
    /// Check feature independence of constrained equilibria
    DemoOst(OstArgs),
    /// Check that repeated diffusion collapses rows to (pi f0)^T
    DemoOsi(OsiArgs),
    /// Compare implicit gradients with finite differences
    Gradcheck(GradcheckArgs),
    /// Train a model and write metrics and a checkpoint
    Train(TrainArgs),
    /// Evaluate a checkpoint
    Eval(EvalArgs),
    /// Generate a stochastic block model dataset
    GenData(GenDataArgs),
}

#[derive(Args, Default)]
struct InputArgs {
    /// built-in graph: k2, triangle, triangle-pendant, path4
    #[arg(long)]
    fixture: Option<String>,
    /// edge list file
    #[arg(long)]
    edges: Option<PathBuf>,
    /// feature CSV (with --edges)
    #[arg(long)]
    features: Option<PathBuf>,
    /// label file (with --edges)
    #[arg(long)]
    labels: Option<PathBuf>,
    /// dataset directory
    #[arg(long)]
    dataset: Option<PathBuf>,
}

impl InputArgs {
    fn overrides(&self, o: &mut Vec<Override>) {
        push(o, &["input", "fixture"], &self.fixture);
        push(o, &["input", "edges"], &self.edges);
        push(o, &["input", "dataset"], &self.dataset);
        push(o, &["input", "features"], &self.features);
        push(o, &["input", "labels"], &self.labels);
    }
}

#[derive(Args)]
struct SpectrumArgs {
    #[command(flatten)]
    input: InputArgs,
    /// unnormalized, random_walk, normalized or parameterized
    #[arg(long)]
    laplacian: Option<String>,
    #[arg(long)]
    mu: Option<f64>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    laplacian: Option<String>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// dense direct solve
    #[arg(long)]
    direct: bool,
}

#[derive(Args)]
struct OstArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    laplacian: Option<String>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct OsiArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    laplacian: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// length of the explicit diffusion trajectory
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[command(flatten)]
    input: InputArgs,
    /// random_walk or parameterized
    #[arg(long)]
    laplacian: Option<String>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    input: InputArgs,
    /// random_walk or parameterized
    #[arg(long)]
    laplacian: Option<String>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// solver cap used instead of the checkpoint's
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    p_in: Option<f64>,
    #[arg(long)]
    p_out: Option<f64>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
}

fn push<T: serde::Serialize>(o: &mut Vec<Override>, path: &[&'static str], v: &Option<T>) {
    if let Some(v) = v {
        o.push((path.to_vec(), json!(v)));
    }
}

fn run(cli: &Cli) -> Result<Status> {
    let mut o: Vec<Override> = Vec::new();
    push(&mut o, &["seed"], &cli.seed);
    let cfg = cli.config.as_deref();
    let out = &cli.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match &cli.command {
        Command::Spectrum(a) => {
            a.input.overrides(&mut o);
            push(&mut o, &["laplacian"], &a.laplacian);
            push(&mut o, &["mu"], &a.mu);
            commands::spectrum(&config::load(cfg, o)?, out)
        }
        Command::Solve(a) => {
            a.input.overrides(&mut o);
            push(&mut o, &["laplacian"], &a.laplacian);
            push(&mut o, &["mu"], &a.mu);
            push(&mut o, &["tol"], &a.tol);
            push(&mut o, &["max_iter"], &a.max_iter);
            if a.direct {
                o.push((vec!["direct"], Value::Bool(true)));
            }
            commands::solve(&config::load(cfg, o)?, out)
        }
        Command::DemoOst(a) => {
            a.input.overrides(&mut o);
            push(&mut o, &["laplacian"], &a.laplacian);
            push(&mut o, &["mu"], &a.mu);
            push(&mut o, &["tol"], &a.tol);
            commands::demo_ost(&config::load(cfg, o)?, out)
        }
        Command::DemoOsi(a) => {
            a.input.overrides(&mut o);
            push(&mut o, &["laplacian"], &a.laplacian);
            push(&mut o, &["tol"], &a.tol);
            push(&mut o, &["max_iter"], &a.max_iter);
            push(&mut o, &["trajectory_steps"], &a.steps);
            commands::demo_osi(&config::load(cfg, o)?, out)
        }
        Command::Gradcheck(a) => {
            a.input.overrides(&mut o);
            push(&mut o, &["model", "laplacian"], &a.laplacian);
            push(&mut o, &["step"], &a.step);
            push(&mut o, &["threshold"], &a.threshold);
            commands::gradcheck(&config::load(cfg, o)?, out)
        }
        Command::Train(a) => {
            a.input.overrides(&mut o);
            push(&mut o, &["train", "seed"], &cli.seed);
            push(&mut o, &["model", "laplacian"], &a.laplacian);
            push(&mut o, &["model", "mu"], &a.mu);
            push(&mut o, &["model", "hidden"], &a.hidden);
            push(&mut o, &["model", "tol"], &a.tol);
            push(&mut o, &["model", "max_iter"], &a.max_iter);
            push(&mut o, &["train", "epochs"], &a.epochs);
            push(&mut o, &["train", "lr"], &a.lr);
            commands::train_cmd(&config::load(cfg, o)?, out)
        }
        Command::Eval(a) => {
            a.input.overrides(&mut o);
            push(&mut o, &["checkpoint"], &a.checkpoint);
            push(&mut o, &["max_iter"], &a.max_iter);
            push(&mut o, &["tol"], &a.tol);
            commands::eval(&config::load(cfg, o)?, out)
        }
        Command::GenData(a) => {
            push(&mut o, &["sbm", "n"], &a.n);
            push(&mut o, &["sbm", "k"], &a.k);
            push(&mut o, &["sbm", "p_in"], &a.p_in);
            push(&mut o, &["sbm", "p_out"], &a.p_out);
            push(&mut o, &["sbm", "feature_dim"], &a.feature_dim);
            push(&mut o, &["sbm", "noise"], &a.noise);
            commands::gen_data(&config::load(cfg, o)?, out)
        }
    }
}

/// Library errors that describe the problem instance rather than the input files.
fn is_domain(e: &anyhow::Error) -> bool {
    use dignn::Error as E;
    matches!(
        e.downcast_ref::<E>(),
        Some(
            E::BipartiteGraph
                | E::Disconnected
                | E::NonFiniteIterate { .. }
                | E::AdjointNoConvergence { .. }
                | E::DisconnectedAfterRetries(_)
        )
    )
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads.max(1)).build_global() {
        eprintln!("dignn: {e}");
        return ExitCode::from(1);
    }
    match run(&cli) {
        Ok(Status::Success) => ExitCode::SUCCESS,
        Ok(Status::Unmet(msg)) => {
            eprintln!("dignn: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("dignn: {e:#}");
            ExitCode::from(if is_domain(&e) { 2 } else { 1 })
        }
    }
}
