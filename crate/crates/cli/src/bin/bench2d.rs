use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use genprior::experiments::{emit_plot, run_empirical_rate, run_sweep, RateSpec, SweepSpec, SweepVar};
use genprior::measures::{BenchmarkDist, BenchmarkKind};
use genprior::transport::Objective;
use genprior::RngSeed;
use genprior_cli::{check_grid, finish, init_threads};

/// Sample-complexity sweeps and empirical rates on 2D benchmarks.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// Worker threads (1 gives fully sequential execution).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Trains generators across a grid and records prior and posterior distances.
    Sweep(SweepArgs),
    /// Empirical convergence of `W2(μ^N, μ_ref)` in N.
    Rate(RateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Fit {
    /// Regression onto exact-OT barycentric targets.
    Regression,
    /// Minibatch Sinkhorn divergence with ε annealed from 1 to 0.05.
    Sinkhorn,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    var: SweepVar,
    #[arg(long)]
    dist: BenchmarkKind,
    #[arg(long, value_delimiter = ',', required = true)]
    grid: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long)]
    out: PathBuf,
    /// Minibatch steps per stage.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    stages: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Stage objective.
    #[arg(long, value_enum, default_value_t = Fit::Regression)]
    objective: Fit,
    /// Training-set size for the width and epochs sweeps.
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_gen: Option<usize>,
    #[arg(long)]
    n_ref: Option<usize>,
    /// Size of each resampled posterior cloud.
    #[arg(long)]
    m_out: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RateArgs {
    #[arg(long)]
    dist: BenchmarkKind,
    #[arg(long, value_delimiter = ',', required = true)]
    grid: Vec<usize>,
    #[arg(long, default_value_t = 32768)]
    nref: usize,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
}

fn sweep(a: SweepArgs, threads: usize) -> Result<usize> {
    check_grid(&a.grid)?;
    let mut spec = SweepSpec::new(a.var, a.dist, a.grid);
    spec.repeats = a.repeats;
    if let Some(v) = a.epochs {
        spec.base.epochs = v;
    }
    if let Some(v) = a.stages {
        spec.base.stage_count = v;
    }
    if let Some(v) = a.batch {
        spec.base.batch_size = v;
    }
    if let Some(v) = a.lr {
        spec.base.learning_rate = v;
    }
    if let Fit::Sinkhorn = a.objective {
        spec.base.objective = Objective::Sinkhorn;
        spec.base.epsilon_schedule = vec![1.0, 0.05];
    }
    if let Some(v) = a.n_train {
        spec.n_train = v;
    }
    if let Some(v) = a.n_gen {
        spec.n_gen = v;
    }
    if let Some(v) = a.n_ref {
        spec.n_ref = v;
    }
    if let Some(v) = a.m_out {
        spec.m_out = v;
    }
    if let Some(v) = a.seed {
        spec.seed0 = RngSeed(v);
    }
    let outcome = run_sweep(&spec)?;
    outcome.write_all(&spec, &a.out, serde_json::json!({ "threads": threads }))?;
    let summary = a.out.join("summary.csv");
    if outcome.summary.iter().filter(|s| s.n_ok > 0).count() > 0 {
        if let Err(e) = emit_plot(&summary, "sweep_value", &["prior_w2", "posterior_w1"], &a.out.join("summary.svg")) {
            eprintln!("plot skipped: {e}");
        }
    }
    for s in &outcome.summary {
        println!(
            "{}={} prior_w2={:.4} posterior_w1={:.4} bound_fraction={:.2}",
            spec.variable.name(),
            s.sweep_value,
            s.prior_w2_mean,
            s.posterior_w1_mean,
            s.bound_fraction
        );
    }
    if let (Some(p), Some(q)) = (outcome.prior_slope, outcome.posterior_slope) {
        println!("slopes: prior {:.3}, posterior {:.3}", p.slope, q.slope);
    }
    Ok(outcome.errored())
}

fn rate(a: RateArgs, threads: usize) -> Result<usize> {
    check_grid(&a.grid)?;
    let spec = RateSpec {
        dist: BenchmarkDist::new(a.dist),
        grid: a.grid,
        repeats: a.repeats,
        n_ref: a.nref,
        seed0: RngSeed(a.seed),
    };
    let report = run_empirical_rate(&spec)?;
    report.write_all(&spec, &a.out, serde_json::json!({ "threads": threads }))?;
    if let Err(e) = emit_plot(&a.out.join("rate_summary.csv"), "n", &["w2"], &a.out.join("rate.svg")) {
        eprintln!("plot skipped: {e}");
    }
    for (n, m, se) in &report.means {
        println!("n={n} w2={m:.5} se={se:.5}");
    }
    println!("slope {:.3} (r² {:.3})", report.fit.slope, report.fit.r_squared);
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    finish(init_threads(cli.threads).and_then(|threads| match cli.cmd {
        Cmd::Sweep(a) => sweep(a, threads),
        Cmd::Rate(a) => rate(a, threads),
    }))
}
