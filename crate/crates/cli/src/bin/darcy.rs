use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use genprior::experiments::{run_darcy, train_darcy_prior, version_info, write_manifest, DarcyPriorSpec, DarcyRunSpec};
use genprior::transport::ResidualMapStack;
use genprior::RngSeed;
use genprior_cli::{finish, init_threads};

/// Permeability inference for the Darcy problem with a learned prior.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fits a generator to synthetic blob permeability fields.
    TrainPrior {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        stages: Option<usize>,
        #[arg(long)]
        n_data: Option<usize>,
        #[arg(long)]
        latent: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Runs latent pCN on synthetic pressure data.
    Run {
        /// Noise standard deviation relative to the spread of the clean data.
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 200_000)]
        samples: usize,
        #[arg(long)]
        prior: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        thin: Option<usize>,
        #[arg(long)]
        beta0: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".d");
    path.with_file_name(name)
}

fn train_prior(
    out: PathBuf,
    epochs: Option<usize>,
    stages: Option<usize>,
    n_data: Option<usize>,
    latent: Option<usize>,
    seed: Option<u64>,
) -> Result<usize> {
    let mut spec = DarcyPriorSpec::default();
    if let Some(v) = epochs {
        spec.train.epochs = v;
    }
    if let Some(v) = stages {
        spec.train.stage_count = v;
    }
    if let Some(v) = n_data {
        spec.n_data = v;
    }
    if let Some(v) = latent {
        spec.latent_dim = v;
    }
    if let Some(v) = seed {
        spec.data_seed = RngSeed(v);
        spec.train.seed = RngSeed(v).derive(2);
    }
    let (generator, report) = train_darcy_prior(&spec)?;
    generator.save(&out).with_context(|| format!("writing {}", out.display()))?;
    let dir = sidecar(&out);
    std::fs::create_dir_all(&dir)?;
    let mut w = csv::Writer::from_path(dir.join("eval.csv"))?;
    w.write_record(["checkpoint", "divergence"])?;
    for (k, d) in report.eval_divergence.iter().enumerate() {
        w.write_record([k.to_string(), d.to_string()])?;
    }
    w.flush()?;
    write_manifest(
        &dir,
        &serde_json::json!({
            "command": "darcy train-prior",
            "spec": spec,
            "generator": out,
            "initial_divergence": report.initial_divergence(),
            "final_divergence": report.final_divergence(),
            "accepted_stages": report.accepted,
            "software": version_info(),
        }),
    )?;
    println!(
        "held-out divergence {:.4} -> {:.4}; wrote {}",
        report.initial_divergence(),
        report.final_divergence(),
        out.display()
    );
    Ok(0)
}

fn run(noise: f64, samples: usize, prior: PathBuf, out: PathBuf, thin: Option<usize>, beta0: Option<f64>, seed: u64) -> Result<usize> {
    let generator = ResidualMapStack::<f64>::load(&prior).with_context(|| format!("reading {}", prior.display()))?;
    let mut spec = DarcyRunSpec::new(noise, samples, RngSeed(seed));
    if let Some(v) = thin {
        spec.chain.thin = v;
    }
    if let Some(v) = beta0 {
        spec.chain.beta0 = v;
    }
    let s = run_darcy(&spec, &generator, &out)?;
    println!(
        "acceptance {:.3}, beta {:.4}, relative error {:.3}, mean std {:.4}, min ESS {:.1}",
        s.acceptance_rate, s.beta_final, s.relative_error, s.mean_std, s.ess_min
    );
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    finish(init_threads(cli.threads).and_then(|_| match cli.cmd {
        Cmd::TrainPrior {
            out,
            epochs,
            stages,
            n_data,
            latent,
            seed,
        } => train_prior(out, epochs, stages, n_data, latent, seed),
        Cmd::Run {
            noise,
            samples,
            prior,
            out,
            thin,
            beta0,
            seed,
        } => run(noise, samples, prior, out, thin, beta0, seed),
    }))
}
