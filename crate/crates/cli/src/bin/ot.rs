use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use genprior::experiments::{ot_selftest, version_info, write_manifest};
use genprior::RngSeed;
use genprior_cli::{finish, init_threads};

/// Exact optimal transport utilities.
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
    /// Checks the exact solver against brute force and the metric axioms.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Directory for `selftest.csv` and `manifest.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn selftest(seed: u64, out: Option<PathBuf>) -> Result<usize> {
    let report = ot_selftest(RngSeed(seed))?;
    for c in &report.checks {
        println!(
            "{} {:<20} cases={:<4} worst={:.3e} tol={:.0e}",
            if c.passed() { "PASS" } else { "FAIL" },
            c.name,
            c.cases,
            c.worst,
            c.tolerance
        );
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)?;
        let mut w = csv::Writer::from_path(dir.join("selftest.csv"))?;
        for c in &report.checks {
            w.serialize(c)?;
        }
        w.flush()?;
        write_manifest(
            &dir,
            &serde_json::json!({
                "command": "ot selftest",
                "seed": seed,
                "passed": report.passed(),
                "software": version_info(),
            }),
        )?;
    }
    Ok(report.checks.iter().filter(|c| !c.passed()).count())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    finish(init_threads(cli.threads).and_then(|_| match cli.cmd {
        Cmd::Selftest { seed, out } => selftest(seed, out),
    }))
}
