//! Sweep runners, slope fits, the Darcy inference pipeline and their file
//! outputs.

mod darcy_run;
mod plot;
mod rate;
mod selftest;
mod sweep;

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{domain, Result};

pub use darcy_run::{
    blob_dataset, blob_field, darcy_prior_config, prior_mean_field, run_darcy, train_darcy_prior, DarcyPriorSpec, DarcyRunSpec,
    DarcyRunSummary,
};
pub use plot::emit_plot;
pub use rate::{run_empirical_rate, RateReport, RateRow, RateSpec};
pub use selftest::{
    metric_axioms, oracle_equivalence, ot_selftest, random_uniform_cloud, random_weighted_cloud, SelftestCheck,
    SelftestReport,
};
pub use sweep::{paper_slopes, run_sweep, CellRow, SummaryRow, SweepOutcome, SweepSpec, SweepVar};

/// Ordinary least squares on `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() {
        return Err(domain("x and y have different lengths"));
    }
    if xs.len() < 3 {
        return Err(domain("a slope fit needs at least 3 points"));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(domain("log-log fit needs positive finite values"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(domain("all x values are equal"));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(SlopeFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// Arithmetic mean and standard error (sample standard deviation over `√n`).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// `mean[k+1] ≤ mean[k] + max(se[k], se[k+1])` for every consecutive pair.
pub fn nonincreasing_within_se(means: &[f64], ses: &[f64]) -> bool {
    means
        .windows(2)
        .zip(ses.windows(2))
        .all(|(m, s)| m[1] <= m[0] + s[0].max(s[1]))
}

/// Writes `manifest.json` into `dir`.
pub fn write_manifest(dir: &Path, manifest: &serde_json::Value) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(manifest)? + "\n")?;
    Ok(())
}

/// Crate name and version recorded in every manifest.
pub fn version_info() -> serde_json::Value {
    serde_json::json!({
        "crate": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
    })
}
