use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::{fit_slope, mean_se, version_info, write_manifest, SlopeFit};
use crate::bayes::{stability_report, LikelihoodSpec, StabilityReport};
use crate::error::{config, Error, Result};
use crate::measures::{sample_benchmark, sample_gaussian, BenchmarkDist, BenchmarkKind, PointCloud};
use crate::rng::RngSeed;
use crate::transport::{train, TrainConfig};

/// Quantity varied across a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepVar {
    SampleSize,
    Width,
    Epochs,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::SampleSize => "sample-size",
            SweepVar::Width => "width",
            SweepVar::Epochs => "epochs",
        }
    }
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SweepVar::SampleSize, SweepVar::Width, SweepVar::Epochs]
            .into_iter()
            .find(|v| v.name() == s || v.name().replace('-', "_") == s)
            .ok_or_else(|| config(format!("unknown sweep variable {s:?}")))
    }
}

/// Reference slopes `(prior W2, posterior W1)` of the adversarially trained
/// generators, for comparison only.
pub fn paper_slopes(kind: BenchmarkKind, var: SweepVar) -> Option<(f64, f64)> {
    use BenchmarkKind::*;
    use SweepVar::*;
    Some(match (kind, var) {
        (Swissroll, SampleSize) => (-0.307, -0.357),
        (Swissroll, Width) => (-0.113, -0.164),
        (Swissroll, Epochs) => (-0.289, -0.327),
        (Checkerboard, SampleSize) => (-0.321, -0.359),
        (Checkerboard, Width) => (-0.119, -0.218),
        (Checkerboard, Epochs) => (-0.219, -0.316),
        (Pinwheel, SampleSize) => (-0.281, -0.325),
        (Pinwheel, Width) => (-0.174, -0.282),
        (Pinwheel, Epochs) => (-0.312, -0.485),
        _ => return None,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSpec {
    pub variable: SweepVar,
    pub grid: Vec<usize>,
    pub dist: BenchmarkDist,
    pub repeats: usize,
    /// Training configuration; the swept field is overwritten per cell.
    pub base: TrainConfig,
    /// Training sample size when it is not the swept variable.
    pub n_train: usize,
    /// Size of the Gaussian latent sample used for training.
    pub n_latent: usize,
    /// Size of the generated cloud compared against the reference.
    pub n_gen: usize,
    /// Size of the ground-truth reference cloud.
    pub n_ref: usize,
    /// Equal-size posterior resamples for the `W_1` estimate.
    pub m_out: usize,
    /// Observation model; the 2D benchmark model when absent.
    #[serde(skip)]
    pub likelihood: Option<LikelihoodSpec<f64>>,
    pub seed0: RngSeed,
}

impl SweepSpec {
    /// Desk-scale defaults for the given sweep.
    pub fn new(variable: SweepVar, dist: BenchmarkKind, grid: Vec<usize>) -> Self {
        SweepSpec {
            variable,
            grid,
            dist: BenchmarkDist::new(dist),
            repeats: 5,
            base: TrainConfig {
                epochs: 2000,
                batch_size: 128,
                learning_rate: 0.003,
                lr_decay: 0.1,
                stage_count: 3,
                epsilon_schedule: vec![0.05],
                optimizer: crate::transport::Optimizer::adam(),
                objective: crate::transport::Objective::regression(),
                ..TrainConfig::default()
            },
            n_train: 10_000,
            n_latent: 8192,
            n_gen: 4096,
            n_ref: 1 << 15,
            m_out: 1 << 11,
            likelihood: None,
            seed0: RngSeed(2024),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() || self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config("sweep grid must be nonempty and strictly increasing"));
        }
        if self.grid[0] == 0 {
            return Err(config("sweep grid values must be positive"));
        }
        if self.repeats == 0 {
            return Err(config("repeats must be at least 1"));
        }
        if self.n_gen == 0 || self.n_ref == 0 || self.m_out == 0 || self.n_latent == 0 {
            return Err(config("cloud sizes must be positive"));
        }
        self.base.validate()
    }

    fn likelihood(&self) -> LikelihoodSpec<f64> {
        self.likelihood.clone().unwrap_or_else(LikelihoodSpec::benchmark)
    }
}

/// One sweep cell; `error` is empty on success.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellRow {
    pub dist: String,
    pub sweep_var: String,
    pub sweep_value: usize,
    pub repeat: usize,
    pub seed: u64,
    pub prior_w2: f64,
    pub posterior_w1: f64,
    pub cstab: f64,
    pub ratio: f64,
    pub noise_floor: f64,
    pub bound_holds: bool,
    pub error: String,
}

impl CellRow {
    pub fn ok(&self) -> bool {
        self.error.is_empty()
    }
}

/// Mean and standard error over the successful repeats of one grid value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub sweep_value: usize,
    pub n_ok: usize,
    pub prior_w2_mean: f64,
    pub prior_w2_se: f64,
    pub posterior_w1_mean: f64,
    pub posterior_w1_se: f64,
    pub noise_floor_mean: f64,
    pub cstab_mean: f64,
    pub bound_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<CellRow>,
    pub summary: Vec<SummaryRow>,
    pub prior_slope: Option<SlopeFit>,
    pub posterior_slope: Option<SlopeFit>,
    pub cell_seconds: Vec<f64>,
}

impl SweepOutcome {
    pub fn errored(&self) -> usize {
        self.rows.iter().filter(|r| !r.ok()).count()
    }

    /// Fraction of successful cells satisfying the stability bound.
    pub fn bound_fraction(&self) -> f64 {
        let ok: Vec<&CellRow> = self.rows.iter().filter(|r| r.ok()).collect();
        ok.iter().filter(|r| r.bound_holds).count() as f64 / ok.len().max(1) as f64
    }

    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("cells.csv"))?));
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("summary.csv"))?));
        for r in &self.summary {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn run_cell(
    spec: &SweepSpec,
    reference: &PointCloud<f64>,
    lik: &LikelihoodSpec<f64>,
    value: usize,
    seed: RngSeed,
) -> Result<StabilityReport<f64>> {
    let mut cfg = spec.base.clone();
    let mut n = spec.n_train;
    match spec.variable {
        SweepVar::SampleSize => n = value,
        SweepVar::Width => cfg.hidden = vec![value; cfg.hidden.len().max(1)],
        SweepVar::Epochs => cfg.epochs = value,
    }
    cfg.seed = seed.derive(2);
    let target: PointCloud<f64> = sample_benchmark(&spec.dist, n, seed.derive(0))?;
    let latent: PointCloud<f64> = sample_gaussian(2, spec.n_latent, seed.derive(1))?;
    let (map, _) = train(&target, &latent, &cfg)?;
    let eta: PointCloud<f64> = sample_gaussian(2, spec.n_gen, seed.derive(3))?;
    let generated = map.pushforward_cloud(&eta)?;
    stability_report(reference, &generated, lik, spec.m_out, seed.derive(4))
}

/// Trains one generator per grid value and repeat and compares the induced
/// priors and posteriors with the reference ones.
///
/// A failing cell is recorded with its error message and the sweep goes on.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutcome> {
    spec.validate()?;
    let lik = spec.likelihood();
    let reference: PointCloud<f64> = sample_benchmark(&spec.dist, spec.n_ref, spec.seed0.derive(u64::MAX))?;
    let cells: Vec<(usize, usize)> = spec
        .grid
        .iter()
        .flat_map(|&v| (0..spec.repeats).map(move |r| (v, r)))
        .collect();
    let results: Vec<(CellRow, f64)> = cells
        .par_iter()
        .enumerate()
        .map(|(k, &(value, repeat))| {
            let seed = spec.seed0.derive(k as u64);
            let start = Instant::now();
            let res = run_cell(spec, &reference, &lik, value, seed);
            let mut row = CellRow {
                dist: spec.dist.kind.name().to_string(),
                sweep_var: spec.variable.name().to_string(),
                sweep_value: value,
                repeat,
                seed: seed.0,
                prior_w2: f64::NAN,
                posterior_w1: f64::NAN,
                cstab: f64::NAN,
                ratio: f64::NAN,
                noise_floor: f64::NAN,
                bound_holds: false,
                error: String::new(),
            };
            match res {
                Ok(rep) => {
                    row.prior_w2 = rep.prior_w2;
                    row.posterior_w1 = rep.posterior_w1;
                    row.cstab = rep.cstab_estimate.unwrap_or(f64::NAN);
                    row.ratio = rep.ratio;
                    row.noise_floor = rep.noise_floor;
                    row.bound_holds = rep.bound_holds().unwrap_or(false);
                }
                Err(e) => row.error = e.to_string(),
            }
            (row, start.elapsed().as_secs_f64())
        })
        .collect();
    let (rows, cell_seconds): (Vec<CellRow>, Vec<f64>) = results.into_iter().unzip();

    let summary: Vec<SummaryRow> = spec
        .grid
        .iter()
        .map(|&v| {
            let ok: Vec<&CellRow> = rows.iter().filter(|r| r.sweep_value == v && r.ok()).collect();
            let col = |f: fn(&CellRow) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let (pm, ps) = mean_se(&col(|r| r.prior_w2));
            let (qm, qs) = mean_se(&col(|r| r.posterior_w1));
            SummaryRow {
                sweep_value: v,
                n_ok: ok.len(),
                prior_w2_mean: pm,
                prior_w2_se: ps,
                posterior_w1_mean: qm,
                posterior_w1_se: qs,
                noise_floor_mean: mean_se(&col(|r| r.noise_floor)).0,
                cstab_mean: mean_se(&col(|r| r.cstab)).0,
                bound_fraction: ok.iter().filter(|r| r.bound_holds).count() as f64 / ok.len().max(1) as f64,
            }
        })
        .collect();
    let complete: Vec<&SummaryRow> = summary.iter().filter(|s| s.n_ok > 0).collect();
    let xs: Vec<f64> = complete.iter().map(|s| s.sweep_value as f64).collect();
    let prior_slope = fit_slope(&xs, &complete.iter().map(|s| s.prior_w2_mean).collect::<Vec<_>>()).ok();
    let posterior_slope = fit_slope(&xs, &complete.iter().map(|s| s.posterior_w1_mean).collect::<Vec<_>>()).ok();
    Ok(SweepOutcome {
        rows,
        summary,
        prior_slope,
        posterior_slope,
        cell_seconds,
    })
}

impl SweepOutcome {
    /// `cells.csv`, `summary.csv`, `slopes.csv` and `manifest.json`.
    pub fn write_all(&self, spec: &SweepSpec, dir: &Path, extra: serde_json::Value) -> Result<()> {
        self.write_csvs(dir)?;
        let reference = paper_slopes(spec.dist.kind, spec.variable);
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("slopes.csv"))?));
        w.write_record(["metric", "slope", "intercept", "r_squared", "paper_reference"])?;
        for (name, fit, paper) in [
            ("prior_w2", self.prior_slope, reference.map(|r| r.0)),
            ("posterior_w1", self.posterior_slope, reference.map(|r| r.1)),
        ] {
            let f = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
            w.write_record([
                name.to_string(),
                f(fit.map(|s| s.slope)),
                f(fit.map(|s| s.intercept)),
                f(fit.map(|s| s.r_squared)),
                f(paper),
            ])?;
        }
        w.flush()?;
        let manifest = serde_json::json!({
            "command": "bench2d sweep",
            "spec": spec,
            "likelihood": {
                "sigma": spec.likelihood().sigma(),
                "data": spec.likelihood().data(),
            },
            "cells": self.rows.len(),
            "errored": self.errored(),
            "bound_fraction": self.bound_fraction(),
            "cell_seconds": self.cell_seconds,
            "software": version_info(),
            "run": extra,
        });
        write_manifest(dir, &manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_variables_parse() {
        assert_eq!("sample-size".parse::<SweepVar>().unwrap(), SweepVar::SampleSize);
        assert_eq!("epochs".parse::<SweepVar>().unwrap(), SweepVar::Epochs);
        assert!("depth".parse::<SweepVar>().is_err());
    }

    #[test]
    fn grid_must_increase() {
        let mut s = SweepSpec::new(SweepVar::SampleSize, BenchmarkKind::Swissroll, vec![512, 512]);
        assert!(s.validate().is_err());
        s.grid = vec![512, 1024];
        assert!(s.validate().is_ok());
        s.repeats = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn reference_slopes_cover_the_three_benchmarks() {
        assert_eq!(paper_slopes(BenchmarkKind::Swissroll, SweepVar::SampleSize), Some((-0.307, -0.357)));
        assert!(paper_slopes(BenchmarkKind::Gaussian, SweepVar::Width).is_none());
    }
}
