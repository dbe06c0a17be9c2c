use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::{fit_slope, mean_se, version_info, write_manifest, SlopeFit};
use crate::error::{config, Result};
use crate::measures::{sample_benchmark, BenchmarkDist, PointCloud};
use crate::ot::exact_wp;
use crate::rng::RngSeed;

#[derive(Debug, Clone, Serialize)]
pub struct RateSpec {
    pub dist: BenchmarkDist,
    pub grid: Vec<usize>,
    pub repeats: usize,
    pub n_ref: usize,
    pub seed0: RngSeed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub dist: String,
    pub n: usize,
    pub repeat: usize,
    pub seed: u64,
    pub w2: f64,
}

#[derive(Debug, Clone)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    /// `(N, mean, standard error)` per grid value.
    pub means: Vec<(usize, f64, f64)>,
    pub fit: SlopeFit,
}

/// `E W_2(μ^N, μ_ref)` over the grid and its log-log slope.
///
/// The reference is one draw of size `n_ref`, shared by all cells; every
/// `μ^N` is an independent draw.
pub fn run_empirical_rate(spec: &RateSpec) -> Result<RateReport> {
    if spec.grid.len() < 3 || spec.grid.windows(2).any(|w| w[0] >= w[1]) || spec.grid[0] == 0 {
        return Err(config("rate grid needs at least 3 strictly increasing positive sizes"));
    }
    if spec.repeats == 0 {
        return Err(config("repeats must be at least 1"));
    }
    let reference: PointCloud<f64> = sample_benchmark(&spec.dist, spec.n_ref, spec.seed0.derive(u64::MAX))?;
    let cells: Vec<(usize, usize)> = spec
        .grid
        .iter()
        .flat_map(|&n| (0..spec.repeats).map(move |r| (n, r)))
        .collect();
    let rows: Vec<RateRow> = cells
        .par_iter()
        .enumerate()
        .map(|(k, &(n, repeat))| {
            let seed = spec.seed0.derive(k as u64);
            let sample: PointCloud<f64> = sample_benchmark(&spec.dist, n, seed)?;
            let (w2, _) = exact_wp(&sample, &reference, 2)?;
            Ok(RateRow {
                dist: spec.dist.kind.name().to_string(),
                n,
                repeat,
                seed: seed.0,
                w2,
            })
        })
        .collect::<Result<_>>()?;
    let means: Vec<(usize, f64, f64)> = spec
        .grid
        .iter()
        .map(|&n| {
            let v: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.w2).collect();
            let (m, se) = mean_se(&v);
            (n, m, se)
        })
        .collect();
    let xs: Vec<f64> = means.iter().map(|m| m.0 as f64).collect();
    let ys: Vec<f64> = means.iter().map(|m| m.1).collect();
    let fit = fit_slope(&xs, &ys)?;
    Ok(RateReport { rows, means, fit })
}

impl RateReport {
    /// `rate.csv`, `rate_summary.csv` and `manifest.json`.
    pub fn write_all(&self, spec: &RateSpec, dir: &Path, extra: serde_json::Value) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("rate.csv"))?));
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("rate_summary.csv"))?));
        w.write_record(["n", "w2_mean", "w2_se"])?;
        for (n, m, se) in &self.means {
            w.write_record([n.to_string(), m.to_string(), se.to_string()])?;
        }
        w.flush()?;
        let manifest = serde_json::json!({
            "command": "bench2d rate",
            "spec": spec,
            "slope": self.fit,
            "software": version_info(),
            "run": extra,
        });
        write_manifest(dir, &manifest)
    }
}
