use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::{version_info, write_manifest};
use crate::bayes::LikelihoodSpec;
use crate::darcy::{forward_map, noise_for_ratio, observe, DarcyConfig, GridField};
use crate::error::{config, domain, Result};
use crate::mcmc::{acf, ess, pcn_run, ChainResult, PcnConfig};
use crate::measures::{sample_gaussian, PointCloud};
use crate::rng::{Rng, RngSeed};
use crate::transport::{train, Optimizer, ResidualMapStack, TrainConfig, TrainReport};

/// Bump centers are drawn from `(BLOB_CENTER_MARGIN, 1 − BLOB_CENTER_MARGIN)²`.
pub const BLOB_CENTER_MARGIN: f64 = 0.15;
/// Bump widths are uniform on this interval.
pub const BLOB_WIDTH: (f64, f64) = (0.06, 0.15);
/// Bump amplitudes are uniform on this interval.
pub const BLOB_AMPLITUDE: (f64, f64) = (1.0, 2.0);
/// Number of independent posterior draws written to disk.
const SNAPSHOTS: usize = 10;

/// Log-permeability made of 1 to 3 Gaussian bumps, sampled at cell centers.
pub fn blob_field(m: usize, rng: &mut Rng) -> Vec<f64> {
    let count = rng.random_range(1..=3);
    let span = 1.0 - 2.0 * BLOB_CENTER_MARGIN;
    let bumps: Vec<(f64, f64, f64, f64)> = (0..count)
        .map(|_| {
            let cx = BLOB_CENTER_MARGIN + span * rng.random::<f64>();
            let cy = BLOB_CENTER_MARGIN + span * rng.random::<f64>();
            let s = rng.random_range(BLOB_WIDTH.0..BLOB_WIDTH.1);
            let a = rng.random_range(BLOB_AMPLITUDE.0..BLOB_AMPLITUDE.1);
            (cx, cy, s, a)
        })
        .collect();
    let h = 1.0 / m as f64;
    (0..m * m)
        .map(|k| {
            let x = ((k % m) as f64 + 0.5) * h;
            let y = ((k / m) as f64 + 0.5) * h;
            bumps
                .iter()
                .map(|&(cx, cy, s, a)| a * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * s * s)).exp())
                .sum()
        })
        .collect()
}

/// `n` blob fields as an equally weighted cloud in `R^{m²}`.
pub fn blob_dataset(n: usize, m: usize, seed: RngSeed) -> Result<PointCloud<f64>> {
    let mut rng = seed.rng();
    let coords: Vec<f64> = (0..n).flat_map(|_| blob_field(m, &mut rng)).collect();
    PointCloud::uniform_flat(m * m, coords)
}

/// Training configuration used for the field generator.
pub fn darcy_prior_config() -> TrainConfig {
    TrainConfig {
        epochs: 300,
        batch_size: 256,
        learning_rate: 1e-3,
        stage_count: 3,
        hidden: vec![128, 128],
        epsilon_schedule: vec![20.0, 1.0],
        optimizer: Optimizer::adam(),
        eval_size: 512,
        seed: RngSeed(17),
        ..TrainConfig::default()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DarcyPriorSpec {
    pub n_data: usize,
    pub field_m: usize,
    pub latent_dim: usize,
    pub n_latent: usize,
    pub train: TrainConfig,
    pub data_seed: RngSeed,
}

impl Default for DarcyPriorSpec {
    fn default() -> Self {
        DarcyPriorSpec {
            n_data: 4096,
            field_m: 16,
            latent_dim: 16,
            n_latent: 4096,
            train: darcy_prior_config(),
            data_seed: RngSeed(7),
        }
    }
}

/// Fits a latent-to-field generator on the blob dataset.
pub fn train_darcy_prior(spec: &DarcyPriorSpec) -> Result<(ResidualMapStack<f64>, TrainReport<f64>)> {
    if spec.latent_dim == 0 || spec.latent_dim > spec.field_m * spec.field_m {
        return Err(config("latent dimension must lie in [1, m²]"));
    }
    let data = blob_dataset(spec.n_data, spec.field_m, spec.data_seed)?;
    let latent: PointCloud<f64> = sample_gaussian(spec.latent_dim, spec.n_latent, spec.data_seed.derive(1))?;
    train(&data, &latent, &spec.train)
}

#[derive(Debug, Clone, Serialize)]
pub struct DarcyRunSpec {
    /// `σ / std(noiseless observations)`.
    pub noise_ratio: f64,
    pub chain: PcnConfig,
    #[serde(skip)]
    pub darcy: DarcyConfig<f64>,
    /// Seed of the ground-truth field and the observation noise.
    pub seed: RngSeed,
}

impl DarcyRunSpec {
    pub fn new(noise_ratio: f64, n_mcmc: usize, seed: RngSeed) -> Self {
        DarcyRunSpec {
            noise_ratio,
            chain: PcnConfig {
                n_samples: n_mcmc,
                seed: seed.derive(2),
                ..PcnConfig::default()
            },
            darcy: DarcyConfig::default(),
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DarcyRunSummary {
    pub sigma: f64,
    pub acceptance_rate: f64,
    pub beta_final: f64,
    pub retained: usize,
    /// Spatial mean of the pointwise posterior standard deviation.
    pub mean_std: f64,
    /// `|posterior mean − truth| / |truth|` in the Euclidean norm over cells.
    pub relative_error: f64,
    pub ess_min: f64,
    pub ess_mean: f64,
    pub posterior_mean: Vec<f64>,
    pub posterior_std: Vec<f64>,
}

fn write_field(dir: &Path, name: &str, f: &GridField<f64>, lo: f64, hi: f64) -> Result<()> {
    f.write_csv(BufWriter::new(File::create(dir.join(format!("{name}.csv")))?))?;
    f.write_pgm(BufWriter::new(File::create(dir.join(format!("{name}.pgm")))?), lo, hi)
}

fn moments(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = samples.len() as f64;
    let d = samples.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; d];
    for s in samples {
        mean.iter_mut().zip(s).for_each(|(m, v)| *m += v / n);
    }
    let mut var = vec![0.0; d];
    for s in samples {
        var.iter_mut().zip(s).zip(&mean).for_each(|((a, v), m)| *a += (v - m) * (v - m) / n);
    }
    (mean, var.into_iter().map(f64::sqrt).collect())
}

/// Latent pCN inference of a blob permeability from noisy pressure data.
///
/// On failure a manifest carrying the error is still written.
pub fn run_darcy(spec: &DarcyRunSpec, generator: &ResidualMapStack<f64>, out: &Path) -> Result<DarcyRunSummary> {
    fs::create_dir_all(out)?;
    let start = Instant::now();
    let result = darcy_pipeline(spec, generator, out);
    let mut manifest = serde_json::json!({
        "command": "darcy run",
        "spec": spec,
        "darcy": {
            "field_m": spec.darcy.field_m,
            "refine": spec.darcy.refine,
            "source": spec.darcy.source,
            "observations": spec.darcy.points.len(),
        },
        "generator": {
            "latent_dim": generator.latent_dim(),
            "output_dim": generator.output_dim(),
            "stages": generator.stages().len(),
        },
        "software": version_info(),
        "seconds": start.elapsed().as_secs_f64(),
    });
    match &result {
        Ok((summary, chain)) => {
            manifest["status"] = "ok".into();
            manifest["summary"] = serde_json::json!({
                "sigma": summary.sigma,
                "acceptance_rate": summary.acceptance_rate,
                "beta_final": summary.beta_final,
                "retained": summary.retained,
                "mean_std": summary.mean_std,
                "relative_error": summary.relative_error,
                "ess_min": summary.ess_min,
                "ess_mean": summary.ess_mean,
            });
            manifest["adaptation"] = serde_json::to_value(&chain.adaptation)?;
            manifest["acceptance_trace"] = serde_json::to_value(&chain.acceptance_trace)?;
        }
        Err(e) => {
            manifest["status"] = "error".into();
            manifest["error"] = e.to_string().into();
        }
    }
    write_manifest(out, &manifest)?;
    result.map(|r| r.0)
}

fn darcy_pipeline(
    spec: &DarcyRunSpec,
    generator: &ResidualMapStack<f64>,
    out: &Path,
) -> Result<(DarcyRunSummary, ChainResult<f64>)> {
    if !(spec.noise_ratio > 0.0) {
        return Err(domain("noise ratio must be positive"));
    }
    let m = spec.darcy.field_m;
    if generator.output_dim() != m * m {
        return Err(domain(format!(
            "generator produces {} values for a {m}×{m} parameter grid",
            generator.output_dim()
        )));
    }
    let truth_values = blob_field(m, &mut spec.seed.derive(0).rng());
    let truth = GridField::new(m, truth_values.clone())?;
    let clean = forward_map(&truth_values, &spec.darcy)?;
    let sigma = noise_for_ratio(&clean, spec.noise_ratio);
    let pressure = spec.darcy.pressure(&truth_values)?;
    let obs = observe(&pressure, &spec.darcy.points, sigma, spec.seed.derive(1))?;
    let lik = LikelihoodSpec::new(Arc::new(spec.darcy.clone()), obs.values.clone(), sigma)?;
    let chain = pcn_run(generator, &lik, &spec.chain)?;

    let (mean, std) = moments(&chain.pushed_samples);
    let mean_field = GridField::new(m, mean.clone())?;
    let std_field = GridField::new(m, std.clone())?;
    let lo = truth_values.iter().chain(&mean).copied().fold(f64::INFINITY, f64::min);
    let hi = truth_values.iter().chain(&mean).copied().fold(f64::NEG_INFINITY, f64::max);
    write_field(out, "truth", &truth, lo, hi)?;
    write_field(out, "posterior_mean", &mean_field, lo, hi)?;
    let smax = std.iter().copied().fold(0.0, f64::max);
    write_field(out, "posterior_std", &std_field, 0.0, smax)?;
    obs.write_csv(BufWriter::new(File::create(out.join("observations.csv"))?))?;
    let samples_dir = out.join("samples");
    fs::create_dir_all(&samples_dir)?;
    let n = chain.pushed_samples.len();
    for k in 0..SNAPSHOTS.min(n) {
        let idx = k * n / SNAPSHOTS.min(n);
        let f = GridField::new(m, chain.pushed_samples[idx].clone())?;
        write_field(&samples_dir, &format!("sample_{k:02}"), &f, lo, hi)?;
    }

    let d = generator.latent_dim();
    let max_lag = 100.min(n.saturating_sub(1)).max(1);
    let series: Vec<Vec<f64>> = (0..d).map(|j| chain.latent_samples.iter().map(|z| z[j]).collect()).collect();
    let acfs: Vec<Vec<f64>> = series.iter().map(|s| acf(s, max_lag)).collect::<Result<_>>()?;
    let esss: Vec<f64> = series.iter().map(|s| ess(s, max_lag)).collect::<Result<_>>()?;
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(out.join("acf.csv"))?));
    let mut header = vec!["lag".to_string()];
    header.extend((0..d).map(|j| format!("z{j}")));
    w.write_record(&header)?;
    for lag in 0..=max_lag {
        let mut rec = vec![lag.to_string()];
        rec.extend(acfs.iter().map(|a| a[lag].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(out.join("ess.csv"))?));
    w.write_record(["coordinate", "ess", "samples"])?;
    for (j, e) in esss.iter().enumerate() {
        w.write_record([format!("z{j}"), e.to_string(), n.to_string()])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(out.join("acceptance.csv"))?));
    w.write_record(["window_end", "acceptance"])?;
    for (k, a) in chain.acceptance_trace.iter().enumerate() {
        w.write_record([((k + 1) * spec.chain.adapt_window).to_string(), a.to_string()])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(out.join("adaptation.csv"))?));
    for a in &chain.adaptation {
        w.serialize(a)?;
    }
    w.flush()?;

    let err: f64 = mean.iter().zip(&truth_values).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let tn: f64 = truth_values.iter().map(|v| v * v).sum::<f64>().sqrt();
    let summary = DarcyRunSummary {
        sigma,
        acceptance_rate: chain.acceptance_rate,
        beta_final: chain.beta_final,
        retained: n,
        mean_std: std.iter().sum::<f64>() / std.len() as f64,
        relative_error: err / tn,
        ess_min: esss.iter().copied().fold(f64::INFINITY, f64::min),
        ess_mean: esss.iter().sum::<f64>() / esss.len() as f64,
        posterior_mean: mean,
        posterior_std: std,
    };
    Ok((summary, chain))
}

/// Pushes `n` standard normal latents through `generator` and averages.
pub fn prior_mean_field(generator: &ResidualMapStack<f64>, n: usize, seed: RngSeed) -> Result<Vec<f64>> {
    let mut rng = seed.rng();
    let d = generator.latent_dim();
    let samples: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            generator.forward(&z)
        })
        .collect::<Result<_>>()?;
    Ok(moments(&samples).0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_fields_are_nonnegative_and_bounded() {
        let data = blob_dataset(50, 8, RngSeed(1)).unwrap();
        assert_eq!(data.dim(), 64);
        assert!(data.coords().iter().all(|&v| (0.0..=3.0 * BLOB_AMPLITUDE.1).contains(&v)));
        assert_eq!(data, blob_dataset(50, 8, RngSeed(1)).unwrap());
    }

    #[test]
    fn moments_of_two_samples() {
        let (m, s) = moments(&[vec![0.0, 2.0], vec![2.0, 2.0]]);
        assert_eq!(m, vec![1.0, 2.0]);
        assert_eq!(s, vec![1.0, 0.0]);
    }
}
