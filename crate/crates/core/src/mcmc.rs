//! Latent-space preconditioned Crank–Nicolson sampling and chain diagnostics.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::bayes::LikelihoodSpec;
use crate::error::{config, domain, Error, Result};
use crate::rng::RngSeed;
use crate::scalar::Scalar;
use crate::transport::ResidualMapStack;

/// Bounds `β` must stay strictly inside during adaptation.
pub const BETA_MIN: f64 = 1e-4;
pub const BETA_MAX: f64 = 1.0 - 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcnConfig {
    /// Initial proposal parameter; `β` near 1 means small moves.
    pub beta0: f64,
    /// Total chain length including burn-in.
    pub n_samples: usize,
    pub burn_fraction: f64,
    pub adapt_window: usize,
    /// Acceptance band `(low, high)` targeted during burn-in.
    pub target_band: (f64, f64),
    /// Keep every `thin`-th post-burn-in state.
    pub thin: usize,
    pub seed: RngSeed,
}

impl Default for PcnConfig {
    fn default() -> Self {
        PcnConfig {
            beta0: 0.5,
            n_samples: 200_000,
            burn_fraction: 0.2,
            adapt_window: 100,
            target_band: (0.2, 0.4),
            thin: 10,
            seed: RngSeed(0),
        }
    }
}

impl PcnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta0 > 0.0 && self.beta0 < 1.0) {
            return Err(config(format!("beta0 = {} is not in (0, 1)", self.beta0)));
        }
        if !(0.0..=0.5).contains(&self.burn_fraction) {
            return Err(config("burn fraction must lie in [0, 0.5]"));
        }
        if self.adapt_window == 0 || self.thin == 0 {
            return Err(config("adaptation window and thinning must be positive"));
        }
        let (lo, hi) = self.target_band;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(config("acceptance band must satisfy 0 < low < high < 1"));
        }
        if self.burn_in() >= self.n_samples {
            return Err(config("no steps left after burn-in"));
        }
        Ok(())
    }

    pub fn burn_in(&self) -> usize {
        (self.burn_fraction * self.n_samples as f64).floor() as usize
    }

    /// Number of states kept after burn-in and thinning.
    pub fn retained(&self) -> usize {
        (self.n_samples - self.burn_in()).div_ceil(self.thin)
    }
}

/// One burn-in adaptation of `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdaptStep {
    pub step: usize,
    pub acceptance: f64,
    pub beta_before: f64,
    pub beta_after: f64,
}

#[derive(Debug, Clone)]
pub struct ChainResult<T> {
    /// Post-burn-in latent states, thinned.
    pub latent_samples: Vec<Vec<T>>,
    /// Acceptance rate over the post-burn-in steps.
    pub acceptance_rate: f64,
    pub beta_final: f64,
    /// Generator images of `latent_samples`; empty for a bare potential.
    pub pushed_samples: Vec<Vec<T>>,
    pub adaptation: Vec<AdaptStep>,
    /// Acceptance rate of every window of `adapt_window` steps, whole chain.
    pub acceptance_trace: Vec<f64>,
}

/// pCN on `N(0, I_dim)` reweighted by `exp(−Φ)`, with `Φ` given directly.
pub fn pcn_run_potential<T: Scalar>(
    dim: usize,
    mut potential: impl FnMut(&[T]) -> Result<T>,
    cfg: &PcnConfig,
) -> Result<ChainResult<T>> {
    cfg.validate()?;
    if dim == 0 {
        return Err(domain("chain dimension must be positive"));
    }
    let mut rng = cfg.seed.rng();
    let gauss = |rng: &mut crate::rng::Rng| -> T { T::lit(StandardNormal.sample(rng)) };
    let mut z: Vec<T> = (0..dim).map(|_| gauss(&mut rng)).collect();
    let chain_err = |step: usize| move |e: Error| Error::Chain { step, source: Box::new(e) };
    let mut phi = potential(&z).map_err(chain_err(0))?;
    let burn = cfg.burn_in();
    let mut beta = cfg.beta0;
    let (lo, hi) = cfg.target_band;
    let mut window_acc = 0usize;
    let mut post_acc = 0usize;
    let mut out = ChainResult {
        latent_samples: Vec::with_capacity(cfg.retained()),
        acceptance_rate: 0.0,
        beta_final: beta,
        pushed_samples: Vec::new(),
        adaptation: Vec::new(),
        acceptance_trace: Vec::new(),
    };
    let mut proposal = vec![T::zero(); dim];
    for step in 0..cfg.n_samples {
        let b = T::lit(beta);
        let s = T::lit((1.0 - beta * beta).sqrt());
        for (p, &zi) in proposal.iter_mut().zip(&z) {
            *p = b * zi + s * gauss(&mut rng);
        }
        let phi_new = potential(&proposal).map_err(chain_err(step + 1))?;
        let alpha = (phi - phi_new).exp().min(T::one());
        let u: f64 = rng.random();
        if T::lit(u) < alpha {
            std::mem::swap(&mut z, &mut proposal);
            phi = phi_new;
            window_acc += 1;
            if step >= burn {
                post_acc += 1;
            }
        }
        if step >= burn && (step - burn) % cfg.thin == 0 {
            out.latent_samples.push(z.clone());
        }
        if (step + 1) % cfg.adapt_window == 0 {
            let rate = window_acc as f64 / cfg.adapt_window as f64;
            out.acceptance_trace.push(rate);
            window_acc = 0;
            if step < burn {
                let before = beta;
                if rate > hi {
                    beta /= 2.0;
                } else if rate < lo {
                    beta += (1.0 - beta) / 2.0;
                }
                if beta != before {
                    if !(beta > BETA_MIN && beta < BETA_MAX) {
                        return Err(Error::Adaptation { beta });
                    }
                    out.adaptation.push(AdaptStep {
                        step: step + 1,
                        acceptance: rate,
                        beta_before: before,
                        beta_after: beta,
                    });
                }
            }
        }
    }
    out.acceptance_rate = post_acc as f64 / (cfg.n_samples - burn) as f64;
    out.beta_final = beta;
    Ok(out)
}

/// pCN on the latent space of `generator` with `Φ(T(z); y)`.
pub fn pcn_run<T: Scalar>(
    generator: &ResidualMapStack<T>,
    spec: &LikelihoodSpec<T>,
    cfg: &PcnConfig,
) -> Result<ChainResult<T>> {
    if generator.output_dim() != spec.input_dim() {
        return Err(domain(format!(
            "generator output dimension {} does not match the likelihood input {}",
            generator.output_dim(),
            spec.input_dim()
        )));
    }
    let mut res = pcn_run_potential(
        generator.latent_dim(),
        |z| spec.potential(&generator.forward(z)?),
        cfg,
    )?;
    res.pushed_samples = res
        .latent_samples
        .iter()
        .map(|z| generator.forward(z))
        .collect::<Result<_>>()?;
    Ok(res)
}

/// Biased sample autocorrelation `ρ(0..=max_lag)`.
pub fn acf<T: Scalar>(series: &[T], max_lag: usize) -> Result<Vec<T>> {
    let n = series.len();
    if max_lag == 0 || n <= max_lag {
        return Err(domain(format!("series of length {n} is too short for lag {max_lag}")));
    }
    let mean = series.iter().copied().sum::<T>() / T::count(n);
    let c: Vec<T> = series.iter().map(|&x| x - mean).collect();
    let c0 = c.iter().map(|&x| x * x).sum::<T>();
    if !(c0 > T::zero()) {
        return Err(domain("series has zero variance"));
    }
    Ok((0..=max_lag)
        .map(|k| {
            if k == 0 {
                T::one()
            } else {
                c[..n - k].iter().zip(&c[k..]).map(|(&a, &b)| a * b).sum::<T>() / c0
            }
        })
        .collect())
}

/// `n / τ` with `τ = −1 + 2 Σ Γ_k`, `Γ_k = ρ(2k) + ρ(2k+1)` summed while positive.
pub fn ess<T: Scalar>(series: &[T], max_lag: usize) -> Result<T> {
    let rho = acf(series, max_lag)?;
    let mut tau = -T::one();
    for pair in rho.chunks_exact(2) {
        let g = pair[0] + pair[1];
        if !(g > T::zero()) {
            break;
        }
        tau += T::lit(2.0) * g;
    }
    let n = T::count(series.len());
    Ok((n / tau.max(T::one())).min(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngSeed;

    fn ar1(n: usize, a: f64, seed: u64) -> Vec<f64> {
        let mut rng = RngSeed(seed).rng();
        let mut x = 0.0;
        (0..n)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                x = a * x + e;
                x
            })
            .collect()
    }

    #[test]
    fn acf_of_iid_and_ar1() {
        let iid = ar1(100_000, 0.0, 1);
        let r = acf(&iid, 20).unwrap();
        assert_eq!(r[0], 1.0);
        assert!(r[1..].iter().all(|v| v.abs() < 0.02));
        let r = acf(&ar1(100_000, 0.9, 2), 5).unwrap();
        assert!((r[1] - 0.9).abs() < 0.02, "{}", r[1]);
    }

    #[test]
    fn acf_rejects_bad_input() {
        assert!(acf(&[1.0; 10], 3).is_err());
        assert!(acf(&[1.0, 2.0], 2).is_err());
        assert!(acf(&[1.0, 2.0, 3.0], 0).is_err());
    }

    #[test]
    fn ess_oracles() {
        let n = 100_000;
        let iid = ar1(n, 0.0, 3);
        let e = ess(&iid, 200).unwrap();
        assert!((e - n as f64).abs() <= 0.2 * n as f64, "{e}");
        let pairs: Vec<f64> = iid[..n / 2].iter().flat_map(|&v| [v, v]).collect();
        let e = ess(&pairs, 200).unwrap();
        assert!((e - n as f64 / 2.0).abs() <= 0.1 * n as f64 / 2.0, "{e}");
        let e = ess(&ar1(n, 0.9, 4), 500).unwrap();
        let expected = n as f64 * 0.1 / 1.9;
        assert!((e - expected).abs() <= 0.25 * expected, "{e} vs {expected}");
    }

    #[test]
    fn flat_potential_accepts_everything() {
        let cfg = PcnConfig {
            n_samples: 2000,
            thin: 1,
            ..PcnConfig::default()
        };
        let r = pcn_run_potential::<f64>(3, |_| Ok(1.5), &cfg).unwrap();
        assert_eq!(r.acceptance_rate, 1.0);
        assert_eq!(r.latent_samples.len(), cfg.retained());
    }

    #[test]
    fn adaptation_moves_toward_the_band() {
        let cfg = PcnConfig {
            beta0: 0.3,
            n_samples: 20_000,
            thin: 5,
            seed: RngSeed(9),
            ..PcnConfig::default()
        };
        let r = pcn_run_potential::<f64>(4, |z| Ok(z.iter().map(|v| 50.0 * (v - 0.5).powi(2)).sum()), &cfg).unwrap();
        assert!(!r.adaptation.is_empty());
        for a in &r.adaptation {
            if a.acceptance > 0.4 {
                assert!(a.beta_after < a.beta_before);
            } else {
                assert!(a.beta_after > a.beta_before);
            }
        }
        assert!((0.1..=0.5).contains(&r.acceptance_rate), "{}", r.acceptance_rate);
    }

    #[test]
    fn chains_are_reproducible_and_errors_carry_the_step() {
        let cfg = PcnConfig {
            n_samples: 500,
            thin: 1,
            ..PcnConfig::default()
        };
        let f = |z: &[f64]| Ok(z[0] * z[0]);
        let a = pcn_run_potential(2, f, &cfg).unwrap();
        let b = pcn_run_potential(2, f, &cfg).unwrap();
        assert_eq!(a.latent_samples, b.latent_samples);
        let mut calls = 0;
        let err = pcn_run_potential::<f64>(
            2,
            |_| {
                calls += 1;
                if calls > 10 {
                    Err(Error::Numerical("boom".into()))
                } else {
                    Ok(0.0)
                }
            },
            &cfg,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Chain { step: 10, .. }), "{err}");
    }

    #[test]
    fn config_validation() {
        let bad = PcnConfig {
            beta0: 1.0,
            ..PcnConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = PcnConfig {
            burn_fraction: 0.7,
            ..PcnConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
