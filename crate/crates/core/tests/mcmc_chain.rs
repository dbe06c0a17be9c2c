use genprior::mcmc::{acf, ess, pcn_run_potential, PcnConfig};
use genprior::RngSeed;

#[test]
fn gaussian_potential_gives_the_conjugate_posterior() {
    let (y, s2) = (1.5, 0.25);
    let cfg = PcnConfig {
        n_samples: 100_000,
        thin: 1,
        seed: RngSeed(1),
        ..PcnConfig::default()
    };
    let chain = pcn_run_potential::<f64>(1, |z| Ok((z[0] - y).powi(2) / (2.0 * s2)), &cfg).unwrap();
    let x: Vec<f64> = chain.latent_samples.iter().map(|z| z[0]).collect();
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / ess(&x, 1000).unwrap()).sqrt();
    let (m_true, v_true) = (y / (1.0 + s2), s2 / (1.0 + s2));
    assert!((mean - m_true).abs() < 4.0 * se, "{mean} vs {m_true} (se {se})");
    assert!((var - v_true).abs() < 0.05 * v_true, "{var} vs {v_true}");
    assert!((0.2..=0.45).contains(&chain.acceptance_rate), "{}", chain.acceptance_rate);
}

#[test]
fn adaptation_moves_towards_the_band_and_stops_after_burn_in() {
    let cfg = PcnConfig {
        n_samples: 20_000,
        beta0: 0.1,
        seed: RngSeed(2),
        ..PcnConfig::default()
    };
    let chain = pcn_run_potential::<f64>(3, |z| Ok(50.0 * z.iter().map(|v| v * v).sum::<f64>()), &cfg).unwrap();
    assert!(!chain.adaptation.is_empty());
    for a in &chain.adaptation {
        assert!(a.step <= cfg.burn_in());
        if a.acceptance < cfg.target_band.0 {
            assert!(a.beta_after > a.beta_before);
        } else {
            assert!(a.beta_after < a.beta_before);
        }
    }
    assert_eq!(chain.latent_samples.len(), cfg.retained());
}

#[test]
fn failing_potential_reports_its_step() {
    let mut calls = 0;
    let cfg = PcnConfig {
        n_samples: 100,
        ..PcnConfig::default()
    };
    let err = pcn_run_potential::<f64>(
        1,
        |_| {
            calls += 1;
            if calls > 10 {
                Err(genprior::Error::Numerical("boom".into()))
            } else {
                Ok(0.0)
            }
        },
        &cfg,
    )
    .unwrap_err();
    assert!(err.to_string().contains("step 10"), "{err}");
}

#[test]
fn autocorrelation_starts_at_one() {
    let x: Vec<f64> = (0..500).map(|k| ((k * 37) % 101) as f64).collect();
    let r = acf(&x, 20).unwrap();
    assert!((r[0] - 1.0).abs() < 1e-12);
    assert!(r.iter().all(|v| v.abs() <= 1.0 + 1e-12));
}
