//! Acceptance suite. Run with `cargo test --test acceptance`; pass criterion
//! numbers after `--` to run a subset.

use std::fs;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use genprior::bayes::{check_trim_bounds, LikelihoodSpec, TrimMode};
use genprior::darcy::{solve, GridField};
use genprior::experiments::{
    metric_axioms, nonincreasing_within_se, oracle_equivalence, run_darcy, run_empirical_rate, run_sweep,
    train_darcy_prior, DarcyPriorSpec, DarcyRunSpec, RateSpec, SweepSpec, SweepVar,
};
use genprior::mcmc::{ess, pcn_run_potential, PcnConfig};
use genprior::measures::{sample_benchmark, sample_gaussian, BenchmarkDist, BenchmarkKind, PointCloud};
use genprior::ot::{exact_wp, sinkhorn_divergence, OtConfig};
use genprior::transport::{map_l2_distance, train, Mlp, Optimizer, ResidualMapStack, TrainConfig};
use genprior::RngSeed;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

type Outcome = anyhow::Result<(bool, String)>;

fn within(limit: Duration, start: Instant) -> (bool, String) {
    let t = start.elapsed();
    (t < limit, format!("{:.1}s of {}s", t.as_secs_f64(), limit.as_secs()))
}

fn c1() -> Outcome {
    let start = Instant::now();
    let c = oracle_equivalence(200, RngSeed(101))?;
    let (fast, time) = within(Duration::from_secs(10), start);
    Ok((c.passed() && fast, format!("{} pairs, max |exact - brute| {:.2e}, {time}", c.cases, c.worst)))
}

fn c2() -> Outcome {
    let start = Instant::now();
    let checks = metric_axioms(100, RngSeed(202))?;
    let (fast, time) = within(Duration::from_secs(30), start);
    let parts: Vec<String> = checks
        .iter()
        .map(|c| format!("{} {}/{} worst {:.1e}", c.name, c.cases - c.failures, c.cases, c.worst))
        .collect();
    Ok((checks.iter().all(|c| c.passed()) && fast, format!("{}; {time}", parts.join(", "))))
}

fn c3() -> Outcome {
    let start = Instant::now();
    let cfg = OtConfig {
        max_iters: 200_000,
        tolerance: 1e-10,
        ..OtConfig::sinkhorn(0.02)
    };
    let mut worst_value = 0.0f64;
    let mut worst_grad = 0.0f64;
    let h = 1e-4;
    for k in 0..5u64 {
        let a: PointCloud<f64> = sample_gaussian(2, 50, RngSeed(300 + 2 * k))?;
        let b: PointCloud<f64> = sample_gaussian(2, 50, RngSeed(301 + 2 * k))?.map_points(2, |p, o| {
            o.copy_from_slice(&[p[0] + 1.0, 0.5 * p[1]]);
            Ok(())
        })?;
        let (s, grad) = sinkhorn_divergence(&a, &b, &cfg)?;
        let w2 = exact_wp(&a, &b, 2)?.0;
        worst_value = worst_value.max((s - w2 * w2).abs() / (w2 * w2));
        let mut err = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..a.len() {
            for d in 0..2 {
                let shifted = |delta: f64| {
                    let mut c = a.coords().to_vec();
                    c[2 * i + d] += delta;
                    a.with_coords(2, c)
                };
                let fp = sinkhorn_divergence(&shifted(h)?, &b, &cfg)?.0;
                let fm = sinkhorn_divergence(&shifted(-h)?, &b, &cfg)?.0;
                let fd = (fp - fm) / (2.0 * h);
                err = err.max((fd - grad[i][d]).abs());
                scale = scale.max(fd.abs());
            }
        }
        worst_grad = worst_grad.max(err / scale);
    }
    let (fast, time) = within(Duration::from_secs(60), start);
    Ok((
        worst_value < 0.02 && worst_grad < 1e-3 && fast,
        format!("max |S - W2²|/W2² {worst_value:.2e}, max gradient error {worst_grad:.2e} (relative), {time}"),
    ))
}

fn random_map(latent: usize, seed: RngSeed) -> anyhow::Result<ResidualMapStack<f64>> {
    let mut rng = seed.rng();
    let stages = rng.random_range(1..=3);
    let mut list = Vec::new();
    for _ in 0..stages {
        let width = rng.random_range(4..=16);
        let mut s = Mlp::init(&[2, width, width, 2], &mut rng)?;
        let spread = rng.random_range(0.1..0.6);
        for p in s.params_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *p += spread * z;
        }
        list.push(s);
    }
    let lift = (latent != 2).then(|| genprior::transport::Lift {
        matrix: (0..2 * latent).map(|_| StandardNormal.sample(&mut rng)).collect(),
        bias: vec![0.0; 2],
    });
    Ok(ResidualMapStack::new(latent, 2, lift, list)?)
}

fn c4() -> Outcome {
    let eta: PointCloud<f64> = sample_gaussian(2, 512, RngSeed(400))?;
    let mut worst = f64::NEG_INFINITY;
    let mut failures = 0;
    for k in 0..50u64 {
        let a = random_map(2, RngSeed(410).derive(2 * k))?;
        let b = random_map(2, RngSeed(410).derive(2 * k + 1))?;
        let lhs = exact_wp(&a.pushforward_cloud(&eta)?, &b.pushforward_cloud(&eta)?, 2)?.0;
        let rhs = map_l2_distance(&a, &b, &eta)?;
        worst = worst.max(lhs - rhs);
        if lhs > rhs + 1e-7 {
            failures += 1;
        }
    }
    Ok((failures == 0, format!("50 pairs, {failures} violations, max W2 - L2 {worst:.3e}")))
}

fn c5() -> Outcome {
    let n = 1 << 11;
    let affine = |p: &[f64], o: &mut [f64]| {
        o.copy_from_slice(&[1.5 * p[0] + 0.3 * p[1] + 1.0, -0.4 * p[0] + 0.7 * p[1] - 2.0]);
        Ok(())
    };
    let reference = sample_gaussian::<f64>(2, 1 << 13, RngSeed(500))?.map_points(2, affine)?;
    let mut lines = Vec::new();
    let mut ok = true;
    for s in 0..5u64 {
        let seed = RngSeed(510).derive(s);
        let target = sample_gaussian::<f64>(2, n, seed.derive(0))?.map_points(2, affine)?;
        let other = sample_gaussian::<f64>(2, n, seed.derive(1))?.map_points(2, affine)?;
        let latent: PointCloud<f64> = sample_gaussian(2, 8192, seed.derive(2))?;
        let cfg = TrainConfig {
            epochs: 300,
            batch_size: 256,
            learning_rate: 0.02,
            stage_count: 1,
            hidden: Vec::new(),
            epsilon_schedule: vec![0.5, 0.05],
            optimizer: Optimizer::adam(),
            eval_size: 512,
            seed: seed.derive(3),
            ..TrainConfig::default()
        };
        let (map, _) = train(&target, &latent, &cfg)?;
        let eta: PointCloud<f64> = sample_gaussian(2, n, seed.derive(4))?;
        let fitted = exact_wp(&map.pushforward_cloud(&eta)?, &reference, 2)?.0;
        let empirical = exact_wp(&target, &reference, 2)?.0;
        let floor = exact_wp(&target, &other, 2)?.0;
        let bound = 2.0 * empirical + 2.0 * floor;
        ok &= fitted <= bound;
        lines.push(format!("{fitted:.3}≤{bound:.3}"));
    }
    Ok((ok, format!("W2(fit, ref) vs bound per seed: {}", lines.join(" "))))
}

fn c6() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for kind in [
        BenchmarkKind::Gaussian,
        BenchmarkKind::Swissroll,
        BenchmarkKind::Pinwheel,
        BenchmarkKind::Checkerboard,
    ] {
        let spec = RateSpec {
            dist: BenchmarkDist::new(kind),
            grid: vec![1 << 9, 1 << 10, 1 << 11, 1 << 12, 1 << 13],
            repeats: 1,
            n_ref: 1 << 15,
            seed0: RngSeed(600),
        };
        let slope = run_empirical_rate(&spec)?.fit.slope;
        ok &= slope < 0.0 && (-0.6..=-0.15).contains(&slope);
        parts.push(format!("{kind} {slope:.3}"));
    }
    let (fast, time) = within(Duration::from_secs(600), start);
    Ok((ok && fast, format!("slopes {}; {time}", parts.join(", "))))
}

fn c7() -> Outcome {
    let start = Instant::now();
    let mut spec = SweepSpec::new(
        SweepVar::SampleSize,
        BenchmarkKind::Swissroll,
        vec![1 << 9, 1 << 10, 1 << 11, 1 << 12],
    );
    spec.repeats = 3;
    spec.likelihood = Some(LikelihoodSpec::benchmark());
    let out = run_sweep(&spec)?;
    let means: Vec<f64> = out.summary.iter().map(|s| s.posterior_w1_mean).collect();
    let ses: Vec<f64> = out.summary.iter().map(|s| s.posterior_w1_se).collect();
    let monotone = nonincreasing_within_se(&means, &ses);
    let fraction = out.bound_fraction();
    let (fast, time) = within(Duration::from_secs(1800), start);
    let slope = |f: Option<genprior::experiments::SlopeFit>| f.map_or(f64::NAN, |f| f.slope);
    Ok((
        out.errored() == 0 && fraction >= 0.9 && monotone && fast,
        format!(
            "bound in {:.0}% of {} cells, posterior W1 means {:?}, monotone {monotone}, slopes prior {:.3} posterior {:.3} (reference -0.307 / -0.357), {time}",
            100.0 * fraction,
            out.rows.len(),
            means.iter().map(|m| (m * 1e4).round() / 1e4).collect::<Vec<_>>(),
            slope(out.prior_slope),
            slope(out.posterior_slope),
        ),
    ))
}

fn c8() -> Outcome {
    let mut rng = RngSeed(800).rng();
    let mut cases = 0;
    let mut failures = 0;
    for k in 0..100u64 {
        let n = rng.random_range(20..=300);
        let cloud: PointCloud<f64> = if k % 2 == 0 {
            sample_gaussian(2, n, RngSeed(801).derive(k))?
        } else {
            let kind = [BenchmarkKind::Swissroll, BenchmarkKind::Pinwheel, BenchmarkKind::Checkerboard][(k / 2 % 3) as usize];
            sample_benchmark(&BenchmarkDist::new(kind), n, RngSeed(801).derive(k))?
        };
        let mut norms: Vec<f64> = cloud.points().map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
        norms.sort_by(f64::total_cmp);
        let q = rng.random_range(0.25..1.0);
        let r = norms[((q * n as f64) as usize).min(n - 1)] * rng.random_range(1.0..1.2);
        for mode in [TrimMode::Prior, TrimMode::Posterior] {
            cases += 1;
            if !check_trim_bounds(&cloud, r, mode)?.holds {
                failures += 1;
            }
        }
    }
    Ok((failures == 0, format!("{cases} cases over both modes, {failures} violations")))
}

fn c9() -> Outcome {
    let start = Instant::now();
    let dim = 4;
    let cfg = PcnConfig {
        beta0: 0.5,
        n_samples: 100_000,
        burn_fraction: 0.0,
        thin: 1,
        seed: RngSeed(900),
        ..PcnConfig::default()
    };
    let flat = pcn_run_potential::<f64>(dim, |_| Ok(0.0), &cfg)?;
    let mut moments_ok = true;
    let mut worst_z = 0.0f64;
    for j in 0..dim {
        let x: Vec<f64> = flat.latent_samples.iter().map(|z| z[j]).collect();
        let x2: Vec<f64> = x.iter().map(|v| v * v).collect();
        for (series, expected) in [(&x, 0.0), (&x2, 1.0)] {
            let n = series.len() as f64;
            let mean = series.iter().sum::<f64>() / n;
            let var = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let se = (var / ess(series, 1000)?).sqrt();
            let z = (mean - expected).abs() / se;
            worst_z = worst_z.max(z);
            moments_ok &= z <= 3.0;
        }
    }
    let constant = pcn_run_potential::<f64>(dim, |_| Ok(3.7), &PcnConfig { n_samples: 20_000, ..cfg.clone() })?;
    let alpha_one = flat.acceptance_rate == 1.0 && constant.acceptance_rate == 1.0;

    let prior = DarcyPriorSpec {
        n_data: 1024,
        train: TrainConfig {
            epochs: 30,
            stage_count: 1,
            ..genprior::experiments::darcy_prior_config()
        },
        ..DarcyPriorSpec::default()
    };
    let (generator, _) = train_darcy_prior(&prior)?;
    let dir = tempfile::tempdir()?;
    let run = run_darcy(&DarcyRunSpec::new(0.2, 20_000, RngSeed(910)), &generator, dir.path())?;
    let band = (0.15..=0.45).contains(&run.acceptance_rate);
    let (fast, time) = within(Duration::from_secs(300), start);
    Ok((
        moments_ok && alpha_one && band && fast,
        format!(
            "flat-potential moments max |z| {worst_z:.2}, alpha = 1 {alpha_one}, Darcy post-burn-in acceptance {:.3} (beta {:.4}), {time}",
            run.acceptance_rate, run.beta_final
        ),
    ))
}

fn c10() -> Outcome {
    use std::f64::consts::PI;
    let start = Instant::now();
    let errors: Vec<f64> = [8usize, 16, 32]
        .iter()
        .map(|&m| {
            let u = GridField::constant(m, 0.0)?;
            let f = GridField::from_fn(m, |x: f64, y| 2.0 * PI * PI * (PI * x).sin() * (PI * y).sin())?;
            let exact = GridField::from_fn(m, |x: f64, y| (PI * x).sin() * (PI * y).sin())?;
            Ok(solve(&u, &f)?.max_abs_diff(&exact))
        })
        .collect::<genprior::Result<_>>()?;
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let order_ok = ratios.iter().all(|r| (3.5..=4.5).contains(r));
    let mut rng = RngSeed(1000).rng();
    let mut violations = 0;
    for _ in 0..100 {
        let m = rng.random_range(6..=32);
        let u = GridField::new(m, (0..m * m).map(|_| rng.random_range(-2.0..2.0)).collect())?;
        let f = GridField::new(m, (0..m * m).map(|_| rng.random_range(0.01..5.0)).collect())?;
        let p = solve(&u, &f)?;
        if p.values().iter().any(|&v| !(v > 0.0)) {
            violations += 1;
        }
    }
    let (fast, time) = within(Duration::from_secs(60), start);
    Ok((
        order_ok && violations == 0 && fast,
        format!("error ratios {ratios:.3?}, {violations} maximum-principle violations in 100 fields, {time}"),
    ))
}

fn c11() -> Outcome {
    let n = 100_000;
    let mut rng = RngSeed(1100).rng();
    let iid: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let e_iid = ess(&iid, 1000)?;
    let phi: f64 = 0.9;
    let mut ar = Vec::with_capacity(n);
    let mut x: f64 = StandardNormal.sample(&mut rng);
    x /= (1.0 - phi * phi).sqrt();
    for _ in 0..n {
        ar.push(x);
        let e: f64 = StandardNormal.sample(&mut rng);
        x = phi * x + e;
    }
    let e_ar = ess(&ar, 1000)?;
    let analytic = n as f64 * (1.0 - phi) / (1.0 + phi);
    let ok = (e_iid - n as f64).abs() <= 0.2 * n as f64 && (e_ar - analytic).abs() <= 0.25 * analytic;
    Ok((ok, format!("iid ESS {e_iid:.0} of {n}, AR(1) ESS {e_ar:.0} vs {analytic:.0}")))
}

fn c12() -> Outcome {
    let dir = tempfile::tempdir()?;
    let run = |name: &str| -> anyhow::Result<std::path::PathBuf> {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_bench2d"))
            .args(["--threads", "1", "sweep", "--var", "sample-size", "--dist", "swissroll"])
            .args(["--grid", "256,512,1024", "--repeats", "2", "--epochs", "30", "--stages", "2"])
            .args(["--n-gen", "512", "--n-ref", "2048", "--m-out", "256", "--out"])
            .arg(&out)
            .output()?;
        anyhow::ensure!(status.status.success(), "bench2d failed: {}", String::from_utf8_lossy(&status.stderr));
        Ok(out)
    };
    let (a, b) = (run("a")?, run("b")?);
    let mut same = true;
    let mut names = Vec::new();
    for f in ["cells.csv", "summary.csv", "slopes.csv"] {
        let equal = fs::read(a.join(f))? == fs::read(b.join(f))?;
        same &= equal;
        names.push(format!("{f} {}", if equal { "identical" } else { "DIFFERENT" }));
    }
    Ok((same, names.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("OT oracle equivalence", c1),
        ("metric axioms", c2),
        ("Sinkhorn fidelity", c3),
        ("W2 map stability", c4),
        ("oracle inequality", c5),
        ("empirical rate", c6),
        ("stability bound", c7),
        ("trimming bounds", c8),
        ("pCN correctness", c9),
        ("Darcy solver", c10),
        ("diagnostics", c11),
        ("end-to-end determinism", c12),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let id = k + 1;
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let (ok, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e:#}")),
        };
        if !ok {
            failed += 1;
        }
        println!("{} {id:>2} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
