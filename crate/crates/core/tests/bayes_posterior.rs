use genprior::bayes::{
    check_trim_bounds, estimate_cstab, importance_posterior, stability_report, LikelihoodSpec, LinearMap, TrimMode,
};
use genprior::measures::{sample_benchmark, sample_gaussian, BenchmarkDist, BenchmarkKind, PointCloud};
use genprior::ot::exact_wp;
use genprior::RngSeed;

fn swissroll(n: usize, seed: u64) -> PointCloud<f64> {
    sample_benchmark(&BenchmarkDist::new(BenchmarkKind::Swissroll), n, RngSeed(seed)).unwrap()
}

#[test]
fn flat_likelihood_keeps_the_prior_mean() {
    let prior = swissroll(4000, 1);
    let flat = LikelihoodSpec::<f64>::benchmark().with_sigma(1e6).unwrap();
    let (weighted, resampled) = importance_posterior(&prior, &flat, 4000, RngSeed(2)).unwrap();
    assert!(weighted.ess_fraction > 0.999);
    let (pm, qm) = (prior.mean(), resampled.mean());
    for d in 0..2 {
        assert!((pm[d] - qm[d]).abs() < 0.02, "{pm:?} vs {qm:?}");
    }
}

#[test]
fn posterior_approaches_the_prior_as_noise_grows() {
    let prior = swissroll(2000, 3);
    let spec = LikelihoodSpec::<f64>::benchmark();
    let dist: Vec<f64> = [0.3, 1.0, 100.0]
        .iter()
        .map(|&s| {
            let (_, post) = importance_posterior(&prior, &spec.with_sigma(s).unwrap(), 2000, RngSeed(4)).unwrap();
            exact_wp(&post, &prior, 1).unwrap().0
        })
        .collect();
    let (_, a) = importance_posterior(&prior, &spec.with_sigma(100.0).unwrap(), 2000, RngSeed(5)).unwrap();
    let (_, b) = importance_posterior(&prior, &spec.with_sigma(100.0).unwrap(), 2000, RngSeed(6)).unwrap();
    let floor = exact_wp(&a, &b, 1).unwrap().0;
    assert!(dist[0] > dist[1] && dist[1] > dist[2], "{dist:?}");
    assert!(dist[2] < 2.0 * floor + 0.02, "{dist:?} floor {floor}");
}

#[test]
fn stability_bound_holds_for_a_perturbed_prior() {
    let truth = swissroll(1500, 7);
    let approx = truth.map_points(2, |p, o| {
        o.copy_from_slice(&[1.05 * p[0] + 0.05, 0.95 * p[1]]);
        Ok(())
    })
    .unwrap();
    let spec = LikelihoodSpec::<f64>::benchmark();
    let report = stability_report(&truth, &approx, &spec, 1500, RngSeed(8)).unwrap();
    assert!(report.prior_w2 > 0.0);
    assert_eq!(report.bound_holds(), Some(true), "{report:?}");
    let c = estimate_cstab(&truth, &approx, &spec).unwrap();
    assert!(c >= 1.0 && c.is_finite());
}

#[test]
fn nonlinear_data_dimensions_are_checked() {
    let map = LinearMap::new(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
    assert!(LikelihoodSpec::linear(map.clone(), vec![0.0; 2], 0.5).is_err());
    assert!(LikelihoodSpec::linear(map, vec![0.0; 3], 0.5).is_ok());
}

#[test]
fn trimming_bounds_on_light_tailed_clouds() {
    for seed in 0..20 {
        let cloud: PointCloud<f64> = sample_gaussian(2, 200, RngSeed(100 + seed)).unwrap();
        for r in [1.0, 1.5, 2.5] {
            for mode in [TrimMode::Prior, TrimMode::Posterior] {
                let check = check_trim_bounds(&cloud, r, mode).unwrap();
                assert!(check.holds, "{check:?}");
            }
        }
    }
}

#[test]
fn one_far_atom_breaks_the_first_moment_trimming_bound() {
    let mut points = vec![vec![0.0, 0.0]; 99];
    points.push(vec![100.0, 0.0]);
    let cloud = PointCloud::uniform(points).unwrap();
    let check = check_trim_bounds(&cloud, 90.0, TrimMode::Posterior).unwrap();
    assert!(!check.holds, "{check:?}");
}
