use genprior::experiments::{fit_slope, run_empirical_rate, RateSpec};
use genprior::measures::{BenchmarkDist, BenchmarkKind};
use genprior::RngSeed;

fn slope(n_ref: usize) -> f64 {
    let spec = RateSpec {
        dist: BenchmarkDist::new(BenchmarkKind::Gaussian),
        grid: vec![128, 256, 512, 1024],
        repeats: 2,
        n_ref,
        seed0: RngSeed(21),
    };
    run_empirical_rate(&spec).unwrap().fit.slope
}

#[test]
fn doubling_the_reference_barely_moves_the_slope() {
    let (a, b) = (slope(4096), slope(8192));
    assert!(a < 0.0 && b < 0.0, "{a} {b}");
    assert!((a - b).abs() < 0.1, "{a} vs {b}");
}

#[test]
fn rate_grid_is_validated() {
    let spec = RateSpec {
        dist: BenchmarkDist::new(BenchmarkKind::Pinwheel),
        grid: vec![256, 128, 512],
        repeats: 1,
        n_ref: 1024,
        seed0: RngSeed(1),
    };
    assert!(run_empirical_rate(&spec).is_err());
}

#[test]
fn slope_of_a_square_root_law() {
    let xs = [100.0, 400.0, 1600.0];
    let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 / x.sqrt()).collect();
    assert!((fit_slope(&xs, &ys).unwrap().slope + 0.5).abs() < 1e-12);
}
