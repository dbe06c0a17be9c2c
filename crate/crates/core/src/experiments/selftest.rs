use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::Result;
use crate::measures::PointCloud;
use crate::ot::{brute_force_wp, exact_wp};
use crate::rng::{Rng, RngSeed};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestCheck {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// Largest observed violation (or discrepancy) over all cases.
    pub worst: f64,
    pub tolerance: f64,
}

impl SelftestCheck {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SelftestReport {
    pub checks: Vec<SelftestCheck>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(SelftestCheck::passed)
    }
}

fn gaussian_points(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..2 * n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Uniform cloud of `n` standard normal points in the plane.
pub fn random_uniform_cloud(n: usize, rng: &mut Rng) -> Result<PointCloud<f64>> {
    PointCloud::uniform_flat(2, gaussian_points(n, rng))
}

/// Cloud of 1 to `max_n` planar points with random positive weights.
pub fn random_weighted_cloud(max_n: usize, rng: &mut Rng) -> Result<PointCloud<f64>> {
    let n = rng.random_range(1..=max_n);
    let coords = gaussian_points(n, rng);
    let weights = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    PointCloud::from_flat(2, coords, weights)
}

struct Tally {
    check: SelftestCheck,
}

impl Tally {
    fn new(name: &str, tolerance: f64) -> Self {
        Tally {
            check: SelftestCheck {
                name: name.to_string(),
                cases: 0,
                failures: 0,
                worst: 0.0,
                tolerance,
            },
        }
    }

    /// Records a case whose violation is `excess` (≤ 0 when satisfied with room).
    fn record(&mut self, excess: f64) {
        let c = &mut self.check;
        c.cases += 1;
        c.worst = c.worst.max(excess);
        if !(excess <= c.tolerance) {
            c.failures += 1;
        }
    }
}

/// Exact solver against brute-force enumeration on `cases` uniform pairs with
/// `n ≤ 6`, both ground powers.
pub fn oracle_equivalence(cases: usize, seed: RngSeed) -> Result<SelftestCheck> {
    let mut rng = seed.rng();
    let mut t = Tally::new("oracle_equivalence", 1e-8);
    for k in 0..cases {
        let n = rng.random_range(1..=6);
        let a = random_uniform_cloud(n, &mut rng)?;
        let b = random_uniform_cloud(n, &mut rng)?;
        let p = if k % 2 == 0 { 2 } else { 1 };
        let exact = exact_wp(&a, &b, p)?.0;
        let brute = brute_force_wp(&a, &b, p)?;
        t.record((exact - brute).abs());
    }
    Ok(t.check)
}

/// Symmetry, triangle inequality, scaling and `W1 ≤ W2` on random weighted
/// clouds of up to 12 points.
pub fn metric_axioms(cases: usize, seed: RngSeed) -> Result<Vec<SelftestCheck>> {
    let mut rng = seed.rng();
    let mut sym = Tally::new("symmetry", 1e-9);
    let mut tri = Tally::new("triangle", 1e-7);
    let mut scale = Tally::new("scaling", 1e-7);
    let mut order = Tally::new("w1_le_w2", 1e-7);
    for _ in 0..cases {
        let a = random_weighted_cloud(12, &mut rng)?;
        let b = random_weighted_cloud(12, &mut rng)?;
        let c = random_weighted_cloud(12, &mut rng)?;
        let s: f64 = rng.random_range(-3.0..3.0);
        for p in [1, 2] {
            let ab = exact_wp(&a, &b, p)?.0;
            sym.record((ab - exact_wp(&b, &a, p)?.0).abs());
            let ac = exact_wp(&a, &c, p)?.0;
            let bc = exact_wp(&b, &c, p)?.0;
            tri.record(ac - ab - bc);
            let scaled = exact_wp(&a.scaled(s), &b.scaled(s), p)?.0;
            scale.record((scaled - s.abs() * ab).abs());
        }
        order.record(exact_wp(&a, &b, 1)?.0 - exact_wp(&a, &b, 2)?.0);
    }
    Ok(vec![sym.check, tri.check, scale.check, order.check])
}

/// The full suite run by `ot selftest`.
pub fn ot_selftest(seed: RngSeed) -> Result<SelftestReport> {
    let mut checks = vec![oracle_equivalence(200, seed.derive(0))?];
    checks.extend(metric_axioms(100, seed.derive(1))?);
    Ok(SelftestReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tally_counts_violations() {
        let mut t = Tally::new("x", 0.1);
        t.record(-1.0);
        t.record(0.05);
        t.record(0.2);
        t.record(f64::NAN);
        assert_eq!((t.check.cases, t.check.failures), (4, 2));
        assert_eq!(t.check.worst, 0.2);
    }

    #[test]
    fn small_suite_passes() {
        assert!(oracle_equivalence(20, RngSeed(3)).unwrap().passed());
        assert!(metric_axioms(5, RngSeed(4)).unwrap().iter().all(SelftestCheck::passed));
    }
}
