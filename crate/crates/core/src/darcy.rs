//! Darcy flow `−div(exp(u) ∇p) = f` on the unit square with `p = 0` on the
//! boundary, discretized by cell-centered finite volumes.
//!
//! A [`GridField`] of size `m` holds one value per cell of the uniform
//! `m × m` partition, row-major with the row index running along `y`. Face
//! coefficients are harmonic means of `exp(u)` on the two adjacent cells;
//! boundary faces see the Dirichlet value at half a cell's distance.

use std::fmt;
use std::io::Write;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::bayes::ForwardMap;
use crate::error::{domain, Error, Result};
use crate::linalg::{pcg, BandMatrix};
use crate::rng::RngSeed;
use crate::scalar::{dot, Scalar};

/// Largest grid solved by band Cholesky; larger grids use conjugate gradients.
pub const DIRECT_MAX: usize = 64;
/// Required relative residual of the linear solve.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Number of pressure observations in the inference problem.
pub const OBS_COUNT: usize = 300;
/// Seed of the frozen observation locations.
pub const OBS_SEED: RngSeed = RngSeed(0x0DA2C7);
/// Observation points are drawn uniformly from `(OBS_MARGIN, 1 − OBS_MARGIN)²`.
pub const OBS_MARGIN: f64 = 0.05;

/// Piecewise-constant field on the uniform `m × m` partition of `(0,1)²`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField<T> {
    m: usize,
    values: Vec<T>,
}

impl<T: Scalar> GridField<T> {
    pub fn new(m: usize, values: Vec<T>) -> Result<Self> {
        if m < 3 {
            return Err(domain(format!("grid size {m} is below 3")));
        }
        if values.len() != m * m {
            return Err(domain(format!("{} values for a {m}×{m} grid", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(domain("non-finite field value"));
        }
        Ok(GridField { m, values })
    }

    pub fn constant(m: usize, c: T) -> Result<Self> {
        Self::new(m, vec![c; m * m])
    }

    /// Samples `f(x, y)` at the cell centers.
    pub fn from_fn(m: usize, f: impl Fn(T, T) -> T) -> Result<Self> {
        let h = T::count(m).recip();
        let half = T::lit(0.5);
        let values = (0..m * m)
            .map(|k| f((T::count(k % m) + half) * h, (T::count(k / m) + half) * h))
            .collect();
        Self::new(m, values)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Value of the cell in row `i` (along `y`) and column `j` (along `x`).
    pub fn at(&self, i: usize, j: usize) -> T {
        self.values[i * self.m + j]
    }

    /// Splits every cell into `k × k` equal cells with the same value.
    pub fn refine(&self, k: usize) -> Self {
        if k <= 1 {
            return self.clone();
        }
        let mk = self.m * k;
        let values = (0..mk * mk).map(|c| self.at(c / mk / k, c % mk / k)).collect();
        GridField { m: mk, values }
    }

    /// `max |a − b|`.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }

    pub fn mean(&self) -> T {
        self.values.iter().copied().sum::<T>() / T::count(self.values.len())
    }

    /// One row of the grid per line, comma separated.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for row in self.values.chunks_exact(self.m) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Binary 8-bit PGM with `lo ↦ 0` and `hi ↦ 255`; the top image row is `y = 1`.
    pub fn write_pgm<W: Write>(&self, mut out: W, lo: T, hi: T) -> Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.m, self.m)?;
        let span = if hi > lo { hi - lo } else { T::one() };
        let mut bytes = Vec::with_capacity(self.m * self.m);
        for row in self.values.chunks_exact(self.m).rev() {
            for &v in row {
                let t = ((v - lo) / span).max(T::zero()).min(T::one());
                bytes.push((t.as_f64() * 255.0).round() as u8);
            }
        }
        out.write_all(&bytes)?;
        Ok(())
    }
}

/// Assembles the finite-volume operator for `exp(u)`, scaled so that the
/// right-hand side is `f h²`.
fn assemble<T: Scalar>(u: &GridField<T>) -> BandMatrix<T> {
    let m = u.m;
    let k: Vec<T> = u.values.iter().map(|v| v.exp()).collect();
    let two = T::lit(2.0);
    let harmonic = |a: T, b: T| two * a * b / (a + b);
    let mut a = BandMatrix::zeros(m * m, m);
    for i in 0..m {
        for j in 0..m {
            let c = i * m + j;
            let kc = k[c];
            // West and south faces couple to already-numbered cells.
            if j > 0 {
                let t = harmonic(kc, k[c - 1]);
                a.add(c, c, t);
                a.add(c - 1, c - 1, t);
                a.add(c, c - 1, -t);
            } else {
                a.add(c, c, two * kc);
            }
            if i > 0 {
                let t = harmonic(kc, k[c - m]);
                a.add(c, c, t);
                a.add(c - m, c - m, t);
                a.add(c, c - m, -t);
            } else {
                a.add(c, c, two * kc);
            }
            if j + 1 == m {
                a.add(c, c, two * kc);
            }
            if i + 1 == m {
                a.add(c, c, two * kc);
            }
        }
    }
    a
}

/// Pressure for log-permeability `u` and source `f` on the same grid.
pub fn solve<T: Scalar>(u: &GridField<T>, source: &GridField<T>) -> Result<GridField<T>> {
    if u.m != source.m {
        return Err(domain(format!("permeability grid {} and source grid {} differ", u.m, source.m)));
    }
    if u.values.iter().chain(&source.values).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite coefficient or source".into()));
    }
    let m = u.m;
    let h2 = T::count(m * m).recip();
    let b: Vec<T> = source.values.iter().map(|&f| f * h2).collect();
    let a = assemble(u);
    let x = if m <= DIRECT_MAX {
        let mut x = b.clone();
        a.clone().factor()?.solve(&mut x);
        x
    } else {
        let diag: Vec<T> = (0..a.n()).map(|i| a.get(i, i)).collect();
        pcg(|v| a.mul(v), &diag, &b, T::lit(RESIDUAL_TOL * 1e-2), 20 * a.n())?
    };
    let bn = dot(&b, &b).sqrt();
    if bn > T::zero() {
        let r: Vec<T> = a.mul(&x).iter().zip(&b).map(|(&ax, &bi)| ax - bi).collect();
        let rel = dot(&r, &r).sqrt() / bn;
        if !(rel <= T::lit(RESIDUAL_TOL)) {
            return Err(Error::Numerical(format!("linear solve residual {rel} above tolerance")));
        }
    }
    GridField::new(m, x).map_err(|_| Error::Numerical("non-finite pressure".into()))
}

/// Bilinear interpolation of a cell-centered field whose boundary value is
/// zero. Nodes are the cell centers plus the boundary lines.
pub fn interpolate<T: Scalar>(p: &GridField<T>, x: T, y: T) -> Result<T> {
    let zero = T::zero();
    if !(x > zero && x < T::one() && y > zero && y < T::one()) {
        return Err(domain(format!("point ({x}, {y}) is not strictly inside the unit square")));
    }
    let m = p.m;
    // Node k of the extended axis sits at 0, (k - 1/2)/m for 1 ≤ k ≤ m, and 1.
    let node = |k: usize| -> T {
        if k == 0 {
            zero
        } else if k > m {
            T::one()
        } else {
            (T::count(k) - T::lit(0.5)) / T::count(m)
        }
    };
    let locate = |t: T| -> (usize, T) {
        let k = ((t * T::count(m) + T::lit(0.5)).floor().as_f64() as usize).min(m);
        let (a, b) = (node(k), node(k + 1));
        (k, (t - a) / (b - a))
    };
    let value = |ky: usize, kx: usize| -> T {
        if ky == 0 || kx == 0 || ky > m || kx > m {
            zero
        } else {
            p.at(ky - 1, kx - 1)
        }
    };
    let (kx, tx) = locate(x);
    let (ky, ty) = locate(y);
    let one = T::one();
    Ok((one - ty) * ((one - tx) * value(ky, kx) + tx * value(ky, kx + 1))
        + ty * ((one - tx) * value(ky + 1, kx) + tx * value(ky + 1, kx + 1)))
}

/// Noisy point measurements of a pressure field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservationSet<T> {
    pub points: Vec<[T; 2]>,
    pub values: Vec<T>,
    pub sigma: T,
}

impl<T: Scalar> ObservationSet<T> {
    /// Header `x,y,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "value"])?;
        for (p, v) in self.points.iter().zip(&self.values) {
            w.write_record([p[0].to_string(), p[1].to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Interpolates `p` at `points` and adds `N(0, σ²)` noise.
pub fn observe<T: Scalar>(p: &GridField<T>, points: &[[T; 2]], sigma: T, seed: RngSeed) -> Result<ObservationSet<T>> {
    if !(sigma >= T::zero()) {
        return Err(domain("noise level must be nonnegative"));
    }
    let mut rng = seed.rng();
    let values = points
        .iter()
        .map(|q| {
            let clean = interpolate(p, q[0], q[1])?;
            Ok(if sigma > T::zero() {
                let xi: f64 = StandardNormal.sample(&mut rng);
                clean + sigma * T::lit(xi)
            } else {
                clean
            })
        })
        .collect::<Result<_>>()?;
    Ok(ObservationSet {
        points: points.to_vec(),
        values,
        sigma,
    })
}

/// `n` points uniform in `(OBS_MARGIN, 1 − OBS_MARGIN)²`.
pub fn observation_points<T: Scalar>(n: usize, seed: RngSeed) -> Vec<[T; 2]> {
    let mut rng = seed.rng();
    let span = 1.0 - 2.0 * OBS_MARGIN;
    (0..n)
        .map(|_| {
            let x: f64 = rng.random();
            let y: f64 = rng.random();
            [T::lit(OBS_MARGIN + span * x), T::lit(OBS_MARGIN + span * y)]
        })
        .collect()
}

/// `σ = ratio · std(values)`.
pub fn noise_for_ratio<T: Scalar>(clean: &[T], ratio: T) -> T {
    let n = T::count(clean.len());
    let mean = clean.iter().copied().sum::<T>() / n;
    let var = clean.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    ratio * var.sqrt()
}

/// Parameter-to-observation map of the inference problem.
#[derive(Clone, PartialEq)]
pub struct DarcyConfig<T> {
    /// Side of the parameter grid.
    pub field_m: usize,
    /// Each parameter cell is split into `refine × refine` solver cells.
    pub refine: usize,
    /// Constant source `f`.
    pub source: T,
    pub points: Vec<[T; 2]>,
}

impl<T: Scalar> Default for DarcyConfig<T> {
    fn default() -> Self {
        DarcyConfig {
            field_m: 16,
            refine: 2,
            source: T::one(),
            points: observation_points(OBS_COUNT, OBS_SEED),
        }
    }
}

impl<T: Scalar> fmt::Debug for DarcyConfig<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DarcyConfig")
            .field("field_m", &self.field_m)
            .field("refine", &self.refine)
            .field("source", &self.source)
            .field("points", &self.points.len())
            .finish()
    }
}

impl<T: Scalar> DarcyConfig<T> {
    pub fn solver_m(&self) -> usize {
        self.field_m * self.refine.max(1)
    }

    /// Pressure on the solver grid for a flat parameter vector.
    pub fn pressure(&self, u_flat: &[T]) -> Result<GridField<T>> {
        let u = GridField::new(self.field_m, u_flat.to_vec())?.refine(self.refine);
        let f = GridField::constant(u.m(), self.source)?;
        solve(&u, &f)
    }
}

/// Reshape, solve, and read the pressure at the observation points.
pub fn forward_map<T: Scalar>(u_flat: &[T], cfg: &DarcyConfig<T>) -> Result<Vec<T>> {
    if u_flat.len() != cfg.field_m * cfg.field_m {
        return Err(domain(format!(
            "parameter of length {} for a {}×{} grid",
            u_flat.len(),
            cfg.field_m,
            cfg.field_m
        )));
    }
    let p = cfg.pressure(u_flat)?;
    cfg.points.iter().map(|q| interpolate(&p, q[0], q[1])).collect()
}

impl<T: Scalar> ForwardMap<T> for DarcyConfig<T> {
    fn input_dim(&self) -> usize {
        self.field_m * self.field_m
    }

    fn output_dim(&self) -> usize {
        self.points.len()
    }

    fn apply(&self, u: &[T]) -> Result<Vec<T>> {
        forward_map(u, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn manufactured_error(m: usize) -> f64 {
        let u = GridField::constant(m, 0.0).unwrap();
        let f = GridField::from_fn(m, |x: f64, y| 2.0 * PI * PI * (PI * x).sin() * (PI * y).sin()).unwrap();
        let exact = GridField::from_fn(m, |x: f64, y| (PI * x).sin() * (PI * y).sin()).unwrap();
        solve(&u, &f).unwrap().max_abs_diff(&exact)
    }

    #[test]
    fn manufactured_solution_converges_at_second_order() {
        let e: Vec<f64> = [8, 16, 32].iter().map(|&m| manufactured_error(m)).collect();
        for w in e.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.5..=4.5).contains(&ratio), "errors {e:?}");
        }
    }

    #[test]
    fn zero_source_gives_zero_pressure() {
        let u = GridField::from_fn(6, |x: f64, y| x - y).unwrap();
        let p = solve(&u, &GridField::constant(6, 0.0).unwrap()).unwrap();
        assert!(p.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_log_permeability_scales_the_solution() {
        let f = GridField::from_fn(7, |x: f64, y| 1.0 + x * y).unwrap();
        let p0 = solve(&GridField::constant(7, 0.0).unwrap(), &f).unwrap();
        let p1 = solve(&GridField::constant(7, 0.8).unwrap(), &f).unwrap();
        for (a, b) in p0.values().iter().zip(p1.values()) {
            assert_relative_eq!(*b, a * (-0.8f64).exp(), max_relative = 1e-12);
        }
    }

    #[test]
    fn iterative_and_direct_solvers_agree() {
        let u = GridField::from_fn(66, |x: f64, y| (3.0 * x).sin() * y).unwrap();
        let f = GridField::constant(66, 1.0).unwrap();
        let a = assemble(&u);
        let h2 = 1.0 / (66.0 * 66.0);
        let mut direct = vec![h2; 66 * 66];
        a.factor().unwrap().solve(&mut direct);
        let p = solve(&u, &f).unwrap();
        let err = p.values().iter().zip(&direct).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn interpolation_at_nodes_and_centers() {
        let p = GridField::from_fn(4, |x: f64, y| x + 10.0 * y).unwrap();
        assert_eq!(interpolate(&p, 0.375, 0.625).unwrap(), p.at(2, 1));
        let avg = (p.at(1, 1) + p.at(1, 2) + p.at(2, 1) + p.at(2, 2)) / 4.0;
        assert_relative_eq!(interpolate(&p, 0.5, 0.5).unwrap(), avg, epsilon = 1e-14);
        assert_relative_eq!(interpolate(&p, 0.0625, 0.125).unwrap(), p.at(0, 0) / 2.0, epsilon = 1e-14);
        assert!(interpolate(&p, 0.0, 0.5).is_err());
        assert!(interpolate(&p, 0.5, 1.0).is_err());
    }

    #[test]
    fn observations_are_exact_without_noise() {
        let p = GridField::from_fn(5, |x: f64, y| x * y).unwrap();
        let pts = [[0.3, 0.5], [0.7, 0.1]];
        let o = observe(&p, &pts, 0.0, RngSeed(1)).unwrap();
        assert_eq!(o.values[0], p.at(2, 1));
        let noisy = observe(&p, &pts, 0.1, RngSeed(1)).unwrap();
        assert_ne!(noisy.values, o.values);
        assert_eq!(noisy, observe(&p, &pts, 0.1, RngSeed(1)).unwrap());
    }

    #[test]
    fn refine_keeps_cell_values() {
        let u = GridField::from_fn(3, |x: f64, y| x + 3.0 * y).unwrap();
        let r = u.refine(2);
        assert_eq!(r.m(), 6);
        assert_eq!(r.at(5, 4), u.at(2, 2));
        assert_eq!(r.at(2, 1), u.at(1, 0));
    }

    #[test]
    fn forward_map_scaling_and_permutation() {
        let cfg = DarcyConfig::<f64> {
            field_m: 4,
            refine: 2,
            ..DarcyConfig::default()
        };
        let u: Vec<f64> = (0..16).map(|k| 0.1 * k as f64).collect();
        let base = forward_map(&u, &cfg).unwrap();
        let doubled: Vec<f64> = u.iter().map(|v| v + 2f64.ln()).collect();
        for (a, b) in base.iter().zip(forward_map(&doubled, &cfg).unwrap()) {
            assert_relative_eq!(b, a / 2.0, max_relative = 1e-10);
        }
        let mut rev = cfg.clone();
        rev.points.reverse();
        let mut back = forward_map(&u, &rev).unwrap();
        back.reverse();
        assert_eq!(back, base);
        assert!(forward_map(&u[..15], &cfg).is_err());
    }

    #[test]
    fn pgm_header_and_size() {
        let p = GridField::from_fn(3, |x: f64, _| x).unwrap();
        let mut buf = Vec::new();
        p.write_pgm(&mut buf, 0.0, 1.0).unwrap();
        assert!(buf.starts_with(b"P5\n3 3\n255\n"));
        assert_eq!(buf.len(), 11 + 9);
    }
}
