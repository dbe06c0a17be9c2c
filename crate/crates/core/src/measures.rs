//! Weighted empirical measures, benchmark samplers, moments and tail trimming.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::rng::{Rng, RngSeed};
use crate::scalar::{compensated_sum, norm, Scalar};

/// Weighted atoms in `R^dim` with weights summing to one.
///
/// Points are stored row-major in a single buffer. Clouds are immutable once
/// built; every constructor normalizes the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud<T> {
    dim: usize,
    coords: Vec<T>,
    weights: Vec<T>,
}

impl<T: Scalar> PointCloud<T> {
    /// Builds a cloud from explicit points and nonnegative weights (normalized here).
    pub fn new(points: Vec<Vec<T>>, weights: Vec<T>) -> Result<Self> {
        let dim = points.first().map(Vec::len).ok_or_else(|| domain("empty point cloud"))?;
        if points.iter().any(|p| p.len() != dim) {
            return Err(domain("points have inconsistent dimensions"));
        }
        let coords = points.into_iter().flatten().collect();
        Self::from_flat(dim, coords, weights)
    }

    /// Equal weights `1/n`.
    pub fn uniform(points: Vec<Vec<T>>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![T::one(); n])
    }

    pub fn from_flat(dim: usize, coords: Vec<T>, weights: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(domain("dimension must be positive"));
        }
        if coords.len() % dim != 0 {
            return Err(domain("coordinate buffer is not a multiple of the dimension"));
        }
        let n = coords.len() / dim;
        if n == 0 {
            return Err(domain("empty point cloud"));
        }
        if weights.len() != n {
            return Err(domain(format!("{} weights for {} points", weights.len(), n)));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(domain("non-finite coordinate"));
        }
        if weights.iter().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
            return Err(domain("weights must be finite and nonnegative"));
        }
        let total = compensated_sum(weights.iter().copied());
        if !(total > T::zero()) {
            return Err(domain("weights sum to zero"));
        }
        let weights = if total == T::one() {
            weights
        } else {
            weights.into_iter().map(|w| w / total).collect()
        };
        Ok(PointCloud { dim, coords, weights })
    }

    pub fn uniform_flat(dim: usize, coords: Vec<T>) -> Result<Self> {
        let n = if dim == 0 { 0 } else { coords.len() / dim };
        Self::from_flat(dim, coords, vec![T::one(); n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[T] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> T {
        self.weights[i]
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn points(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// Compensated total weight; equals one up to rounding.
    pub fn total_weight(&self) -> T {
        compensated_sum(self.weights.iter().copied())
    }

    /// True when every weight is bitwise equal to the first.
    pub fn is_uniform(&self) -> bool {
        let w0 = self.weights[0];
        self.weights.iter().all(|&w| w == w0)
    }

    /// Same weights, points multiplied by `s`.
    pub fn scaled(&self, s: T) -> Self {
        PointCloud {
            dim: self.dim,
            coords: self.coords.iter().map(|&c| c * s).collect(),
            weights: self.weights.clone(),
        }
    }

    /// Same weights, points transformed by `f` (output dimension may differ).
    pub fn map_points<F>(&self, out_dim: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(&[T], &mut [T]) -> Result<()>,
    {
        let mut coords = vec![T::zero(); self.len() * out_dim];
        for (p, out) in self.points().zip(coords.chunks_exact_mut(out_dim)) {
            f(p, out)?;
        }
        self.with_coords(out_dim, coords)
    }

    /// Same weights (bitwise), new atoms given as a flat row-major buffer.
    pub fn with_coords(&self, dim: usize, coords: Vec<T>) -> Result<Self> {
        if dim == 0 || coords.len() != self.len() * dim {
            return Err(domain(format!("expected {} coordinates of dimension {dim}", self.len())));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(domain("non-finite coordinate"));
        }
        Ok(PointCloud {
            dim,
            coords,
            weights: self.weights.clone(),
        })
    }

    /// Same atoms, new weights (normalized as in [`PointCloud::from_flat`]).
    pub fn with_weights(&self, weights: Vec<T>) -> Result<Self> {
        Self::from_flat(self.dim, self.coords.clone(), weights)
    }

    /// Weighted sample mean.
    pub fn mean(&self) -> Vec<T> {
        let mut m = vec![T::zero(); self.dim];
        for (p, &w) in self.points().zip(&self.weights) {
            for (mk, &x) in m.iter_mut().zip(p) {
                *mk += w * x;
            }
        }
        m
    }

    /// Weighted covariance (normalized by total weight, not bias-corrected).
    pub fn covariance(&self) -> Vec<Vec<T>> {
        let m = self.mean();
        let mut c = vec![vec![T::zero(); self.dim]; self.dim];
        for (p, &w) in self.points().zip(&self.weights) {
            for a in 0..self.dim {
                for b in 0..self.dim {
                    c[a][b] += w * (p[a] - m[a]) * (p[b] - m[b]);
                }
            }
        }
        c
    }

    /// Largest Euclidean norm of any atom.
    pub fn max_norm(&self) -> T {
        self.points().map(norm).fold(T::zero(), T::max)
    }

    /// Converts the scalar type.
    pub fn cast<U: Scalar>(&self) -> PointCloud<U> {
        PointCloud {
            dim: self.dim,
            coords: self.coords.iter().map(|c| U::lit(c.as_f64())).collect(),
            weights: self.weights.iter().map(|w| U::lit(w.as_f64())).collect(),
        }
    }

    /// Writes one row per atom: `x_1,...,x_d,weight`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim).map(|k| format!("x{k}")).collect();
        header.push("weight".into());
        wtr.write_record(&header)?;
        for (p, w) in self.points().zip(&self.weights) {
            let row: Vec<String> = p.iter().chain(std::iter::once(w)).map(|v| v.to_string()).collect();
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads the format produced by [`PointCloud::write_csv`].
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let width = rdr.headers()?.len();
        if width < 2 {
            return Err(Error::Format("cloud csv needs at least one coordinate and a weight".into()));
        }
        let dim = width - 1;
        let mut coords = Vec::new();
        let mut weights = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            for (k, field) in rec.iter().enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("bad number {field:?}")))?;
                if k < dim {
                    coords.push(T::lit(v));
                } else {
                    weights.push(T::lit(v));
                }
            }
        }
        Self::from_flat(dim, coords, weights)
    }
}

/// Closed set of 2D benchmark distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkKind {
    Swissroll,
    Checkerboard,
    Pinwheel,
    Gaussian,
    TwoMoons,
}

impl BenchmarkKind {
    pub const ALL: [BenchmarkKind; 5] = [
        BenchmarkKind::Swissroll,
        BenchmarkKind::Checkerboard,
        BenchmarkKind::Pinwheel,
        BenchmarkKind::Gaussian,
        BenchmarkKind::TwoMoons,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkKind::Swissroll => "swissroll",
            BenchmarkKind::Checkerboard => "checkerboard",
            BenchmarkKind::Pinwheel => "pinwheel",
            BenchmarkKind::Gaussian => "gaussian",
            BenchmarkKind::TwoMoons => "two-moons",
        }
    }
}

impl fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchmarkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchmarkKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s) || (s == "twomoons" && *k == BenchmarkKind::TwoMoons))
            .ok_or_else(|| config(format!("unknown benchmark distribution {s:?}")))
    }
}

/// A benchmark distribution together with its overall scale factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkDist {
    pub kind: BenchmarkKind,
    /// Multiplies every sample; 1.0 gives the frozen reference geometry.
    pub scale: f64,
}

/// Swissroll noise is truncated at this many standard deviations per coordinate.
pub const SWISSROLL_NOISE_CLIP: f64 = 4.0;
/// Radius bound for unscaled swissroll samples: `(4.5π + 4√2 · 1.0) / 5`.
pub const SWISSROLL_R_MAX: f64 = (4.5 * PI + SWISSROLL_NOISE_CLIP * std::f64::consts::SQRT_2) / 5.0;
/// Half-width of the unscaled checkerboard square `[-2, 2]^2`.
pub const CHECKERBOARD_HALF_WIDTH: f64 = 2.0;
/// Number of pinwheel blades.
pub const PINWHEEL_BLADES: usize = 5;

impl BenchmarkDist {
    pub fn new(kind: BenchmarkKind) -> Self {
        BenchmarkDist { kind, scale: 1.0 }
    }

    /// Draws one unscaled sample.
    ///
    /// Frozen generators (all in 2D):
    /// * swissroll: `t = 1.5π(1 + 2U)`, `(t cos t + e1, t sin t + e2) / 5`,
    ///   `e ~ N(0, I)` truncated to `|e_k| ≤ 4`.
    /// * checkerboard: `x ~ U[-2, 2)`, `y = V - 2B + (⌊x⌋ mod 2)` with
    ///   `V ~ U[0,1)`, `B ~ Bernoulli(1/2)`; uniform on the 8 squares of a
    ///   4×4 board whose lower-left corners satisfy `⌊x⌋ + ⌊y⌋` even.
    /// * pinwheel: 5 blades, radial std 0.3, tangential std 0.1, twist rate 0.25,
    ///   final factor 2.
    /// * gaussian: `N(0, I)`.
    /// * two-moons: half circles of radius 1 offset by `(1, -0.5)`, noise std 0.1,
    ///   recentred by `(-0.5, -0.25)`.
    fn draw(&self, rng: &mut Rng) -> [f64; 2] {
        let normal = |rng: &mut Rng| -> f64 { StandardNormal.sample(rng) };
        match self.kind {
            BenchmarkKind::Swissroll => {
                let t = 1.5 * PI * (1.0 + 2.0 * rng.random::<f64>());
                let mut clipped = || loop {
                    let e = normal(rng);
                    if e.abs() <= SWISSROLL_NOISE_CLIP {
                        break e;
                    }
                };
                let e1 = clipped();
                let e2 = clipped();
                [(t * t.cos() + e1) / 5.0, (t * t.sin() + e2) / 5.0]
            }
            BenchmarkKind::Checkerboard => {
                let x = rng.random::<f64>() * 4.0 - 2.0;
                let v = rng.random::<f64>();
                let b = if rng.random::<bool>() { 2.0 } else { 0.0 };
                let y = v - b + x.floor().rem_euclid(2.0);
                [x, y]
            }
            BenchmarkKind::Pinwheel => {
                let blade = rng.random_range(0..PINWHEEL_BLADES);
                let base = 2.0 * PI * blade as f64 / PINWHEEL_BLADES as f64;
                let f0 = normal(rng) * 0.3 + 1.0;
                let f1 = normal(rng) * 0.1;
                let a = base + 0.25 * f0.exp();
                let (s, c) = a.sin_cos();
                [2.0 * (f0 * c + f1 * s), 2.0 * (-f0 * s + f1 * c)]
            }
            BenchmarkKind::Gaussian => [normal(rng), normal(rng)],
            BenchmarkKind::TwoMoons => {
                let t = PI * rng.random::<f64>();
                let (x, y) = if rng.random::<bool>() {
                    (t.cos(), t.sin())
                } else {
                    (1.0 - t.cos(), 0.5 - t.sin())
                };
                [x + 0.1 * normal(rng) - 0.5, y + 0.1 * normal(rng) - 0.25]
            }
        }
    }
}

/// `n` equally weighted samples of `dist`; bitwise reproducible per seed.
pub fn sample_benchmark<T: Scalar>(dist: &BenchmarkDist, n: usize, seed: RngSeed) -> Result<PointCloud<T>> {
    if n == 0 {
        return Err(domain("sample count must be at least 1"));
    }
    if !(dist.scale.is_finite() && dist.scale > 0.0) {
        return Err(config(format!("benchmark scale must be positive, got {}", dist.scale)));
    }
    let mut rng = seed.rng();
    let mut coords = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let [x, y] = dist.draw(&mut rng);
        coords.push(T::lit(x * dist.scale));
        coords.push(T::lit(y * dist.scale));
    }
    PointCloud::uniform_flat(2, coords)
}

/// `n` standard normal samples in `R^dim`, uniform weights.
pub fn sample_gaussian<T: Scalar>(dim: usize, n: usize, seed: RngSeed) -> Result<PointCloud<T>> {
    if n == 0 {
        return Err(domain("sample count must be at least 1"));
    }
    let mut rng = seed.rng();
    let coords = (0..dim * n)
        .map(|_| T::lit(StandardNormal.sample(&mut rng)))
        .collect();
    PointCloud::uniform_flat(dim, coords)
}

/// `(Σ w_i |u_i|^q)^{1/q}`.
pub fn moment<T: Scalar>(cloud: &PointCloud<T>, q: T) -> Result<T> {
    if cloud.is_empty() {
        return Err(domain("moment of an empty cloud"));
    }
    if !(q >= T::one()) {
        return Err(domain("moment order must be at least 1"));
    }
    let s = compensated_sum(cloud.points().zip(cloud.weights()).map(|(p, &w)| w * norm(p).powf(q)));
    Ok(s.powf(q.recip()))
}

/// `Σ w_i |u_i|^p` (the raw moment, no root).
pub fn raw_moment<T: Scalar>(cloud: &PointCloud<T>, p: T) -> T {
    compensated_sum(cloud.points().zip(cloud.weights()).map(|(pt, &w)| w * norm(pt).powf(p)))
}

/// Keeps atoms with `|u| ≤ r` (boundary inclusive) and renormalizes.
pub fn trim_cloud<T: Scalar>(cloud: &PointCloud<T>, r: T) -> Result<PointCloud<T>> {
    if !(r > T::zero()) {
        return Err(domain("trim radius must be positive"));
    }
    let keep: Vec<usize> = (0..cloud.len())
        .filter(|&i| norm(cloud.point(i)) <= r && cloud.weight(i) > T::zero())
        .collect();
    if keep.is_empty() {
        return Err(domain(format!("trim radius {r} leaves no mass")));
    }
    if keep.len() == cloud.len() {
        return Ok(cloud.clone());
    }
    let mut coords = Vec::with_capacity(keep.len() * cloud.dim());
    let mut weights = Vec::with_capacity(keep.len());
    for &i in &keep {
        coords.extend_from_slice(cloud.point(i));
        weights.push(cloud.weight(i));
    }
    PointCloud::from_flat(cloud.dim(), coords, weights)
}
