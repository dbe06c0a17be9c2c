//! Gaussian-noise likelihoods, importance-resampled posteriors, tail trimming
//! checks and the plug-in posterior stability constant.

use std::fmt;
use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::linalg::spectral_norm;
use crate::measures::{raw_moment, trim_cloud, PointCloud};
use crate::ot::{exact_wp, TransportPlan};
use crate::rng::RngSeed;
use crate::scalar::{compensated_sum, log_sum_exp, norm, Scalar};

/// Forward operator `F: R^n → R^k` of an observation model `y = F(u) + ξ`.
pub trait ForwardMap<T>: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn apply(&self, u: &[T]) -> Result<Vec<T>>;

    /// Global Lipschitz constant when one is known in closed form.
    fn lipschitz(&self) -> Option<T> {
        None
    }
}

/// `u ↦ A u` with `A` row-major `rows × cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap<T> {
    rows: usize,
    cols: usize,
    matrix: Vec<T>,
    norm: T,
}

impl<T: Scalar> LinearMap<T> {
    pub fn new(rows: usize, cols: usize, matrix: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 || matrix.len() != rows * cols {
            return Err(domain(format!("matrix of length {} is not {rows}×{cols}", matrix.len())));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(domain("non-finite matrix entry"));
        }
        let norm = spectral_norm(&matrix, rows, cols);
        Ok(LinearMap { rows, cols, matrix, norm })
    }

    pub fn matrix(&self) -> &[T] {
        &self.matrix
    }
}

impl<T: Scalar> ForwardMap<T> for LinearMap<T> {
    fn input_dim(&self) -> usize {
        self.cols
    }

    fn output_dim(&self) -> usize {
        self.rows
    }

    fn apply(&self, u: &[T]) -> Result<Vec<T>> {
        if u.len() != self.cols {
            return Err(domain(format!("input of length {} for a map on R^{}", u.len(), self.cols)));
        }
        Ok(self
            .matrix
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(u).fold(T::zero(), |acc, (&a, &x)| acc + a * x))
            .collect())
    }

    fn lipschitz(&self) -> Option<T> {
        Some(self.norm)
    }
}

/// `Φ(u; y) = |F(u) − y|² / (2σ²)`.
#[derive(Clone)]
pub struct LikelihoodSpec<T> {
    forward: Arc<dyn ForwardMap<T>>,
    data: Vec<T>,
    sigma: T,
}

impl<T: Scalar> fmt::Debug for LikelihoodSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LikelihoodSpec")
            .field("input_dim", &self.forward.input_dim())
            .field("data", &self.data)
            .field("sigma", &self.sigma)
            .finish()
    }
}

impl<T: Scalar> LikelihoodSpec<T> {
    pub fn new(forward: Arc<dyn ForwardMap<T>>, data: Vec<T>, sigma: T) -> Result<Self> {
        if !(sigma > T::zero()) || !sigma.is_finite() {
            return Err(domain(format!("noise level must be positive and finite, got {sigma}")));
        }
        if data.len() != forward.output_dim() {
            return Err(domain(format!(
                "data of length {} for a forward map into R^{}",
                data.len(),
                forward.output_dim()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(domain("non-finite data"));
        }
        Ok(LikelihoodSpec { forward, data, sigma })
    }

    pub fn linear(map: LinearMap<T>, data: Vec<T>, sigma: T) -> Result<Self> {
        Self::new(Arc::new(map), data, sigma)
    }

    /// The 2D benchmark model: observe the first coordinate, `σ = 0.5`, `y = 0`.
    pub fn benchmark() -> Self {
        let map = LinearMap::new(2, 2, vec![T::one(), T::zero(), T::zero(), T::zero()]).expect("valid");
        Self::linear(map, vec![T::zero(); 2], T::lit(0.5)).expect("valid")
    }

    pub fn with_sigma(&self, sigma: T) -> Result<Self> {
        Self::new(self.forward.clone(), self.data.clone(), sigma)
    }

    pub fn forward(&self) -> &dyn ForwardMap<T> {
        self.forward.as_ref()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn input_dim(&self) -> usize {
        self.forward.input_dim()
    }

    /// `Φ(u; y)`.
    pub fn potential(&self, u: &[T]) -> Result<T> {
        if u.len() != self.forward.input_dim() {
            return Err(domain(format!(
                "parameter of length {} for a forward map on R^{}",
                u.len(),
                self.forward.input_dim()
            )));
        }
        let fu = self.forward.apply(u)?;
        let sq = fu.iter().zip(&self.data).fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
        let phi = sq / (T::lit(2.0) * self.sigma * self.sigma);
        if !phi.is_finite() {
            return Err(Error::Numerical("non-finite likelihood potential".into()));
        }
        Ok(phi)
    }

    /// `−Φ(u; y)`.
    pub fn log_likelihood(&self, u: &[T]) -> Result<T> {
        Ok(-self.potential(u)?)
    }
}

/// Weighted representation of a posterior.
#[derive(Debug, Clone)]
pub struct WeightedSamples<T> {
    /// Prior atoms carrying the normalized posterior weights.
    pub cloud: PointCloud<T>,
    /// `log prior_weight − Φ`, before normalization.
    pub log_weights: Vec<T>,
    pub ess_fraction: T,
}

/// Normalizes log-weights after subtracting their maximum, so adding a
/// constant to every entry leaves the result unchanged.
pub fn normalize_log_weights<T: Scalar>(log_weights: &[T]) -> Result<Vec<T>> {
    if log_weights.is_empty() {
        return Err(domain("no weights to normalize"));
    }
    let max = log_weights.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return Err(Error::Degeneracy("every weight underflowed to zero".into()));
    }
    let w: Vec<T> = log_weights.iter().map(|&l| (l - max).exp()).collect();
    let total = compensated_sum(w.iter().copied());
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// `(Σw)² / (n Σw²)`.
pub fn ess_fraction<T: Scalar>(weights: &[T]) -> T {
    let s = compensated_sum(weights.iter().copied());
    let s2 = compensated_sum(weights.iter().map(|&w| w * w));
    s * s / (T::count(weights.len()) * s2)
}

/// Systematic resampling: one uniform offset, `m` evenly spaced pointers.
pub fn systematic_resample<T: Scalar>(weights: &[T], m: usize, seed: RngSeed) -> Result<Vec<usize>> {
    if weights.is_empty() || m == 0 {
        return Err(domain("resampling needs weights and a positive output size"));
    }
    let total = compensated_sum(weights.iter().copied());
    if !(total > T::zero()) {
        return Err(Error::Degeneracy("weights sum to zero".into()));
    }
    let offset: f64 = seed.rng().random();
    let step = total.as_f64() / m as f64;
    let mut out = Vec::with_capacity(m);
    let mut cum = weights[0].as_f64();
    let mut i = 0;
    for k in 0..m {
        let u = (offset + k as f64) * step;
        while cum < u && i + 1 < weights.len() {
            i += 1;
            cum += weights[i].as_f64();
        }
        out.push(i);
    }
    Ok(out)
}

/// Draws an equally weighted sub-sample of size `m` from a weighted cloud.
pub fn resample<T: Scalar>(cloud: &PointCloud<T>, m: usize, seed: RngSeed) -> Result<PointCloud<T>> {
    let idx = systematic_resample(cloud.weights(), m, seed)?;
    let mut coords = Vec::with_capacity(m * cloud.dim());
    for i in idx {
        coords.extend_from_slice(cloud.point(i));
    }
    PointCloud::uniform_flat(cloud.dim(), coords)
}

/// Self-normalized importance weights `w_i ∝ prior_i · exp(−Φ(u_i))` and an
/// `m_out`-point systematic resample.
pub fn importance_posterior<T: Scalar>(
    prior: &PointCloud<T>,
    spec: &LikelihoodSpec<T>,
    m_out: usize,
    seed: RngSeed,
) -> Result<(WeightedSamples<T>, PointCloud<T>)> {
    let weighted = reweight(prior, spec)?;
    let resampled = resample(&weighted.cloud, m_out, seed)?;
    Ok((weighted, resampled))
}

/// The weighted half of [`importance_posterior`].
pub fn reweight<T: Scalar>(prior: &PointCloud<T>, spec: &LikelihoodSpec<T>) -> Result<WeightedSamples<T>> {
    if prior.is_empty() {
        return Err(domain("empty prior"));
    }
    if prior.dim() != spec.input_dim() {
        return Err(domain(format!(
            "prior of dimension {} for a likelihood on R^{}",
            prior.dim(),
            spec.input_dim()
        )));
    }
    let phi: Vec<T> = prior
        .coords()
        .par_chunks(prior.dim())
        .map(|u| spec.potential(u))
        .collect::<Result<_>>()?;
    let log_weights: Vec<T> = prior
        .weights()
        .iter()
        .zip(&phi)
        .map(|(&w, &p)| if w > T::zero() { w.ln() - p } else { T::neg_infinity() })
        .collect();
    let w = normalize_log_weights(&log_weights)?;
    let ess = ess_fraction(&w);
    let cloud = prior.with_weights(w)?;
    Ok(WeightedSamples {
        cloud,
        log_weights,
        ess_fraction: ess,
    })
}

/// Plug-in stability constant for `Φ = |Fu − y|²/(2σ²)` with Lipschitz `F`,
/// using the optimal `W_2` plan between the two priors.
pub fn estimate_cstab<T: Scalar>(prior_true: &PointCloud<T>, prior_approx: &PointCloud<T>, spec: &LikelihoodSpec<T>) -> Result<T> {
    let (_, plan) = exact_wp(prior_true, prior_approx, 2)?;
    cstab_from_plan(prior_true, prior_approx, &plan, spec)
}

/// [`estimate_cstab`] with a precomputed `W_2` plan.
pub fn cstab_from_plan<T: Scalar>(
    prior_true: &PointCloud<T>,
    prior_approx: &PointCloud<T>,
    plan: &TransportPlan<T>,
    spec: &LikelihoodSpec<T>,
) -> Result<T> {
    let lip = spec
        .forward()
        .lipschitz()
        .ok_or_else(|| domain("the stability constant needs a forward map with a known Lipschitz constant"))?;
    if prior_true.is_empty() || prior_approx.is_empty() {
        return Err(domain("empty prior"));
    }
    if plan.source_marginal.len() != prior_true.len() || plan.target_marginal.len() != prior_approx.len() {
        return Err(domain("plan does not couple the given clouds"));
    }
    let s2 = spec.sigma() * spec.sigma();
    let y_norm = norm(spec.data());
    let f_norms = |c: &PointCloud<T>| -> Result<Vec<T>> {
        c.coords()
            .par_chunks(c.dim())
            .map(|u| spec.forward().apply(u).map(|fu| norm(&fu)))
            .collect()
    };
    let ft = f_norms(prior_true)?;
    let fa = f_norms(prior_approx)?;
    // Normalizers are kept as logarithms, they underflow for small σ.
    let log_mass = |c: &PointCloud<T>, f: &[T]| -> Result<T> {
        let terms: Vec<T> = c
            .weights()
            .iter()
            .zip(f)
            .filter(|(&w, _)| w > T::zero())
            .map(|(&w, &fi)| w.ln() - fi * fi / s2)
            .collect();
        let l = log_sum_exp(&terms);
        if !l.is_finite() {
            return Err(Error::Degeneracy("normalizing sum underflowed".into()));
        }
        Ok(l)
    };
    let log_h_true = log_mass(prior_true, &ft)?;
    let log_h_approx = log_mass(prior_approx, &fa)?;
    let mean_norm = raw_moment(prior_true, T::one());
    let half = T::lit(0.5) / s2;
    let integral = compensated_sum(plan.entries.iter().map(|&(i, j, mass)| {
        let ell = half * lip * (ft[i] + fa[j] + T::lit(2.0) * y_norm);
        let l = ell.max(T::one());
        let r = norm(prior_true.point(i)).max(norm(prior_approx.point(j))).max(T::one());
        mass * l * l * r * r
    }));
    let log_front = T::lit(2.0) * y_norm * y_norm / s2 + (T::one() + mean_norm).ln() - log_h_true - log_h_approx;
    let c = log_front.exp() * integral.sqrt();
    if !c.is_finite() {
        return Err(Error::Degeneracy("stability constant overflowed".into()));
    }
    Ok(c)
}

/// Which trimming inequality to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TrimMode {
    /// `W_2(μ, μ_r)² ≤ (4/r²) μ(|·|²)²`.
    Prior,
    /// `W_1(ν, ν_r) ≤ (2/r) ν(|·|)²`.
    Posterior,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrimCheck<T> {
    pub lhs: T,
    pub rhs: T,
    pub holds: bool,
}

/// Evaluates one of the trimming bounds with exact transport on the left.
pub fn check_trim_bounds<T: Scalar>(measure: &PointCloud<T>, r: T, mode: TrimMode) -> Result<TrimCheck<T>> {
    let trimmed = trim_cloud(measure, r)?;
    let (lhs, rhs) = match mode {
        TrimMode::Prior => {
            let (w2, _) = exact_wp(measure, &trimmed, 2)?;
            let m2 = raw_moment(measure, T::lit(2.0));
            (w2 * w2, T::lit(4.0) / (r * r) * m2 * m2)
        }
        TrimMode::Posterior => {
            let (w1, _) = exact_wp(measure, &trimmed, 1)?;
            let m1 = raw_moment(measure, T::one());
            (w1, T::lit(2.0) / r * m1 * m1)
        }
    };
    Ok(TrimCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + T::lit(1e-7),
    })
}

/// Prior `W_2`, posterior `W_1` and the plug-in constant for one pair of priors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityReport<T> {
    pub prior_w2: T,
    pub posterior_w1: T,
    /// Absent when the forward map has no closed-form Lipschitz constant.
    pub cstab_estimate: Option<T>,
    /// `posterior_w1 / prior_w2`.
    pub ratio: T,
    /// Resampling noise of `posterior_w1`: the `W_1` between two independent
    /// resamples of the exact posterior plus the same for the approximate one.
    pub noise_floor: T,
    pub ess_true: T,
    pub ess_approx: T,
}

impl<T: Scalar> StabilityReport<T> {
    /// `posterior_w1 ≤ cstab · prior_w2 + noise_floor`; `None` without a constant.
    pub fn bound_holds(&self) -> Option<bool> {
        self.cstab_estimate
            .map(|c| self.posterior_w1 <= c * self.prior_w2 + self.noise_floor)
    }
}

/// Compares the posteriors induced by two priors under the same likelihood.
///
/// Both posteriors are resampled to `m_out` equally weighted points before
/// the exact `W_1` computation.
pub fn stability_report<T: Scalar>(
    prior_true: &PointCloud<T>,
    prior_approx: &PointCloud<T>,
    spec: &LikelihoodSpec<T>,
    m_out: usize,
    seed: RngSeed,
) -> Result<StabilityReport<T>> {
    let (prior_w2, plan) = exact_wp(prior_true, prior_approx, 2)?;
    let true_post = reweight(prior_true, spec)?;
    let approx_post = reweight(prior_approx, spec)?;
    let a = resample(&true_post.cloud, m_out, seed.derive(0))?;
    let b = resample(&approx_post.cloud, m_out, seed.derive(1))?;
    let a2 = resample(&true_post.cloud, m_out, seed.derive(2))?;
    let b2 = resample(&approx_post.cloud, m_out, seed.derive(3))?;
    let (posterior_w1, _) = exact_wp(&a, &b, 1)?;
    let noise_floor = exact_wp(&a, &a2, 1)?.0 + exact_wp(&b, &b2, 1)?.0;
    let cstab_estimate = match spec.forward().lipschitz() {
        Some(_) => Some(cstab_from_plan(prior_true, prior_approx, &plan, spec)?),
        None => None,
    };
    let ratio = if prior_w2 > T::zero() {
        posterior_w1 / prior_w2
    } else {
        T::infinity()
    };
    Ok(StabilityReport {
        prior_w2,
        posterior_w1,
        cstab_estimate,
        ratio,
        noise_floor,
        ess_true: true_post.ess_fraction,
        ess_approx: approx_post.ess_fraction,
    })
}
