//! Exact and entropic optimal transport between point clouds.
//!
//! | Entry point | Method |
//! |-------------|--------|
//! | [`exact_wp`] | network simplex (sparse pricing for large clouds), assignment fast path |
//! | [`brute_force_wp`] | enumeration of all matchings, `n ≤ 8` |
//! | [`sinkhorn_divergence`] | debiased entropic divergence with support-point gradient |

mod assignment;
mod simplex;
pub mod sinkhorn;

use serde::{Deserialize, Serialize};

pub use assignment::solve_assignment;
pub use sinkhorn::{entropic_ot, entropic_ot_self, EntropicSolution, SinkhornParams};

use crate::error::{config, domain, Error, Result};
use crate::measures::PointCloud;
use crate::scalar::{compensated_sum, sq_dist, Scalar};
use simplex::NetworkSimplex;

/// Largest equal-size uniform problem routed to the dense assignment solver.
pub const ASSIGNMENT_MAX: usize = 1024;
/// Above this many arcs the simplex prices columns instead of storing all of them.
pub const DENSE_ARC_LIMIT: usize = 1 << 20;
const MAX_PIVOTS: usize = 50_000_000;

/// Coupling between two clouds, stored as its nonzero entries.
///
/// A basic optimal plan has at most `n + m - 1` nonzeros, so dense storage is
/// only materialized on request.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan<T> {
    /// `(source index, target index, mass)`, mass > 0.
    pub entries: Vec<(usize, usize, T)>,
    pub source_marginal: Vec<T>,
    pub target_marginal: Vec<T>,
    /// `Σ plan_ij · |x_i - y_j|^power`.
    pub cost: T,
    pub power: u32,
}

impl<T: Scalar> TransportPlan<T> {
    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.target_marginal.len()]; self.source_marginal.len()];
        for &(i, j, m) in &self.entries {
            d[i][j] += m;
        }
        d
    }

    pub fn row_sums(&self) -> Vec<T> {
        let mut r = vec![T::zero(); self.source_marginal.len()];
        for &(i, _, m) in &self.entries {
            r[i] += m;
        }
        r
    }

    pub fn col_sums(&self) -> Vec<T> {
        let mut c = vec![T::zero(); self.target_marginal.len()];
        for &(_, j, m) in &self.entries {
            c[j] += m;
        }
        c
    }

    /// Largest absolute deviation of a row or column sum from its marginal.
    pub fn max_marginal_violation(&self) -> T {
        let r = self.row_sums().iter().zip(&self.source_marginal).map(|(&x, &y)| (x - y).abs()).fold(T::zero(), T::max);
        let c = self.col_sums().iter().zip(&self.target_marginal).map(|(&x, &y)| (x - y).abs()).fold(T::zero(), T::max);
        r.max(c)
    }
}

/// Solver family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OtSolver {
    Exact,
    Sinkhorn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OtConfig {
    /// 1 → Euclidean ground cost, 2 → squared Euclidean.
    pub ground_power: u32,
    pub solver: OtSolver,
    /// Entropic regularization; required iff `solver` is `Sinkhorn`.
    pub epsilon: Option<f64>,
    pub max_iters: usize,
    pub tolerance: f64,
}

impl OtConfig {
    pub fn sinkhorn(epsilon: f64) -> Self {
        OtConfig {
            ground_power: 2,
            solver: OtSolver::Sinkhorn,
            epsilon: Some(epsilon),
            max_iters: 10_000,
            tolerance: 1e-9,
        }
    }

    pub fn exact(ground_power: u32) -> Self {
        OtConfig {
            ground_power,
            solver: OtSolver::Exact,
            epsilon: None,
            max_iters: MAX_PIVOTS,
            tolerance: 1e-9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.ground_power, 1 | 2) {
            return Err(config(format!("ground power must be 1 or 2, got {}", self.ground_power)));
        }
        if !(self.tolerance > 0.0) {
            return Err(config("tolerance must be positive"));
        }
        match (self.solver, self.epsilon) {
            (OtSolver::Sinkhorn, Some(e)) if e > 0.0 && e.is_finite() => Ok(()),
            (OtSolver::Sinkhorn, _) => Err(config("sinkhorn solver needs a positive epsilon")),
            (OtSolver::Exact, None) => Ok(()),
            (OtSolver::Exact, Some(_)) => Err(config("epsilon only applies to the sinkhorn solver")),
        }
    }
}

fn check_pair<T: Scalar>(a: &PointCloud<T>, b: &PointCloud<T>, p: u32) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(domain(format!("dimension mismatch: {} vs {}", a.dim(), b.dim())));
    }
    if !matches!(p, 1 | 2) {
        return Err(domain(format!("ground power must be 1 or 2, got {p}")));
    }
    Ok(())
}

#[inline]
fn ground<T: Scalar>(x: &[T], y: &[T], p: u32) -> T {
    let d2 = sq_dist(x, y);
    if p == 2 {
        d2
    } else {
        d2.sqrt()
    }
}

/// `W_p(a, b)` and an optimal coupling.
pub fn exact_wp<T: Scalar>(a: &PointCloud<T>, b: &PointCloud<T>, p: u32) -> Result<(T, TransportPlan<T>)> {
    let plan = exact_plan(a, b, p)?;
    let cost = plan.cost.max(T::zero());
    let d = if p == 2 { cost.sqrt() } else { cost };
    Ok((d, plan))
}

/// Optimal coupling for the ground cost `|x - y|^p`.
pub fn exact_plan<T: Scalar>(a: &PointCloud<T>, b: &PointCloud<T>, p: u32) -> Result<TransportPlan<T>> {
    check_pair(a, b, p)?;
    if a.len() == b.len() && a.len() <= ASSIGNMENT_MAX && a.is_uniform() && b.is_uniform() {
        return assignment_plan(a, b, p);
    }
    transport_plan(a, b, p)
}

fn assignment_plan<T: Scalar>(a: &PointCloud<T>, b: &PointCloud<T>, p: u32) -> Result<TransportPlan<T>> {
    let n = a.len();
    let mut c = Vec::with_capacity(n * n);
    for x in a.points() {
        for y in b.points() {
            c.push(ground(x, y, p));
        }
    }
    let perm = solve_assignment(n, &c)?;
    let mass = T::one() / T::count(n);
    let entries: Vec<_> = perm.iter().enumerate().map(|(i, &j)| (i, j, mass)).collect();
    let cost = compensated_sum(entries.iter().map(|&(i, j, m)| m * c[i * n + j]));
    Ok(TransportPlan {
        entries,
        source_marginal: a.weights().to_vec(),
        target_marginal: b.weights().to_vec(),
        cost,
        power: p,
    })
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Supplies for the simplex and the factor mapping flow back to mass.
///
/// Uniform clouds use integer supplies (`lcm / n`), which keeps every flow an
/// exactly representable integer.
fn supplies<T: Scalar>(a: &PointCloud<T>, b: &PointCloud<T>) -> (Vec<T>, T) {
    let (n, m) = (a.len() as u64, b.len() as u64);
    if a.is_uniform() && b.is_uniform() {
        let l = n / gcd(n, m) * m;
        if l < (1u64 << 40) {
            let sa = T::lit((l / n) as f64);
            let sb = T::lit((l / m) as f64);
            let mut s = vec![sa; n as usize];
            s.extend(std::iter::repeat(-sb).take(m as usize));
            return (s, T::one() / T::lit(l as f64));
        }
    }
    let mut s: Vec<T> = a.weights().to_vec();
    s.extend(b.weights().iter().map(|&w| -w));
    (s, T::one())
}

/// Upper bound on the ground cost between any pair of atoms.
fn cost_bound<T: Scalar>(a: &PointCloud<T>, b: &PointCloud<T>, p: u32) -> T {
    let d = a.dim();
    let mut lo = vec![T::infinity(); d];
    let mut hi = vec![T::neg_infinity(); d];
    for x in a.points().chain(b.points()) {
        for k in 0..d {
            lo[k] = lo[k].min(x[k]);
            hi[k] = hi[k].max(x[k]);
        }
    }
    let diam2 = lo.iter().zip(&hi).fold(T::zero(), |acc, (&l, &h)| acc + (h - l) * (h - l));
    if p == 2 {
        diam2
    } else {
        diam2.sqrt()
    }
}

fn transport_plan<T: Scalar>(a: &PointCloud<T>, b: &PointCloud<T>, p: u32) -> Result<TransportPlan<T>> {
    network_solve(a, b, p).map(|(plan, _)| plan)
}

/// Dual potentials `(u, v)` with `u_i + v_j ≤ c_ij`, tight on the plan support.
type Duals<T> = (Vec<T>, Vec<T>);

fn network_solve<T: Scalar>(a: &PointCloud<T>, b: &PointCloud<T>, p: u32) -> Result<(TransportPlan<T>, Duals<T>)> {
    let (n, m) = (a.len(), b.len());
    let (supply, unit) = supplies(a, b);
    let cmax = cost_bound(a, b, p);
    let art = (cmax + T::one()) * T::count(n + m + 1);
    let mut ns = NetworkSimplex::new(&supply, art);

    if n * m <= DENSE_ARC_LIMIT {
        for (i, x) in a.points().enumerate() {
            for (j, y) in b.points().enumerate() {
                ns.add_arc(i, n + j, ground(x, y, p));
            }
        }
        ns.run(MAX_PIVOTS)?;
    } else {
        let seeds = seed_arcs(a, b, p)?;
        for (i, j) in seeds {
            ns.add_arc(i, n + j, ground(a.point(i), b.point(j), p));
        }
        price_columns(a, b, p, &mut ns)?;
    }

    let art_flow = ns.artificial_flow();
    let total = compensated_sum(supply.iter().copied().filter(|s| *s > T::zero()));
    if art_flow > total * T::lit(1e-9) {
        return Err(Error::Numerical(format!(
            "transport solve left {art_flow} units on artificial arcs"
        )));
    }
    let entries: Vec<(usize, usize, T)> = ns.positive_flows().map(|(i, j, f)| (i, j - n, f * unit)).collect();
    let cost = compensated_sum(entries.iter().map(|&(i, j, mass)| mass * ground(a.point(i), b.point(j), p)));
    let u = (0..n).map(|i| -ns.potential(i)).collect();
    let v = (0..m).map(|j| ns.potential(n + j)).collect();
    let plan = TransportPlan {
        entries,
        source_marginal: a.weights().to_vec(),
        target_marginal: b.weights().to_vec(),
        cost,
        power: p,
    };
    Ok((plan, (u, v)))
}

/// Every `stride`-th point of `cloud`, reweighted.
fn thin<T: Scalar>(cloud: &PointCloud<T>, stride: usize) -> Result<PointCloud<T>> {
    let d = cloud.dim();
    let mut coords = Vec::with_capacity(cloud.coords().len() / 2 + d);
    let mut weights = Vec::with_capacity(cloud.len() / 2 + 1);
    for i in (0..cloud.len()).step_by(stride) {
        coords.extend_from_slice(cloud.point(i));
        weights.push(cloud.weight(i));
    }
    PointCloud::from_flat(d, coords, weights)
}

/// Ground costs from `x` to every point of `to`.
fn cost_row<T: Scalar>(x: &[T], to: &PointCloud<T>, p: u32, out: &mut Vec<T>) {
    out.clear();
    if let [x0, x1] = *x {
        out.extend(to.coords().chunks_exact(2).map(|y| {
            let (d0, d1) = (x0 - y[0], x1 - y[1]);
            d0 * d0 + d1 * d1
        }));
    } else {
        out.extend(to.points().map(|y| sq_dist(x, y)));
    }
    if p != 2 {
        out.iter_mut().for_each(|c| *c = c.sqrt());
    }
}

/// `out_j = min_i (c(x_i, y_j) - pot_i)` over the points of `xs`.
fn c_transform<T: Scalar>(xs: &PointCloud<T>, pot: &[T], ys: &PointCloud<T>, p: u32) -> Vec<T> {
    let mut row = Vec::with_capacity(xs.len());
    ys.points()
        .map(|y| {
            cost_row(y, xs, p, &mut row);
            row.iter().zip(pot).fold(T::infinity(), |acc, (&c, &u)| acc.min(c - u))
        })
        .collect()
}

/// The `k` indices with the smallest keys.
fn smallest<T: Scalar>(keys: &mut Vec<(T, usize)>, k: usize) -> impl Iterator<Item = usize> + '_ {
    if k < keys.len() {
        keys.select_nth_unstable_by(k - 1, |u, v| u.0.partial_cmp(&v.0).unwrap_or(std::cmp::Ordering::Equal));
        keys.truncate(k);
    }
    keys.iter().map(|&(_, j)| j)
}

/// Candidate arcs for a large problem: solve a subsampled problem exactly,
/// extend its potentials to all points by c-transforms, and keep the arcs
/// with the smallest reduced costs on each row and column.
fn seed_arcs<T: Scalar>(a: &PointCloud<T>, b: &PointCloud<T>, p: u32) -> Result<Vec<(usize, usize)>> {
    let (n, m) = (a.len(), b.len());
    let stride = |big: usize, small: usize| if big == small { 2 } else { (big / small).clamp(1, 4) };
    let ac = if n >= m { thin(a, stride(n, m))? } else { a.clone() };
    let bc = if m >= n { thin(b, stride(m, n))? } else { b.clone() };
    let (_, (uc, _)) = network_solve(&ac, &bc, p)?;
    let v = c_transform(&ac, &uc, b, p);
    let u = c_transform(b, &v, a, p);

    let ka = 2 * m.div_ceil(n) + 4;
    let kb = 2 * n.div_ceil(m) + 4;
    let mut arcs = Vec::with_capacity(n * ka + m * kb);
    let mut keys: Vec<(T, usize)> = Vec::with_capacity(n.max(m));
    let mut row = Vec::with_capacity(n.max(m));
    for (i, x) in a.points().enumerate() {
        cost_row(x, b, p, &mut row);
        keys.clear();
        keys.extend(row.iter().zip(&v).enumerate().map(|(j, (&c, &vj))| (c - vj, j)));
        arcs.extend(smallest(&mut keys, ka).map(|j| (i, j)));
    }
    for (j, y) in b.points().enumerate() {
        cost_row(y, a, p, &mut row);
        keys.clear();
        keys.extend(row.iter().zip(&u).enumerate().map(|(i, (&c, &ui))| (c - ui, i)));
        arcs.extend(smallest(&mut keys, kb).map(|i| (i, j)));
    }
    arcs.sort_unstable();
    arcs.dedup();
    Ok(arcs)
}

/// Column generation: starting from the seeded candidate arcs, add arcs with
/// negative reduced cost until none remain.
fn price_columns<T: Scalar>(a: &PointCloud<T>, b: &PointCloud<T>, p: u32, ns: &mut NetworkSimplex<T>) -> Result<()> {
    let (n, m) = (a.len(), b.len());
    let per_row = m.div_ceil(n) + 4;
    let per_col = n.div_ceil(m) + 1;
    let by_cost = |u: &(T, usize), v: &(T, usize)| u.0.partial_cmp(&v.0).unwrap_or(std::cmp::Ordering::Equal);
    let mut added: Vec<(T, usize)> = Vec::new();
    let mut col_best: Vec<Vec<(T, usize)>> = vec![Vec::new(); m];
    let mut row = Vec::with_capacity(m);
    let mut pib = vec![T::zero(); m];
    for _ in 0..1000 {
        ns.run(MAX_PIVOTS)?;
        let tol = ns.tolerance();
        let mut fresh: Vec<(usize, usize)> = Vec::new();
        col_best.iter_mut().for_each(|c| c.clear());
        for (j, pj) in pib.iter_mut().enumerate() {
            *pj = ns.potential(n + j);
        }
        for (i, x) in a.points().enumerate() {
            let pi_i = ns.potential(i);
            added.clear();
            cost_row(x, b, p, &mut row);
            for (j, (&c, &pj)) in row.iter().zip(&pib).enumerate() {
                let r = c + pi_i - pj;
                if r < -tol {
                    added.push((r, j));
                    let cb = &mut col_best[j];
                    if cb.len() < per_col {
                        cb.push((r, i));
                    } else if let Some(w) = cb.iter_mut().max_by(|u, v| by_cost(u, v)) {
                        if r < w.0 {
                            *w = (r, i);
                        }
                    }
                }
            }
            fresh.extend(smallest(&mut added, per_row).map(|j| (i, j)));
        }
        for (j, cb) in col_best.iter().enumerate() {
            fresh.extend(cb.iter().map(|&(_, i)| (i, j)));
        }
        fresh.sort_unstable();
        fresh.dedup();
        if fresh.is_empty() {
            return Ok(());
        }
        for (i, j) in fresh {
            ns.add_arc(i, n + j, ground(a.point(i), b.point(j), p));
        }
    }
    Err(Error::NonConvergence {
        solver: "column generation",
        iterations: 1000,
        residual: ns.artificial_flow().as_f64(),
    })
}

fn permutations_min<T: Scalar>(c: &[T], n: usize) -> T {
    // Heap's algorithm over column orders.
    let mut perm: Vec<usize> = (0..n).collect();
    let eval = |perm: &[usize]| compensated_sum(perm.iter().enumerate().map(|(i, &j)| c[i * n + j]));
    let mut best = eval(&perm);
    let mut cnt = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if cnt[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(cnt[i], i);
            }
            best = best.min(eval(&perm));
            cnt[i] += 1;
            i = 1;
        } else {
            cnt[i] = 0;
            i += 1;
        }
    }
    best
}

/// Exact `W_p` by enumerating all `n!` matchings of two uniform clouds, `n ≤ 8`.
pub fn brute_force_wp<T: Scalar>(a: &PointCloud<T>, b: &PointCloud<T>, p: u32) -> Result<T> {
    check_pair(a, b, p)?;
    let n = a.len();
    if n != b.len() {
        return Err(domain("brute force needs equal cloud sizes"));
    }
    if n > 8 {
        return Err(domain(format!("brute force refused for n = {n} > 8")));
    }
    if !(a.is_uniform() && b.is_uniform()) {
        return Err(domain("brute force needs uniform weights"));
    }
    let mut c = Vec::with_capacity(n * n);
    for x in a.points() {
        for y in b.points() {
            c.push(ground(x, y, p));
        }
    }
    let mean = permutations_min(&c, n) / T::count(n);
    Ok(if p == 2 { mean.sqrt() } else { mean })
}

/// Whether exact `W1 ≤ W2 + 1e-7`.
pub fn w1_le_w2_check<T: Scalar>(a: &PointCloud<T>, b: &PointCloud<T>) -> Result<bool> {
    let (w1, _) = exact_wp(a, b, 1)?;
    let (w2, _) = exact_wp(a, b, 2)?;
    Ok(w1 <= w2 + T::lit(1e-7))
}

/// Debiased Sinkhorn divergence `S_ε(a, b)` and its gradient with respect to
/// the support points of `a` (one `dim`-vector per point).
pub fn sinkhorn_divergence<T: Scalar>(a: &PointCloud<T>, b: &PointCloud<T>, cfg: &OtConfig) -> Result<(T, Vec<Vec<T>>)> {
    cfg.validate()?;
    if cfg.solver != OtSolver::Sinkhorn {
        return Err(config("sinkhorn_divergence needs the sinkhorn solver"));
    }
    check_pair(a, b, cfg.ground_power)?;
    let params = SinkhornParams {
        epsilon: T::lit(cfg.epsilon.unwrap_or_default()),
        max_iters: cfg.max_iters,
        tolerance: T::lit(cfg.tolerance),
    };
    let (value, flat) = sinkhorn::divergence_with_gradient(a, b, cfg.ground_power, params, true)?;
    let grad = flat.chunks_exact(a.dim()).map(<[T]>::to_vec).collect();
    Ok((value, grad))
}
