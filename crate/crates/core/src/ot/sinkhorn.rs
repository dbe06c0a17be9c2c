//! Log-domain Sinkhorn iterations with ε-scaling, and the debiased
//! Sinkhorn divergence with its gradient in the source support points.

use crate::error::{Error, Result};
use crate::linalg::{cholesky_in_place, cholesky_solve};
use crate::measures::PointCloud;
use crate::scalar::{dot as fast_dot, sq_dist, Scalar};

/// Dense ground cost `|x - y|^p` between two clouds, row-major.
pub(crate) fn cost_matrix<T: Scalar>(a: &PointCloud<T>, b: &PointCloud<T>, power: u32) -> Vec<T> {
    let mut c = Vec::with_capacity(a.len() * b.len());
    for x in a.points() {
        for y in b.points() {
            let d2 = sq_dist(x, y);
            c.push(if power == 2 { d2 } else { d2.sqrt() });
        }
    }
    c
}

/// Parameters of a single entropic solve.
#[derive(Debug, Clone, Copy)]
pub struct SinkhornParams<T> {
    pub epsilon: T,
    pub max_iters: usize,
    /// Stop when the L1 marginal violation drops below this value.
    pub tolerance: T,
}

/// Dual potentials of `min <π, C> + ε KL(π | a ⊗ b)`.
#[derive(Debug, Clone)]
pub struct EntropicSolution<T> {
    pub value: T,
    pub f: Vec<T>,
    pub g: Vec<T>,
    pub iterations: usize,
    pub marginal_error: T,
}

/// `-ε log Σ_j exp(h_j - c_j / ε)` for one row.
#[inline]
fn softmin_row<T: Scalar>(h: &[T], row: &[T], inv_eps: T, eps: T, buf: &mut [T]) -> T {
    let mut max = T::neg_infinity();
    for ((b, &hj), &c) in buf.iter_mut().zip(h).zip(row) {
        let v = hj - c * inv_eps;
        *b = v;
        if v > max {
            max = v;
        }
    }
    let mut s = T::zero();
    for &b in buf.iter() {
        s += (b - max).exp();
    }
    -eps * (max + s.ln())
}

struct Problem<'a, T> {
    c: &'a [T],
    ct: std::cell::OnceCell<Vec<T>>,
    symmetric: bool,
    log_a: Vec<T>,
    log_b: Vec<T>,
    n: usize,
    m: usize,
}

impl<'a, T: Scalar> Problem<'a, T> {
    fn new(c: &'a [T], a: &[T], b: &[T], symmetric: bool) -> Self {
        let (n, m) = (a.len(), b.len());
        Problem {
            c,
            ct: std::cell::OnceCell::new(),
            symmetric,
            log_a: a.iter().map(|w| w.ln()).collect(),
            log_b: b.iter().map(|w| w.ln()).collect(),
            n,
            m,
        }
    }

    /// New row potentials from column potentials.
    fn update_rows(&self, g: &[T], eps: T, out: &mut [T], buf: &mut [T]) {
        let inv = eps.recip();
        let h: Vec<T> = self.log_b.iter().zip(g).map(|(&lb, &gj)| lb + gj * inv).collect();
        for i in 0..self.n {
            out[i] = softmin_row(&h, &self.c[i * self.m..(i + 1) * self.m], inv, eps, &mut buf[..self.m]);
        }
    }

    fn update_cols(&self, f: &[T], eps: T, out: &mut [T], buf: &mut [T]) {
        let inv = eps.recip();
        let h: Vec<T> = self.log_a.iter().zip(f).map(|(&la, &fi)| la + fi * inv).collect();
        let src = if self.symmetric {
            self.c
        } else {
            self.ct.get_or_init(|| {
                let mut ct = vec![T::zero(); self.n * self.m];
                for i in 0..self.n {
                    for j in 0..self.m {
                        ct[j * self.n + i] = self.c[i * self.m + j];
                    }
                }
                ct
            })
        };
        for j in 0..self.m {
            out[j] = softmin_row(&h, &src[j * self.n..(j + 1) * self.n], inv, eps, &mut buf[..self.n]);
        }
    }
}

/// L1 row-marginal violation implied by replacing `old` with `new`.
fn violation<T: Scalar>(weights: &[T], old: &[T], new: &[T], eps: T) -> T {
    weights
        .iter()
        .zip(old.iter().zip(new))
        .fold(T::zero(), |acc, (&w, (&o, &nw))| acc + w * (T::one() - ((o - nw) / eps).exp()).abs())
}

fn schedule<T: Scalar>(c: &[T], target: T) -> Vec<T> {
    let cmax = c.iter().copied().fold(T::zero(), T::max);
    let mut eps = cmax.max(target);
    let mut out = Vec::new();
    while eps > target {
        out.push(eps);
        eps *= T::lit(0.5);
    }
    out.push(target);
    out
}

/// Scaling-form iterations on the kernel `K_ij = exp((f_i + g_j - C_ij)/ε)`
/// with the current potentials absorbed; `u`, `v` hold the remaining
/// multiplicative corrections and are folded back into the potentials when
/// they drift far from one.
struct Gibbs<'a, T> {
    c: &'a [T],
    n: usize,
    m: usize,
    eps: T,
    k: Vec<T>,
    u: Vec<T>,
    v: Vec<T>,
}

/// Fold the scalings into the potentials once `|ln u|` or `|ln v|` exceeds this.
const ABSORB: f64 = 30.0;

impl<'a, T: Scalar> Gibbs<'a, T> {
    fn new(c: &'a [T], n: usize, m: usize) -> Self {
        Gibbs {
            c,
            n,
            m,
            eps: T::one(),
            k: vec![T::zero(); n * m],
            u: vec![T::one(); n],
            v: vec![T::one(); m],
        }
    }

    /// Rebuilds the kernel for potentials `f`, `g` at temperature `eps`.
    fn rebuild(&mut self, f: &[T], g: &[T], eps: T) {
        self.eps = eps;
        let inv = eps.recip();
        for (i, row) in self.k.chunks_exact_mut(self.m).enumerate() {
            let crow = &self.c[i * self.m..(i + 1) * self.m];
            for ((kij, &cij), &gj) in row.iter_mut().zip(crow).zip(g) {
                *kij = ((f[i] + gj - cij) * inv).exp();
            }
        }
        self.u.iter_mut().for_each(|x| *x = T::one());
        self.v.iter_mut().for_each(|x| *x = T::one());
    }

    /// Moves the scalings into `f`, `g`.
    fn fold(&mut self, f: &mut [T], g: &mut [T]) {
        for (fi, &ui) in f.iter_mut().zip(&self.u) {
            *fi += self.eps * ui.ln();
        }
        for (gj, &vj) in g.iter_mut().zip(&self.v) {
            *gj += self.eps * vj.ln();
        }
    }

    fn drifted(&self) -> bool {
        let lim = T::lit(ABSORB);
        self.u.iter().chain(&self.v).any(|&x| !(x.ln().abs() < lim))
    }

    /// Row scaling update; returns the L1 row-marginal violation before it,
    /// or `None` if a row sum left the representable range.
    fn update_rows(&mut self, a: &[T], b: &[T]) -> Option<T> {
        let mut err = T::zero();
        let bv: Vec<T> = b.iter().zip(&self.v).map(|(&bj, &vj)| bj * vj).collect();
        for i in 0..self.n {
            let s = fast_dot(&self.k[i * self.m..(i + 1) * self.m], &bv);
            if !(s > T::zero()) || !s.is_finite() {
                return None;
            }
            err += a[i] * (T::one() - self.u[i] * s).abs();
            self.u[i] = s.recip();
        }
        Some(err)
    }

    fn update_cols(&mut self, a: &[T]) -> bool {
        let mut t = vec![T::zero(); self.m];
        for i in 0..self.n {
            let w = a[i] * self.u[i];
            let row = &self.k[i * self.m..(i + 1) * self.m];
            for (tj, &kij) in t.iter_mut().zip(row) {
                *tj += kij * w;
            }
        }
        for (vj, tj) in self.v.iter_mut().zip(t) {
            if !(tj > T::zero()) || !tj.is_finite() {
                return false;
            }
            *vj = tj.recip();
        }
        true
    }

    /// Symmetric averaged update `u ← sqrt(u / K(a∘u))`; returns the violation.
    fn update_symmetric(&mut self, a: &[T]) -> Option<T> {
        let mut err = T::zero();
        let mut next = vec![T::zero(); self.n];
        let au: Vec<T> = a.iter().zip(&self.u).map(|(&aj, &uj)| aj * uj).collect();
        for i in 0..self.n {
            let s = fast_dot(&self.k[i * self.n..(i + 1) * self.n], &au);
            if !(s > T::zero()) || !s.is_finite() {
                return None;
            }
            err += a[i] * (T::one() - self.u[i] * s).abs();
            next[i] = (self.u[i] / s).sqrt();
        }
        self.u = next;
        Some(err)
    }
}

/// Entropic OT between weight vectors `a`, `b` for a dense cost `c` (n × m).
pub fn entropic_ot<T: Scalar>(a: &[T], b: &[T], c: &[T], params: SinkhornParams<T>) -> Result<EntropicSolution<T>> {
    let (n, m) = (a.len(), b.len());
    let prob = Problem::new(c, a, b, false);
    let mut f = vec![T::zero(); n];
    let mut g = vec![T::zero(); m];
    let mut buf = vec![T::zero(); n.max(m)];
    let eps = params.epsilon;
    let mut iterations = 0;
    let mut gibbs = Gibbs::new(c, n, m);
    let stages = schedule(c, eps);
    for &e in &stages[..stages.len() - 1] {
        gibbs.rebuild(&f, &g, e);
        if gibbs.update_rows(a, b).is_some() && gibbs.update_cols(a) {
            gibbs.fold(&mut f, &mut g);
        } else {
            prob.update_rows(&g, e, &mut f, &mut buf);
            prob.update_cols(&f, e, &mut g, &mut buf);
        }
        iterations += 1;
    }
    gibbs.rebuild(&f, &g, eps);
    let mut err = T::infinity();
    let newton = m <= NEWTON_MAX;
    let plain = if newton { params.max_iters.min(NEWTON_AFTER) } else { params.max_iters };
    let mut done = 0;
    while done < plain {
        done += 1;
        iterations += 1;
        let step = gibbs.update_rows(a, b).filter(|_| gibbs.update_cols(a));
        match step {
            Some(e) => err = e,
            None => {
                // Kernel underflow: redo this sweep in the log domain and rebuild.
                gibbs.u.iter_mut().for_each(|x| *x = T::one());
                gibbs.v.iter_mut().for_each(|x| *x = T::one());
                let f_old = f.clone();
                prob.update_rows(&g, eps, &mut f, &mut buf);
                err = violation(a, &f_old, &f, eps);
                prob.update_cols(&f, eps, &mut g, &mut buf);
                gibbs.rebuild(&f, &g, eps);
            }
        }
        if err < params.tolerance {
            break;
        }
        if gibbs.drifted() {
            gibbs.fold(&mut f, &mut g);
            gibbs.rebuild(&f, &g, eps);
        }
    }
    gibbs.fold(&mut f, &mut g);
    if newton && !(err < params.tolerance) {
        let budget = params.max_iters.saturating_sub(plain);
        let (e, used) = newton_polish(&prob, a, b, eps, &mut f, &mut g, budget, params.tolerance)?;
        err = e;
        iterations += used;
    }
    if !(err < params.tolerance) {
        return Err(Error::NonConvergence {
            solver: "sinkhorn",
            iterations,
            residual: err.as_f64(),
        });
    }
    let value = dot(a, &f) + dot(b, &g);
    Ok(EntropicSolution {
        value,
        f,
        g,
        iterations,
        marginal_error: err,
    })
}

/// Entropic OT of a measure with itself; returns the symmetric potential.
pub fn entropic_ot_self<T: Scalar>(a: &[T], c: &[T], params: SinkhornParams<T>) -> Result<EntropicSolution<T>> {
    let n = a.len();
    let prob = Problem::new(c, a, a, true);
    let mut f = vec![T::zero(); n];
    let mut t = vec![T::zero(); n];
    let mut buf = vec![T::zero(); n];
    let eps = params.epsilon;
    let half = T::lit(0.5);
    let mut iterations = 0;
    let stages = schedule(c, eps);
    let mut gibbs = Gibbs::new(c, n, n);
    for &e in &stages[..stages.len() - 1] {
        gibbs.rebuild(&f, &f, e);
        if gibbs.update_symmetric(a).is_some() {
            for (fi, &ui) in f.iter_mut().zip(&gibbs.u) {
                *fi += e * ui.ln();
            }
        } else {
            prob.update_rows(&f, e, &mut t, &mut buf);
            for (fi, &ti) in f.iter_mut().zip(&t) {
                *fi = half * (*fi + ti);
            }
        }
        iterations += 1;
    }
    gibbs.rebuild(&f, &f, eps);
    let mut err = T::infinity();
    let newton = n <= NEWTON_MAX;
    let plain = if newton { params.max_iters.min(NEWTON_AFTER) } else { params.max_iters };
    let fold_sym = |gibbs: &mut Gibbs<'_, T>, f: &mut [T]| {
        for (fi, &ui) in f.iter_mut().zip(&gibbs.u) {
            *fi += eps * ui.ln();
        }
    };
    for _ in 0..plain {
        iterations += 1;
        match gibbs.update_symmetric(a) {
            Some(e) => err = e,
            None => {
                gibbs.u.iter_mut().for_each(|x| *x = T::one());
                prob.update_rows(&f, eps, &mut t, &mut buf);
                err = violation(a, &f, &t, eps);
                for (fi, &ti) in f.iter_mut().zip(&t) {
                    *fi = half * (*fi + ti);
                }
                gibbs.rebuild(&f, &f, eps);
            }
        }
        if err < params.tolerance {
            break;
        }
        if gibbs.drifted() {
            fold_sym(&mut gibbs, &mut f);
            gibbs.rebuild(&f, &f, eps);
        }
    }
    fold_sym(&mut gibbs, &mut f);
    if newton && !(err < params.tolerance) {
        let budget = params.max_iters.saturating_sub(plain);
        let mut g = f.clone();
        let (e, used) = newton_polish(&prob, a, a, eps, &mut t, &mut g, budget, params.tolerance)?;
        err = e;
        iterations += used;
        for ((fi, &ti), &gi) in f.iter_mut().zip(&t).zip(&g) {
            *fi = half * (ti + gi);
        }
        if err < params.tolerance {
            let value = dot(a, &t) + dot(a, &g);
            return Ok(EntropicSolution {
                value,
                f: f.clone(),
                g: f,
                iterations,
                marginal_error: err,
            });
        }
    }
    if !(err < params.tolerance) {
        return Err(Error::NonConvergence {
            solver: "symmetric sinkhorn",
            iterations,
            residual: err.as_f64(),
        });
    }
    // One last plain update makes the potential exactly self-consistent on rows.
    prob.update_rows(&f, eps, &mut t, &mut buf);
    let value = T::lit(2.0) * dot(a, &t);
    Ok(EntropicSolution {
        value,
        f: t.clone(),
        g: t,
        iterations,
        marginal_error: err,
    })
}

/// Problems with at most this many columns fall back to Newton steps.
const NEWTON_MAX: usize = 512;
/// Plain iterations before switching to Newton.
const NEWTON_AFTER: usize = 200;

/// `<a, f(g)> + <b, g>` with `f` the exact row update of `g`.
fn semi_dual<T: Scalar>(prob: &Problem<'_, T>, a: &[T], b: &[T], g: &[T], eps: T, f: &mut [T], buf: &mut [T]) -> T {
    prob.update_rows(g, eps, f, buf);
    dot(a, f) + dot(b, g)
}

/// Damped Newton ascent on the semi-dual in `g`, with the last entry of
/// `g` pinned to remove the shift invariance. Leaves `f = f(g)`.
/// Returns the final L1 column violation and the number of steps.
#[allow(clippy::too_many_arguments)]
fn newton_polish<T: Scalar>(
    prob: &Problem<'_, T>,
    a: &[T],
    b: &[T],
    eps: T,
    f: &mut [T],
    g: &mut [T],
    budget: usize,
    tol: T,
) -> Result<(T, usize)> {
    let (n, m) = (a.len(), b.len());
    let mut buf = vec![T::zero(); n.max(m)];
    let mut f_try = vec![T::zero(); n];
    let mut g_try = vec![T::zero(); m];
    let mut s = vec![T::zero(); n * m];
    let mut grad = vec![T::zero(); m];
    let k = m - 1;
    let mut hess = vec![T::zero(); k * k];
    let mut psi = semi_dual(prob, a, b, g, eps, f, &mut buf);
    let mut err = T::infinity();
    let inv = eps.recip();
    for step in 0..=budget {
        let mut col = vec![T::zero(); m];
        for i in 0..n {
            let row = &prob.c[i * m..(i + 1) * m];
            for j in 0..m {
                let v = b[j] * ((g[j] + f[i] - row[j]) * inv).exp();
                s[i * m + j] = v;
                col[j] += a[i] * v;
            }
        }
        err = T::zero();
        for j in 0..m {
            grad[j] = b[j] - col[j];
            err += grad[j].abs();
        }
        if err < tol || step == budget || k == 0 {
            return Ok((err, step));
        }
        hess.iter_mut().for_each(|h| *h = T::zero());
        for i in 0..n {
            let si = &s[i * m..i * m + k];
            for p in 0..k {
                let w = a[i] * si[p];
                if w == T::zero() {
                    continue;
                }
                let hp = &mut hess[p * k..(p + 1) * k];
                for q in 0..=p {
                    hp[q] -= w * si[q];
                }
            }
        }
        let mut diag_max = T::zero();
        for p in 0..k {
            hess[p * k + p] += col[p];
            diag_max = diag_max.max(hess[p * k + p]);
            for q in 0..p {
                hess[q * k + p] = hess[p * k + q];
            }
        }
        let ridge = diag_max * T::epsilon() * T::lit(64.0);
        for p in 0..k {
            hess[p * k + p] += ridge;
        }
        cholesky_in_place(&mut hess, k)?;
        let mut dir: Vec<T> = grad[..k].iter().map(|&v| v * eps).collect();
        cholesky_solve(&hess, k, &mut dir);
        let slope = dot(&grad[..k], &dir);
        let slack = T::epsilon() * T::lit(64.0) * (psi.abs() + T::one());
        let mut t = T::one();
        let mut accepted = false;
        for _ in 0..40 {
            for j in 0..k {
                g_try[j] = g[j] + t * dir[j];
            }
            g_try[k] = g[k];
            let next = semi_dual(prob, a, b, &g_try, eps, &mut f_try, &mut buf);
            if next - psi >= T::lit(1e-4) * t * slope - slack {
                g.copy_from_slice(&g_try);
                f.copy_from_slice(&f_try);
                psi = next;
                accepted = true;
                break;
            }
            t *= T::lit(0.5);
        }
        if !accepted {
            return Ok((err, step));
        }
    }
    Ok((err, budget))
}

fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).fold(T::zero(), |acc, (&a, &b)| acc + a * b)
}

/// `Σ_j s_ij ∇_x c(x_i, y_j)` with `s_i· = softmax_j(log b_j + (g_j - C_ij)/ε)`,
/// scaled by `a_i`. Accumulates `sign ·` result into `grad`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn accumulate_gradient<T: Scalar>(
    x: &PointCloud<T>,
    y: &PointCloud<T>,
    c: &[T],
    g: &[T],
    eps: T,
    power: u32,
    sign: T,
    grad: &mut [T],
) {
    let (n, m, d) = (x.len(), y.len(), x.dim());
    let inv = eps.recip();
    let h: Vec<T> = y.weights().iter().zip(g).map(|(&w, &gj)| w.ln() + gj * inv).collect();
    let mut s = vec![T::zero(); m];
    for i in 0..n {
        let row = &c[i * m..(i + 1) * m];
        let mut max = T::neg_infinity();
        for j in 0..m {
            let v = h[j] - row[j] * inv;
            s[j] = v;
            if v > max {
                max = v;
            }
        }
        let mut z = T::zero();
        for sj in s.iter_mut() {
            *sj = (*sj - max).exp();
            z += *sj;
        }
        let xi = x.point(i);
        let scale = sign * x.weight(i) / z;
        let gi = &mut grad[i * d..(i + 1) * d];
        for (j, yj) in y.points().enumerate() {
            let w = s[j] * scale;
            if power == 2 {
                for k in 0..d {
                    gi[k] += w * T::lit(2.0) * (xi[k] - yj[k]);
                }
            } else {
                let dist = row[j];
                if dist > T::zero() {
                    for k in 0..d {
                        gi[k] += w * (xi[k] - yj[k]) / dist;
                    }
                }
            }
        }
    }
}

/// Debiased divergence and its gradient w.r.t. the points of `a` (row-major).
pub fn divergence_with_gradient<T: Scalar>(
    a: &PointCloud<T>,
    b: &PointCloud<T>,
    power: u32,
    params: SinkhornParams<T>,
    with_bb: bool,
) -> Result<(T, Vec<T>)> {
    let c_ab = cost_matrix(a, b, power);
    let c_aa = cost_matrix(a, a, power);
    let ab = entropic_ot(a.weights(), b.weights(), &c_ab, params)?;
    let aa = entropic_ot_self(a.weights(), &c_aa, params)?;
    let bb_value = if with_bb {
        let c_bb = cost_matrix(b, b, power);
        entropic_ot_self(b.weights(), &c_bb, params)?.value
    } else {
        T::zero()
    };
    let half = T::lit(0.5);
    let value = ab.value - half * aa.value - half * bb_value;
    let mut grad = vec![T::zero(); a.len() * a.dim()];
    accumulate_gradient(a, b, &c_ab, &ab.g, params.epsilon, power, T::one(), &mut grad);
    accumulate_gradient(a, a, &c_aa, &aa.f, params.epsilon, power, -T::one(), &mut grad);
    Ok((value, grad))
}
