//! Small dense linear algebra helpers.

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

/// In-place Cholesky factorization of a symmetric positive definite
/// row-major `n × n` matrix; the lower triangle holds `L` afterwards.
pub fn cholesky_in_place<T: Scalar>(a: &mut [T], n: usize) -> Result<()> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > T::zero()) {
            return Err(Error::Numerical(format!("matrix not positive definite at pivot {j}")));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Ok(())
}

/// Solves `L Lᵀ x = b` given the factor from [`cholesky_in_place`].
pub fn cholesky_solve<T: Scalar>(l: &[T], n: usize, b: &mut [T]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Symmetric positive definite band matrix, lower half stored by rows:
/// entry `(i, j)` with `i - bw ≤ j ≤ i` lives at `i * (bw + 1) + j + bw - i`.
#[derive(Debug, Clone)]
pub struct BandMatrix<T> {
    n: usize,
    bw: usize,
    data: Vec<T>,
}

impl<T: Scalar> BandMatrix<T> {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix { n, bw, data: vec![T::zero(); n * (bw + 1)] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Adds `v` to entry `(i, j)`, `j ≤ i`, `i - j ≤ bw`.
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        debug_assert!(j <= i && i - j <= self.bw);
        self.data[i * (self.bw + 1) + j + self.bw - i] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        if i - j > self.bw {
            return T::zero();
        }
        self.data[i * (self.bw + 1) + j + self.bw - i]
    }

    /// `A x` using both halves.
    pub fn mul(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        let w = self.bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let row = &self.data[i * w + lo + self.bw - i..(i + 1) * w];
            y[i] += dot(row, &x[lo..=i]);
            for (k, &a) in row[..row.len() - 1].iter().enumerate() {
                y[lo + k] += a * x[i];
            }
        }
        y
    }

    /// In-place band Cholesky; costs `n · bw²`.
    pub fn factor(mut self) -> Result<BandCholesky<T>> {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let k0 = lo.max(j.saturating_sub(bw));
                let ri = i * w + bw - i;
                let rj = j * w + bw - j;
                let s = self.data[ri + j] - dot(&self.data[ri + k0..ri + j], &self.data[rj + k0..rj + j]);
                if i == j {
                    if !(s > T::zero()) {
                        return Err(Error::Numerical(format!("band matrix not positive definite at pivot {i}")));
                    }
                    self.data[ri + i] = s.sqrt();
                } else {
                    self.data[ri + j] = s / self.data[rj + j];
                }
            }
        }
        Ok(BandCholesky { n, bw, data: self.data })
    }
}

/// Factor `L` of a [`BandMatrix`], same storage.
#[derive(Debug, Clone)]
pub struct BandCholesky<T> {
    n: usize,
    bw: usize,
    data: Vec<T>,
}

impl<T: Scalar> BandCholesky<T> {
    pub fn solve(&self, b: &mut [T]) {
        let (bw, w) = (self.bw, self.bw + 1);
        for i in 0..self.n {
            let lo = i.saturating_sub(bw);
            let ri = i * w + bw - i;
            let s = b[i] - dot(&self.data[ri + lo..ri + i], &b[lo..i]);
            b[i] = s / self.data[ri + i];
        }
        for i in (0..self.n).rev() {
            let ri = i * w + bw - i;
            b[i] /= self.data[ri + i];
            let lo = i.saturating_sub(bw);
            let bi = b[i];
            for (k, &l) in self.data[ri + lo..ri + i].iter().enumerate() {
                b[lo + k] -= l * bi;
            }
        }
    }
}

/// Jacobi-preconditioned conjugate gradients for `A x = b`, starting at zero.
/// Stops when `|r| ≤ tol |b|`.
pub fn pcg<T: Scalar>(
    apply: impl Fn(&[T]) -> Vec<T>,
    diag: &[T],
    b: &[T],
    tol: T,
    max_iters: usize,
) -> Result<Vec<T>> {
    let n = b.len();
    let mut x = vec![T::zero(); n];
    let bnorm = dot(b, b).sqrt();
    if bnorm == T::zero() {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<T> = r.iter().zip(diag).map(|(&ri, &d)| ri / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 0..max_iters {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return Err(Error::Numerical(format!("conjugate gradients broke down at iteration {it}")));
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rn = dot(&r, &r).sqrt();
        if rn <= tol * bnorm {
            return Ok(x);
        }
        z.iter_mut().zip(&r).zip(diag).for_each(|((zk, &rk), &d)| *zk = rk / d);
        let next = dot(&r, &z);
        let beta = next / rz;
        rz = next;
        p.iter_mut().zip(&z).for_each(|(pk, &zk)| *pk = zk + beta * *pk);
    }
    Err(Error::NonConvergence {
        solver: "conjugate gradients",
        iterations: max_iters,
        residual: (dot(&r, &r).sqrt() / bnorm).as_f64(),
    })
}

/// Largest singular value of a row-major `rows × cols` matrix (power iteration on `AᵀA`).
pub fn spectral_norm<T: Scalar>(a: &[T], rows: usize, cols: usize) -> T {
    if rows == 0 || cols == 0 {
        return T::zero();
    }
    let mut v: Vec<T> = (0..cols).map(|k| T::one() + T::lit(0.01) * T::count(k)).collect();
    let mut sigma = T::zero();
    for _ in 0..1000 {
        let av: Vec<T> = (0..rows)
            .map(|r| (0..cols).fold(T::zero(), |s, c| s + a[r * cols + c] * v[c]))
            .collect();
        let mut w: Vec<T> = (0..cols)
            .map(|c| (0..rows).fold(T::zero(), |s, r| s + a[r * cols + c] * av[r]))
            .collect();
        let nw = w.iter().fold(T::zero(), |s, &x| s + x * x).sqrt();
        if nw == T::zero() {
            return T::zero();
        }
        w.iter_mut().for_each(|x| *x /= nw);
        let next = nw.sqrt();
        let done = (next - sigma).abs() <= T::epsilon() * T::lit(16.0) * next;
        sigma = next;
        v = w;
        if done {
            break;
        }
    }
    sigma
}

/// Eigen-decomposition of a symmetric row-major `n × n` matrix by cyclic
/// Jacobi rotations. Returns eigenvalues in decreasing order and the matching
/// unit eigenvectors as rows.
pub fn symmetric_eigen<T: Scalar>(a: &[T], n: usize) -> (Vec<T>, Vec<Vec<T>>) {
    let mut a = a.to_vec();
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }
    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .fold(T::zero(), |s, (i, j)| s + a[i * n + j] * a[i * n + j]);
        let diag: T = (0..n).fold(T::zero(), |s, i| s + a[i * n + i] * a[i * n + i]);
        if off <= T::epsilon() * T::epsilon() * diag || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = (t * t + T::one()).sqrt().recip();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].partial_cmp(&a[i * n + i]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k * n + i]).collect()).collect();
    (values, vectors)
}
