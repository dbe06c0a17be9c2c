//! Residual transport maps `T = (id + G_K) ∘ ... ∘ (id + G_1) ∘ lift` and
//! their minimum-divergence training.

mod io;
mod train;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{domain, Result};
use crate::measures::PointCloud;
use crate::rng::Rng;
use crate::scalar::{compensated_sum, dot, Scalar};

pub use train::{stage_loss_gradient, train, Objective, Optimizer, TrainConfig, TrainReport};

/// Negative-side slope of the leaky activation.
pub const LEAKY_SLOPE: f64 = 0.2;

#[inline]
fn leaky<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x * T::lit(LEAKY_SLOPE)
    }
}

#[inline]
fn leaky_slope<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        T::lit(LEAKY_SLOPE)
    }
}

/// Fully connected network `R^d → R^d` with leaky activations between layers.
///
/// Parameters are stored layer by layer, each as a row-major `out × in`
/// weight matrix followed by the `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    widths: Vec<usize>,
    params: Vec<T>,
}

/// Activations kept from a batched forward pass.
#[derive(Debug, Default)]
pub(crate) struct Tape<T> {
    /// Input to each layer, `batch × widths[l]`.
    inputs: Vec<Vec<T>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Vec<T>>,
}

impl<T: Scalar> Mlp<T> {
    /// All-zero network, i.e. `G ≡ 0`.
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 {
            return Err(domain("an MLP needs at least input and output widths"));
        }
        if widths.first() != widths.last() {
            return Err(domain("residual blocks must map a space to itself"));
        }
        if widths.contains(&0) {
            return Err(domain("layer widths must be positive"));
        }
        let count = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Mlp {
            widths: widths.to_vec(),
            params: vec![T::zero(); count],
        })
    }

    /// He-scaled Gaussian hidden layers and a zero output layer, so the
    /// block starts as the identity residual. First-layer biases are standard
    /// normal, which spreads the kinks over the data instead of stacking them
    /// at the origin.
    pub fn init(widths: &[usize], rng: &mut Rng) -> Result<Self> {
        let mut mlp = Self::zeros(widths)?;
        let layers = mlp.layers();
        for l in 0..layers - 1 {
            let (fan_in, fan_out) = (mlp.widths[l], mlp.widths[l + 1]);
            let off = mlp.offset(l);
            let scale = (2.0 / fan_in as f64).sqrt();
            for w in &mut mlp.params[off..off + fan_in * fan_out] {
                let z: f64 = StandardNormal.sample(rng);
                *w = T::lit(scale * z);
            }
            if l == 0 && layers > 1 {
                for b in &mut mlp.params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out] {
                    let z: f64 = StandardNormal.sample(rng);
                    *b = T::lit(z);
                }
            }
        }
        Ok(mlp)
    }

    pub fn from_params(widths: &[usize], params: Vec<T>) -> Result<Self> {
        let mut mlp = Self::zeros(widths)?;
        if params.len() != mlp.params.len() {
            return Err(domain(format!("expected {} parameters, got {}", mlp.params.len(), params.len())));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(domain("non-finite parameter"));
        }
        mlp.params = params;
        Ok(mlp)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn dim(&self) -> usize {
        self.widths[0]
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    fn offset(&self, layer: usize) -> usize {
        self.widths[..=layer].windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Resets the output layer to zero, turning the block back into the identity.
    pub fn reset_output(&mut self) {
        let l = self.layers() - 1;
        let off = self.offset(l);
        let end = off + self.widths[l] * self.widths[l + 1] + self.widths[l + 1];
        self.params[off..end].iter_mut().for_each(|p| *p = T::zero());
    }

    /// One dense layer on a batch: `out = in · Wᵀ + b`.
    fn affine(&self, layer: usize, input: &[T], batch: usize, out: &mut Vec<T>) {
        let (fi, fo) = (self.widths[layer], self.widths[layer + 1]);
        let off = self.offset(layer);
        let (w, b) = self.params[off..off + fi * fo + fo].split_at(fi * fo);
        out.clear();
        out.reserve(batch * fo);
        for x in input.chunks_exact(fi).take(batch) {
            for (o, &bo) in b.iter().enumerate() {
                let row = &w[o * fi..(o + 1) * fi];
                out.push(bo + dot(row, x));
            }
        }
    }

    /// `x ← x + G(x)` for every row of a batch.
    pub(crate) fn apply_in_place(&self, x: &mut [T]) {
        let batch = x.len() / self.dim();
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for l in 0..self.layers() {
            self.affine(l, &cur, batch, &mut next);
            if l + 1 < self.layers() {
                next.iter_mut().for_each(|v| *v = leaky(*v));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        for (xi, gi) in x.iter_mut().zip(&cur) {
            *xi += *gi;
        }
    }

    /// Batched `x + G(x)`, recording what the backward pass needs.
    pub(crate) fn forward_taped(&self, x: &[T], tape: &mut Tape<T>) -> Vec<T> {
        let batch = x.len() / self.dim();
        tape.inputs.clear();
        tape.pre.clear();
        let mut cur = x.to_vec();
        for l in 0..self.layers() {
            let mut next = Vec::new();
            self.affine(l, &cur, batch, &mut next);
            tape.inputs.push(cur);
            if l + 1 < self.layers() {
                tape.pre.push(next.clone());
                next.iter_mut().for_each(|v| *v = leaky(*v));
            }
            cur = next;
        }
        cur.iter_mut().zip(x).for_each(|(g, &xi)| *g += xi);
        cur
    }

    /// Given `dL/dy` for `y = x + G(x)`, accumulates `dL/dθ` into `grad`
    /// and, if requested, writes `dL/dx` into `d_input`.
    pub(crate) fn backward(&self, tape: &Tape<T>, d_out: &[T], grad: &mut [T], d_input: Option<&mut [T]>) {
        let batch = d_out.len() / self.dim();
        let mut delta = d_out.to_vec();
        for l in (0..self.layers()).rev() {
            let (fi, fo) = (self.widths[l], self.widths[l + 1]);
            let off = self.offset(l);
            let input = &tape.inputs[l];
            {
                let (gw, gb) = grad[off..off + fi * fo + fo].split_at_mut(fi * fo);
                for (dz, a) in delta.chunks_exact(fo).zip(input.chunks_exact(fi)) {
                    for (o, &d) in dz.iter().enumerate() {
                        if d == T::zero() {
                            continue;
                        }
                        gb[o] += d;
                        for (g, &ai) in gw[o * fi..(o + 1) * fi].iter_mut().zip(a) {
                            *g += d * ai;
                        }
                    }
                }
            }
            if l == 0 && d_input.is_none() {
                break;
            }
            let w = &self.params[off..off + fi * fo];
            let mut prev = vec![T::zero(); batch * fi];
            for (dz, da) in delta.chunks_exact(fo).zip(prev.chunks_exact_mut(fi)) {
                for (o, &d) in dz.iter().enumerate() {
                    if d == T::zero() {
                        continue;
                    }
                    for (p, &wi) in da.iter_mut().zip(&w[o * fi..(o + 1) * fi]) {
                        *p += d * wi;
                    }
                }
            }
            if l > 0 {
                for (p, &z) in prev.iter_mut().zip(&tape.pre[l - 1]) {
                    *p *= leaky_slope(z);
                }
            }
            delta = prev;
        }
        if let Some(d_in) = d_input {
            for ((di, &dy), &dg) in d_in.iter_mut().zip(d_out).zip(&delta) {
                *di = dy + dg;
            }
        }
    }
}

/// Affine map from the latent space into the output space.
#[derive(Debug, Clone, PartialEq)]
pub struct Lift<T> {
    /// Row-major `output_dim × latent_dim`.
    pub matrix: Vec<T>,
    pub bias: Vec<T>,
}

/// Composition of residual stages, optionally preceded by a linear lift.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualMapStack<T> {
    latent_dim: usize,
    output_dim: usize,
    lift: Option<Lift<T>>,
    stages: Vec<Mlp<T>>,
}

/// Pushforwards are evaluated in chunks of this many points.
const CHUNK: usize = 1024;

impl<T: Scalar> ResidualMapStack<T> {
    /// The identity on `R^dim`.
    pub fn identity(dim: usize) -> Self {
        ResidualMapStack {
            latent_dim: dim,
            output_dim: dim,
            lift: None,
            stages: Vec::new(),
        }
    }

    pub fn new(latent_dim: usize, output_dim: usize, lift: Option<Lift<T>>, stages: Vec<Mlp<T>>) -> Result<Self> {
        if latent_dim == 0 || output_dim == 0 {
            return Err(domain("dimensions must be positive"));
        }
        match &lift {
            Some(l) => {
                if l.matrix.len() != latent_dim * output_dim || l.bias.len() != output_dim {
                    return Err(domain("lift shape does not match the dimensions"));
                }
                if l.matrix.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                    return Err(domain("non-finite lift parameter"));
                }
            }
            None if latent_dim != output_dim => {
                return Err(domain("a lift is required when latent and output dimensions differ"));
            }
            None => {}
        }
        if let Some(s) = stages.iter().find(|s| s.dim() != output_dim) {
            return Err(domain(format!("stage of dimension {} in a stack of dimension {output_dim}", s.dim())));
        }
        Ok(ResidualMapStack {
            latent_dim,
            output_dim,
            lift,
            stages,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn lift(&self) -> Option<&Lift<T>> {
        self.lift.as_ref()
    }

    pub fn stages(&self) -> &[Mlp<T>] {
        &self.stages
    }

    pub fn stages_mut(&mut self) -> &mut [Mlp<T>] {
        &mut self.stages
    }

    pub fn push_stage(&mut self, stage: Mlp<T>) -> Result<()> {
        if stage.dim() != self.output_dim {
            return Err(domain("stage dimension does not match the stack"));
        }
        self.stages.push(stage);
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let lift = self.lift.as_ref().map_or(0, |l| l.matrix.len() + l.bias.len());
        lift + self.stages.iter().map(Mlp::param_count).sum::<usize>()
    }

    /// Applies the lift to a batch of latent points.
    pub(crate) fn lift_batch(&self, z: &[T]) -> Vec<T> {
        match &self.lift {
            None => z.to_vec(),
            Some(l) => {
                let mut out = Vec::with_capacity(z.len() / self.latent_dim * self.output_dim);
                for zi in z.chunks_exact(self.latent_dim) {
                    for (row, &b) in l.matrix.chunks_exact(self.latent_dim).zip(&l.bias) {
                        out.push(row.iter().zip(zi).fold(b, |acc, (&m, &v)| acc + m * v));
                    }
                }
                out
            }
        }
    }

    /// Maps a batch of latent points through the lift and the first `stages` stages.
    pub(crate) fn partial_batch(&self, z: &[T], stages: usize) -> Vec<T> {
        let mut x = self.lift_batch(z);
        for chunk in x.chunks_mut(CHUNK * self.output_dim) {
            for s in &self.stages[..stages] {
                s.apply_in_place(chunk);
            }
        }
        x
    }

    /// `T(z)`.
    pub fn forward(&self, z: &[T]) -> Result<Vec<T>> {
        if z.len() != self.latent_dim {
            return Err(domain(format!("input of length {} for latent dimension {}", z.len(), self.latent_dim)));
        }
        Ok(self.partial_batch(z, self.stages.len()))
    }

    /// `T#reference`: every atom mapped, weights kept bitwise.
    pub fn pushforward_cloud(&self, reference: &PointCloud<T>) -> Result<PointCloud<T>> {
        if reference.dim() != self.latent_dim {
            return Err(domain(format!(
                "reference of dimension {} for latent dimension {}",
                reference.dim(),
                self.latent_dim
            )));
        }
        let x = self.partial_batch(reference.coords(), self.stages.len());
        reference.with_coords(self.output_dim, x)
    }
}

/// `‖A − B‖_{L²(reference)}`.
pub fn map_l2_distance<T: Scalar>(
    a: &ResidualMapStack<T>,
    b: &ResidualMapStack<T>,
    reference: &PointCloud<T>,
) -> Result<T> {
    if a.output_dim != b.output_dim {
        return Err(domain("maps have different output dimensions"));
    }
    let pa = a.pushforward_cloud(reference)?;
    let pb = b.pushforward_cloud(reference)?;
    let sq = compensated_sum(
        pa.points()
            .zip(pb.points())
            .zip(reference.weights())
            .map(|((x, y), &w)| w * crate::scalar::sq_dist(x, y)),
    );
    Ok(sq.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::sample_gaussian;
    use crate::rng::RngSeed;

    fn random_stack(seed: u64) -> ResidualMapStack<f64> {
        let mut rng = RngSeed(seed).rng();
        let mut stack = ResidualMapStack::identity(2);
        for _ in 0..2 {
            let mut s = Mlp::init(&[2, 8, 8, 2], &mut rng).unwrap();
            for p in s.params_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *p += 0.3 * z;
            }
            stack.push_stage(s).unwrap();
        }
        stack
    }

    #[test]
    fn zero_parameters_give_identity() {
        let mut stack = ResidualMapStack::<f64>::identity(3);
        stack.push_stage(Mlp::zeros(&[3, 5, 3]).unwrap()).unwrap();
        assert_eq!(stack.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn fresh_stage_is_identity() {
        let mut rng = RngSeed(3).rng();
        let s = Mlp::<f64>::init(&[2, 16, 16, 2], &mut rng).unwrap();
        let mut stack = ResidualMapStack::identity(2);
        stack.push_stage(s).unwrap();
        assert_eq!(stack.forward(&[0.3, 0.7]).unwrap(), vec![0.3, 0.7]);
    }

    #[test]
    fn constant_residual_shifts() {
        // Output layer weights zero, bias c: G ≡ c.
        let mut mlp = Mlp::<f64>::zeros(&[2, 2]).unwrap();
        mlp.params_mut()[4] = 1.5;
        mlp.params_mut()[5] = -0.5;
        let mut stack = ResidualMapStack::identity(2);
        stack.push_stage(mlp).unwrap();
        assert_eq!(stack.forward(&[1.0, 1.0]).unwrap(), vec![2.5, 0.5]);
    }

    #[test]
    fn random_maps_stay_finite() {
        let stack = random_stack(11);
        let cloud: PointCloud<f64> = sample_gaussian(2, 10_000, RngSeed(12)).unwrap();
        let out = stack.pushforward_cloud(&cloud).unwrap();
        assert!(out.coords().iter().all(|v| v.is_finite()));
        assert_eq!(out.weights(), cloud.weights());
    }

    #[test]
    fn single_point_and_batch_agree() {
        let stack = random_stack(5);
        let cloud: PointCloud<f64> = sample_gaussian(2, 50, RngSeed(6)).unwrap();
        let out = stack.pushforward_cloud(&cloud).unwrap();
        for (z, x) in cloud.points().zip(out.points()) {
            assert_eq!(stack.forward(z).unwrap(), x);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let stack = ResidualMapStack::<f64>::identity(2);
        assert!(stack.forward(&[1.0]).is_err());
        assert!(ResidualMapStack::<f64>::new(2, 3, None, vec![]).is_err());
        assert!(Mlp::<f64>::zeros(&[2, 4, 3]).is_err());
    }

    #[test]
    fn lift_changes_dimension() {
        let lift = Lift {
            matrix: vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0],
            bias: vec![0.0, 0.0, 1.0],
        };
        let stack = ResidualMapStack::<f64>::new(2, 3, Some(lift), vec![]).unwrap();
        assert_eq!(stack.forward(&[2.0, 3.0]).unwrap(), vec![2.0, 3.0, 6.0]);
    }

    #[test]
    fn l2_distance_of_shift_is_its_norm() {
        let cloud: PointCloud<f64> = sample_gaussian(2, 100, RngSeed(1)).unwrap();
        let id = ResidualMapStack::identity(2);
        let mut shift = ResidualMapStack::identity(2);
        let mut mlp = Mlp::zeros(&[2, 2]).unwrap();
        mlp.params_mut()[4] = 3.0;
        mlp.params_mut()[5] = 4.0;
        shift.push_stage(mlp).unwrap();
        assert!((map_l2_distance(&id, &shift, &cloud).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(map_l2_distance(&shift, &shift, &cloud).unwrap(), 0.0);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = RngSeed(21).rng();
        let mut mlp = Mlp::<f64>::init(&[2, 5, 4, 2], &mut rng).unwrap();
        for p in mlp.params_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *p += 0.5 * z;
        }
        let x = vec![0.3, -1.2, 0.8, 0.1, -0.4, 2.0];
        let dy = vec![1.0, -0.5, 0.2, 0.7, -1.1, 0.4];
        let loss = |m: &Mlp<f64>, x: &[f64]| -> f64 {
            let mut tape = Tape::default();
            m.forward_taped(x, &mut tape).iter().zip(&dy).map(|(a, b)| a * b).sum()
        };
        let mut tape = Tape::default();
        mlp.forward_taped(&x, &mut tape);
        let mut grad = vec![0.0; mlp.param_count()];
        let mut dx = vec![0.0; x.len()];
        mlp.backward(&tape, &dy, &mut grad, Some(&mut dx));
        let h = 1e-6;
        for k in 0..mlp.param_count() {
            let mut p = mlp.clone();
            p.params_mut()[k] += h;
            let mut q = mlp.clone();
            q.params_mut()[k] -= h;
            let fd = (loss(&p, &x) - loss(&q, &x)) / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-6, "param {k}: {fd} vs {}", grad[k]);
        }
        for k in 0..x.len() {
            let mut xp = x.clone();
            xp[k] += h;
            let mut xm = x.clone();
            xm[k] -= h;
            let fd = (loss(&mlp, &xp) - loss(&mlp, &xm)) / (2.0 * h);
            assert!((fd - dx[k]).abs() < 1e-6, "input {k}: {fd} vs {}", dx[k]);
        }
    }
}
