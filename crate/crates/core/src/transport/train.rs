//! Greedy sequential training of residual stages, either against a minibatch
//! Sinkhorn divergence or by regression onto exact-OT barycentric targets.

use rand::distr::weighted::WeightedIndex;
use rand::Rng as _;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use super::{Lift, Mlp, ResidualMapStack, Tape};
use crate::error::{config, domain, Error, Result};
use crate::linalg::symmetric_eigen;
use crate::measures::PointCloud;
use crate::ot::sinkhorn::divergence_with_gradient;
use crate::ot::{exact_plan, SinkhornParams};
use crate::rng::{Rng, RngSeed};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64 },
}

/// What each stage minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Debiased Sinkhorn divergence between a generated and a target minibatch.
    Sinkhorn,
    /// Least-squares regression onto fixed targets: at the start of a stage,
    /// `fit_size` pushed reference points are matched to (at most `fit_size`
    /// points of) the target cloud by exact OT, and each is assigned the
    /// barycentric projection of its row of the plan.
    Regression { fit_size: usize },
}

impl Objective {
    pub fn regression() -> Self {
        Objective::Regression { fit_size: 4096 }
    }
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Minibatch steps per stage.
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning rate at the last step of a stage as a fraction of the first;
    /// the rate decays geometrically in between. 1 keeps it constant.
    #[serde(default = "unit")]
    pub lr_decay: f64,
    pub stage_count: usize,
    /// Hidden widths of every stage; empty makes each stage affine.
    pub hidden: Vec<usize>,
    /// Knots of a geometric interpolation of ε over each stage's epochs.
    pub epsilon_schedule: Vec<f64>,
    /// Kept for parity with adversarial protocols; has no effect here.
    pub generator_update_period: usize,
    pub optimizer: Optimizer,
    #[serde(default = "sinkhorn_objective")]
    pub objective: Objective,
    pub sinkhorn_max_iters: usize,
    /// L1 marginal violation accepted from each inner Sinkhorn solve.
    pub sinkhorn_tolerance: f64,
    /// Size of the fixed held-out pair used to accept or reset a stage.
    pub eval_size: usize,
    /// Steps of joint fine-tuning over all stages after the greedy pass.
    pub joint_epochs: usize,
    pub seed: RngSeed,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10_000,
            batch_size: 512,
            learning_rate: 0.01,
            lr_decay: 1.0,
            stage_count: 5,
            hidden: vec![128, 128],
            epsilon_schedule: vec![1.0, 0.05],
            generator_update_period: 20,
            optimizer: Optimizer::Sgd,
            objective: Objective::Sinkhorn,
            sinkhorn_max_iters: 2000,
            sinkhorn_tolerance: 1e-3,
            eval_size: 1024,
            joint_epochs: 0,
            seed: RngSeed(0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(config("epochs must be at least 1"));
        }
        if self.batch_size < 2 {
            return Err(config("batch size must be at least 2"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(config("learning rate must be positive"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(config("learning-rate decay must lie in (0, 1]"));
        }
        if self.epsilon_schedule.is_empty() || self.epsilon_schedule.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(config("epsilon schedule must be a nonempty list of positive values"));
        }
        if self.hidden.contains(&0) {
            return Err(config("hidden widths must be positive"));
        }
        if !(self.sinkhorn_tolerance > 0.0) || self.sinkhorn_max_iters == 0 {
            return Err(config("sinkhorn tolerance and iteration budget must be positive"));
        }
        if let Objective::Regression { fit_size } = self.objective {
            if fit_size < 2 {
                return Err(config("regression fit size must be at least 2"));
            }
        }
        if self.eval_size < 2 {
            return Err(config("evaluation size must be at least 2"));
        }
        Ok(())
    }

    /// Learning rate at a given step of a stage.
    pub fn learning_rate_at(&self, epoch: usize, epochs: usize) -> f64 {
        if epochs <= 1 {
            return self.learning_rate;
        }
        self.learning_rate * self.lr_decay.powf(epoch as f64 / (epochs - 1) as f64)
    }

    /// ε at a given step of a stage.
    pub fn epsilon_at(&self, epoch: usize, epochs: usize) -> f64 {
        let knots = &self.epsilon_schedule;
        if knots.len() == 1 || epochs <= 1 {
            return knots[0];
        }
        let t = epoch as f64 / (epochs - 1) as f64 * (knots.len() - 1) as f64;
        let k = (t.floor() as usize).min(knots.len() - 2);
        let f = t - k as f64;
        knots[k] * (knots[k + 1] / knots[k]).powf(f)
    }

    fn sinkhorn<T: Scalar>(&self, epsilon: f64) -> SinkhornParams<T> {
        SinkhornParams {
            epsilon: T::lit(epsilon),
            max_iters: self.sinkhorn_max_iters,
            tolerance: T::lit(self.sinkhorn_tolerance),
        }
    }

    fn widths(&self, dim: usize) -> Vec<usize> {
        let mut w = vec![dim];
        w.extend(&self.hidden);
        w.push(dim);
        w
    }
}

/// What happened during training.
#[derive(Debug, Clone, Default)]
pub struct TrainReport<T> {
    /// Minibatch divergence at every step, stages concatenated.
    pub loss_history: Vec<T>,
    /// Held-out divergence before the first stage and after each stage.
    pub eval_divergence: Vec<T>,
    /// Whether each stage was kept (false: reset to the identity).
    pub accepted: Vec<bool>,
}

impl<T: Scalar> TrainReport<T> {
    pub fn initial_divergence(&self) -> T {
        self.eval_divergence[0]
    }

    pub fn final_divergence(&self) -> T {
        *self.eval_divergence.last().expect("nonempty")
    }
}

/// Debiased divergence between `stage(inputs)` and `target`, and its gradient
/// with respect to the stage parameters.
pub fn stage_loss_gradient<T: Scalar>(
    stage: &Mlp<T>,
    inputs: &PointCloud<T>,
    target: &PointCloud<T>,
    params: SinkhornParams<T>,
) -> Result<(T, Vec<T>)> {
    let mut tape = Tape::default();
    let mut grad = vec![T::zero(); stage.param_count()];
    let loss = taped_step(stage, inputs.coords(), inputs.weights(), target, params, &mut tape, &mut grad)?;
    Ok((loss, grad))
}

fn taped_step<T: Scalar>(
    stage: &Mlp<T>,
    x: &[T],
    weights: &[T],
    target: &PointCloud<T>,
    params: SinkhornParams<T>,
    tape: &mut Tape<T>,
    grad: &mut [T],
) -> Result<T> {
    let y = stage.forward_taped(x, tape);
    let moved = PointCloud::from_flat(stage.dim(), y, weights.to_vec())?;
    let (loss, dy) = divergence_with_gradient(&moved, target, 2, params, true)?;
    stage.backward(tape, &dy, grad, None);
    Ok(loss)
}

/// Barycentric projections `ȳ_i = Σ_j π_ij y_j / a_i` of the points of
/// `source` under an optimal plan to `target`.
fn barycentric_targets<T: Scalar>(source: &PointCloud<T>, target: &PointCloud<T>) -> Result<Vec<T>> {
    let d = source.dim();
    let plan = exact_plan(source, target, 2)?;
    let mut out = vec![T::zero(); source.coords().len()];
    for &(i, j, m) in &plan.entries {
        let w = m / source.weight(i);
        for (o, &y) in out[i * d..(i + 1) * d].iter_mut().zip(target.point(j)) {
            *o += w * y;
        }
    }
    Ok(out)
}

struct OptState<T> {
    kind: Optimizer,
    lr: T,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> OptState<T> {
    fn new(kind: Optimizer, lr: f64, n: usize) -> Self {
        let (m, v) = match kind {
            Optimizer::Sgd => (Vec::new(), Vec::new()),
            Optimizer::Adam { .. } => (vec![T::zero(); n], vec![T::zero(); n]),
        };
        OptState { kind, lr: T::lit(lr), m, v, t: 0 }
    }

    fn step(&mut self, params: &mut [T], grad: &[T]) {
        match self.kind {
            Optimizer::Sgd => {
                for (p, &g) in params.iter_mut().zip(grad) {
                    *p -= self.lr * g;
                }
            }
            Optimizer::Adam { beta1, beta2 } => {
                self.t += 1;
                let (b1, b2) = (T::lit(beta1), T::lit(beta2));
                let c1 = T::one() - b1.powi(self.t);
                let c2 = T::one() - b2.powi(self.t);
                let tiny = T::lit(1e-8);
                for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
                    *m = b1 * *m + (T::one() - b1) * g;
                    *v = b2 * *v + (T::one() - b2) * g * g;
                    *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + tiny);
                }
            }
        }
    }
}

fn sinkhorn_objective() -> Objective {
    Objective::Sinkhorn
}

fn unit() -> f64 {
    1.0
}

/// Draws point indices with probability proportional to the cloud weights.
struct Sampler {
    n: usize,
    weighted: Option<WeightedIndex<f64>>,
}

impl Sampler {
    fn new<T: Scalar>(cloud: &PointCloud<T>) -> Result<Self> {
        let weighted = if cloud.is_uniform() {
            None
        } else {
            let w: Vec<f64> = cloud.weights().iter().map(|w| w.as_f64()).collect();
            Some(WeightedIndex::new(w).map_err(|e| domain(e.to_string()))?)
        };
        Ok(Sampler { n: cloud.len(), weighted })
    }

    fn draw(&self, rng: &mut Rng) -> usize {
        match &self.weighted {
            None => rng.random_range(0..self.n),
            Some(w) => w.sample(rng),
        }
    }
}

fn gather<T: Scalar>(coords: &[T], dim: usize, idx: &[usize]) -> Vec<T> {
    idx.iter().flat_map(|&i| coords[i * dim..(i + 1) * dim].iter().copied()).collect()
}

/// Principal-component lift: `z ↦ mean + Σ_k sqrt(λ_k) z_k e_k` over the
/// leading `latent` eigenpairs of the target covariance.
pub(crate) fn pca_lift<T: Scalar>(target: &PointCloud<T>, latent: usize) -> Lift<T> {
    let d = target.dim();
    let mean = target.mean();
    let cov: Vec<T> = target.covariance().into_iter().flatten().collect();
    let (vals, vecs) = symmetric_eigen(&cov, d);
    let mut matrix = vec![T::zero(); d * latent];
    for k in 0..latent.min(d) {
        let s = vals[k].max(T::zero()).sqrt();
        for i in 0..d {
            matrix[i * latent + k] = s * vecs[k][i];
        }
    }
    Lift { matrix, bias: mean }
}

/// Fits `T` so that `T#reference` approaches `target`.
///
/// Stages are trained one after another on the pushforward through the
/// (frozen) earlier stages. A stage that does not lower the divergence on a
/// fixed held-out pair is reset to the identity, so the held-out divergence
/// never increases.
pub fn train<T: Scalar>(
    target: &PointCloud<T>,
    reference: &PointCloud<T>,
    cfg: &TrainConfig,
) -> Result<(ResidualMapStack<T>, TrainReport<T>)> {
    cfg.validate()?;
    let (latent, dim) = (reference.dim(), target.dim());
    let lift = (latent != dim).then(|| pca_lift(target, latent));
    let mut stack = ResidualMapStack::new(latent, dim, lift, Vec::new())?;
    let mut rng = cfg.seed.rng();
    let ref_sampler = Sampler::new(reference)?;
    let tgt_sampler = Sampler::new(target)?;

    let eval_ref_idx: Vec<usize> = (0..cfg.eval_size).map(|_| ref_sampler.draw(&mut rng)).collect();
    let eval_tgt_idx: Vec<usize> = (0..cfg.eval_size).map(|_| tgt_sampler.draw(&mut rng)).collect();
    let eval_z = gather(reference.coords(), latent, &eval_ref_idx);
    let eval_target = PointCloud::uniform_flat(dim, gather(target.coords(), dim, &eval_tgt_idx))?;
    let eval_eps = *cfg.epsilon_schedule.last().expect("validated");
    let eval_params = SinkhornParams {
        max_iters: cfg.sinkhorn_max_iters.max(10_000),
        tolerance: T::lit(cfg.sinkhorn_tolerance.min(1e-6)),
        ..cfg.sinkhorn::<T>(eval_eps)
    };
    let evaluate = |stack: &ResidualMapStack<T>| -> Result<T> {
        let x = stack.partial_batch(&eval_z, stack.stages().len());
        let moved = PointCloud::uniform_flat(dim, x)?;
        Ok(divergence_with_gradient(&moved, &eval_target, 2, eval_params, true)?.0)
    };

    let mut report = TrainReport {
        eval_divergence: vec![evaluate(&stack)?],
        ..TrainReport::default()
    };
    let widths = cfg.widths(dim);
    let batch_w = vec![T::one(); cfg.batch_size];
    let mut tape = Tape::default();
    let mut idx = vec![0usize; cfg.batch_size];

    for stage_idx in 0..cfg.stage_count {
        let pushed = stack.partial_batch(reference.coords(), stage_idx);
        let mut stage = Mlp::init(&widths, &mut rng)?;
        let mut opt = OptState::new(cfg.optimizer, cfg.learning_rate, stage.param_count());
        let mut grad = vec![T::zero(); stage.param_count()];
        let fit = match cfg.objective {
            Objective::Regression { fit_size } => {
                let src: Vec<usize> = (0..fit_size).map(|_| ref_sampler.draw(&mut rng)).collect();
                let source = PointCloud::uniform_flat(dim, gather(&pushed, dim, &src))?;
                let goal = if target.len() <= fit_size {
                    barycentric_targets(&source, target)?
                } else {
                    let sub: Vec<usize> = (0..fit_size).map(|_| tgt_sampler.draw(&mut rng)).collect();
                    barycentric_targets(&source, &PointCloud::uniform_flat(dim, gather(target.coords(), dim, &sub))?)?
                };
                Some((source.coords().to_vec(), goal))
            }
            Objective::Sinkhorn => None,
        };
        for epoch in 0..cfg.epochs {
            grad.iter_mut().for_each(|g| *g = T::zero());
            let eps = cfg.epsilon_at(epoch, cfg.epochs);
            let loss = if let Some((xs, goal)) = &fit {
                let n = xs.len() / dim;
                idx.iter_mut().for_each(|i| *i = rng.random_range(0..n));
                let y = stage.forward_taped(&gather(xs, dim, &idx), &mut tape);
                let g = gather(goal, dim, &idx);
                let scale = T::lit(2.0) / T::count(cfg.batch_size);
                let dy: Vec<T> = y.iter().zip(&g).map(|(&a, &b)| scale * (a - b)).collect();
                stage.backward(&tape, &dy, &mut grad, None);
                y.iter().zip(&g).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>() / T::count(cfg.batch_size)
            } else {
                let x = {
                    idx.iter_mut().for_each(|i| *i = ref_sampler.draw(&mut rng));
                    gather(&pushed, dim, &idx)
                };
                idx.iter_mut().for_each(|i| *i = tgt_sampler.draw(&mut rng));
                let tb = PointCloud::uniform_flat(dim, gather(target.coords(), dim, &idx))?;
                taped_step(&stage, &x, &batch_w, &tb, cfg.sinkhorn(eps), &mut tape, &mut grad).map_err(|e| match e {
                    Error::NonConvergence { .. } | Error::Numerical(_) => Error::Training { stage: stage_idx, epoch },
                    other => other,
                })?
            };
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training { stage: stage_idx, epoch });
            }
            report.loss_history.push(loss);
            opt.lr = T::lit(cfg.learning_rate_at(epoch, cfg.epochs));
            opt.step(stage.params_mut(), &grad);
        }
        let before = *report.eval_divergence.last().expect("nonempty");
        stack.push_stage(stage)?;
        let after = evaluate(&stack)?;
        if after <= before {
            report.eval_divergence.push(after);
            report.accepted.push(true);
        } else {
            stack.stages_mut()[stage_idx].reset_output();
            report.eval_divergence.push(before);
            report.accepted.push(false);
        }
    }

    if cfg.joint_epochs > 0 && !stack.stages().is_empty() {
        joint_finetune(&mut stack, reference, target, cfg, &mut rng, &mut report, &evaluate)?;
    }
    Ok((stack, report))
}

/// Trains all stages together by backpropagating through the whole stack.
fn joint_finetune<T: Scalar>(
    stack: &mut ResidualMapStack<T>,
    reference: &PointCloud<T>,
    target: &PointCloud<T>,
    cfg: &TrainConfig,
    rng: &mut Rng,
    report: &mut TrainReport<T>,
    evaluate: &dyn Fn(&ResidualMapStack<T>) -> Result<T>,
) -> Result<()> {
    let dim = stack.output_dim();
    let lifted = stack.lift_batch(reference.coords());
    let ref_sampler = Sampler::new(reference)?;
    let tgt_sampler = Sampler::new(target)?;
    let saved = stack.clone();
    let sizes: Vec<usize> = stack.stages().iter().map(Mlp::param_count).collect();
    let total: usize = sizes.iter().sum();
    let mut opt = OptState::new(cfg.optimizer, cfg.learning_rate, total);
    let mut tapes: Vec<Tape<T>> = stack.stages().iter().map(|_| Tape::default()).collect();
    let mut idx = vec![0usize; cfg.batch_size];
    let stage_id = stack.stages().len();
    for epoch in 0..cfg.joint_epochs {
        idx.iter_mut().for_each(|i| *i = ref_sampler.draw(rng));
        let mut x = gather(&lifted, dim, &idx);
        for (s, tape) in stack.stages().iter().zip(&mut tapes) {
            x = s.forward_taped(&x, tape);
        }
        idx.iter_mut().for_each(|i| *i = tgt_sampler.draw(rng));
        let tb = PointCloud::uniform_flat(dim, gather(target.coords(), dim, &idx))?;
        let moved = PointCloud::uniform_flat(dim, x)?;
        let params = cfg.sinkhorn(*cfg.epsilon_schedule.last().expect("validated"));
        let (loss, mut dy) = divergence_with_gradient(&moved, &tb, 2, params, true)
            .map_err(|_| Error::Training { stage: stage_id, epoch })?;
        if !loss.is_finite() {
            return Err(Error::Training { stage: stage_id, epoch });
        }
        report.loss_history.push(loss);
        let mut grad = vec![T::zero(); total];
        let mut off = total;
        for (k, s) in stack.stages().iter().enumerate().rev() {
            off -= sizes[k];
            let mut dx = vec![T::zero(); dy.len()];
            s.backward(&tapes[k], &dy, &mut grad[off..off + sizes[k]], Some(&mut dx));
            dy = dx;
        }
        let mut flat: Vec<T> = stack.stages().iter().flat_map(|s| s.params().iter().copied()).collect();
        opt.lr = T::lit(cfg.learning_rate_at(epoch, cfg.joint_epochs));
        opt.step(&mut flat, &grad);
        let mut off = 0;
        for (s, &n) in stack.stages_mut().iter_mut().zip(&sizes) {
            s.params_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }
    let before = *report.eval_divergence.last().expect("nonempty");
    let after = evaluate(stack)?;
    if after <= before {
        report.eval_divergence.push(after);
    } else {
        *stack = saved;
        report.eval_divergence.push(before);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::sample_gaussian;

    #[test]
    fn epsilon_schedule_is_geometric() {
        let cfg = TrainConfig {
            epsilon_schedule: vec![1.0, 0.01],
            ..TrainConfig::default()
        };
        assert_eq!(cfg.epsilon_at(0, 101), 1.0);
        assert!((cfg.epsilon_at(50, 101) - 0.1).abs() < 1e-12);
        assert!((cfg.epsilon_at(100, 101) - 0.01).abs() < 1e-12);
    }

    #[test]
    fn learning_rate_decays_geometrically() {
        let cfg = TrainConfig {
            learning_rate: 0.01,
            lr_decay: 0.01,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.learning_rate_at(0, 11), 0.01);
        assert!((cfg.learning_rate_at(5, 11) - 0.001).abs() < 1e-15);
        assert!((cfg.learning_rate_at(10, 11) - 1e-4).abs() < 1e-15);
        assert_eq!(TrainConfig::default().learning_rate_at(7, 11), 0.01);
        assert!(TrainConfig { lr_decay: 0.0, ..cfg }.validate().is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = TrainConfig::default();
        assert!(TrainConfig { epochs: 0, ..base.clone() }.validate().is_err());
        assert!(TrainConfig { batch_size: 1, ..base.clone() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..base.clone() }.validate().is_err());
        assert!(TrainConfig { epsilon_schedule: vec![], ..base.clone() }.validate().is_err());
        let objective = Objective::Regression { fit_size: 1 };
        assert!(TrainConfig { objective, ..base }.validate().is_err());
    }

    #[test]
    fn barycentric_targets_follow_the_plan() {
        let a = PointCloud::uniform_flat(1, vec![0.0, 1.0]).unwrap();
        let b = PointCloud::uniform_flat(1, vec![5.0, -3.0]).unwrap();
        assert_eq!(barycentric_targets(&a, &b).unwrap(), vec![-3.0, 5.0]);
        let one = PointCloud::uniform_flat(1, vec![0.0]).unwrap();
        assert_eq!(barycentric_targets(&one, &b).unwrap(), vec![1.0]);
    }

    #[test]
    fn regression_fits_a_shift() {
        let z: PointCloud<f64> = sample_gaussian(2, 512, RngSeed(3)).unwrap();
        let target = z.map_points(2, |x, o| {
            o[0] = x[0] + 2.0;
            o[1] = x[1];
            Ok(())
        }).unwrap();
        let cfg = TrainConfig {
            epochs: 800,
            batch_size: 64,
            learning_rate: 0.02,
            lr_decay: 0.02,
            stage_count: 1,
            hidden: vec![],
            epsilon_schedule: vec![0.05],
            optimizer: Optimizer::adam(),
            objective: Objective::Regression { fit_size: 512 },
            eval_size: 256,
            ..TrainConfig::default()
        };
        let (map, report) = train(&target, &z, &cfg).unwrap();
        assert_eq!(report.accepted, vec![true]);
        let before = crate::ot::exact_wp(&z, &target, 2).unwrap().0;
        let after = crate::ot::exact_wp(&map.pushforward_cloud(&z).unwrap(), &target, 2).unwrap().0;
        assert!(before > 1.9 && after < 0.15, "{before} {after}");
    }

    #[test]
    fn pca_lift_matches_covariance() {
        let z: PointCloud<f64> = sample_gaussian(3, 4000, RngSeed(2)).unwrap();
        let target = z
            .map_points(3, |x, o| {
                o[0] = 3.0 * x[0] + 1.0;
                o[1] = 0.5 * x[1];
                o[2] = 0.1 * x[2] - 2.0;
                Ok(())
            })
            .unwrap();
        let lift = pca_lift(&target, 2);
        let col0: Vec<f64> = (0..3).map(|i| lift.matrix[i * 2]).collect();
        assert!((col0[0].abs() - 3.0).abs() < 0.15);
        assert!(col0[1].abs() < 0.1 && col0[2].abs() < 0.1);
        assert!((lift.bias[0] - 1.0).abs() < 0.2);
    }
}
