//! The Geometry model.
//!
//! Parameters `θ ∈ R^n_dim`, task vectors `t_i`, skill levels
//! `s_i = (θ − θ0)·t_i` and loss `Σ p_i L(s_i)` (or empirical frequencies
//! from a sampled batch of task indices). Any optimizer from [`crate::optim`]
//! can drive it.

mod experiments;

pub use experiments::*;

use ndarray::{ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{sign, Optimizer, OptimizerSpec};
use crate::rng::{self, streams, SimRng};
use crate::taskdist::{TaskDistribution, TaskSampler, TaskVectorSet};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `(1 − s)²`
    Mse,
    /// `−log σ(s)`
    Xent,
}

impl LossKind {
    pub fn value(self, s: f64) -> f64 {
        match self {
            LossKind::Mse => (1.0 - s) * (1.0 - s),
            LossKind::Xent => softplus(-s),
        }
    }

    pub fn deriv(self, s: f64) -> f64 {
        match self {
            LossKind::Mse => -2.0 * (1.0 - s),
            LossKind::Xent => -sigmoid(-s),
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

#[derive(Debug, Clone)]
pub struct GeometrySystem {
    pub theta: Vec<f64>,
    pub theta0: Vec<f64>,
    pub tv: TaskVectorSet,
    pub dist: TaskDistribution,
    pub loss: LossKind,
    /// Std of Gaussian noise added to every gradient coordinate.
    pub noise_sigma: f64,
    /// Task indices sampled per step; 0 means exact expectation.
    pub batch_size: usize,
    sampler: TaskSampler,
}

impl GeometrySystem {
    /// System at `θ = θ0 = 0`.
    pub fn new(tv: TaskVectorSet, dist: TaskDistribution, loss: LossKind) -> Result<Self> {
        if tv.n_task() != dist.len() {
            return Err(Error::DimensionMismatch {
                expected: tv.n_task(),
                got: dist.len(),
            });
        }
        let n_dim = tv.n_dim();
        let sampler = dist.sampler();
        Ok(Self {
            theta: vec![0.0; n_dim],
            theta0: vec![0.0; n_dim],
            tv,
            dist,
            loss,
            noise_sigma: 0.0,
            batch_size: 0,
            sampler,
        })
    }

    /// Moves both `θ` and `θ0` to `init`, so skills still start at zero.
    pub fn with_init(mut self, init: Vec<f64>) -> Result<Self> {
        if init.len() != self.n_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.n_dim(),
                got: init.len(),
            });
        }
        self.theta0.clone_from(&init);
        self.theta = init;
        Ok(self)
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size;
        self
    }

    pub fn n_dim(&self) -> usize {
        self.tv.n_dim()
    }

    pub fn n_task(&self) -> usize {
        self.tv.n_task()
    }

    fn displacement(&self) -> Vec<f64> {
        self.theta.iter().zip(&self.theta0).map(|(a, b)| a - b).collect()
    }

    /// `s_i = (θ − θ0)·t_i`.
    pub fn skill_levels(&self) -> Vec<f64> {
        let d = self.displacement();
        self.tv.vectors().dot(&ArrayView1::from(&d)).to_vec()
    }

    pub fn task_losses(&self, skills: &[f64]) -> Vec<f64> {
        skills.iter().map(|&s| self.loss.value(s)).collect()
    }

    /// `Σ p_i L(s_i)` with the true frequencies.
    pub fn total_loss(&self) -> f64 {
        let s = self.skill_levels();
        self.weighted_loss(&s)
    }

    fn weighted_loss(&self, skills: &[f64]) -> f64 {
        self.dist
            .p()
            .iter()
            .zip(skills)
            .map(|(p, &s)| p * self.loss.value(s))
            .sum()
    }

    /// Gradient of the (batch) loss with respect to `θ`, with noise, for a
    /// fixed seed.
    pub fn batch_gradient(&self, seed: u64) -> Vec<f64> {
        let mut rng = rng::substream(seed, streams::BATCHES);
        let mut g = vec![0.0; self.n_dim()];
        self.batch_gradient_into(&mut rng, &mut g);
        g
    }

    /// Writes the batch gradient into `out`, drawing batch indices and noise
    /// from `rng`.
    pub fn batch_gradient_into(&self, rng: &mut SimRng, out: &mut [f64]) {
        let d = self.displacement();
        let dv = ArrayView1::from(&d);
        let tvm = self.tv.vectors();
        out.iter_mut().for_each(|x| *x = 0.0);

        if self.batch_size == 0 {
            let s = tvm.dot(&dv);
            let w: Vec<f64> = self
                .dist
                .p()
                .iter()
                .zip(s.iter())
                .map(|(p, &si)| p * self.loss.deriv(si))
                .collect();
            let g = tvm.t().dot(&ArrayView1::from(&w));
            out.copy_from_slice(g.as_slice().expect("contiguous"));
        } else {
            let mut idx: Vec<usize> = (0..self.batch_size).map(|_| self.sampler.sample(rng)).collect();
            idx.sort_unstable();
            let inv_b = 1.0 / self.batch_size as f64;
            let mut k = 0;
            while k < idx.len() {
                let i = idx[k];
                let mut count = 0usize;
                while k < idx.len() && idx[k] == i {
                    count += 1;
                    k += 1;
                }
                let row = tvm.row(i);
                let si = row.dot(&dv);
                let w = count as f64 * inv_b * self.loss.deriv(si);
                for (o, t) in out.iter_mut().zip(row.iter()) {
                    *o += w * t;
                }
            }
        }

        if self.noise_sigma > 0.0 {
            for o in out.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *o += self.noise_sigma * z;
            }
        }
    }

    /// Gradient-aligned dimension counts for every task against `grad_total`.
    pub fn n_align_all(&self, skills: &[f64], grad_total: &[f64]) -> Vec<i64> {
        let gs: Vec<f64> = grad_total.iter().map(|&g| sign(g)).collect();
        let gsv = ArrayView1::from(&gs);
        let tvm: ArrayView2<f64> = self.tv.vectors().view();
        (0..self.n_task())
            .map(|i| {
                let task_sign = sign(self.loss.deriv(skills[i]));
                if task_sign == 0.0 {
                    return 0;
                }
                let dot: f64 = tvm
                    .row(i)
                    .iter()
                    .zip(gsv.iter())
                    .map(|(&t, &g)| sign(t) * g)
                    .sum();
                (task_sign * dot).round() as i64
            })
            .collect()
    }
}

/// `Σ_j sign(grad_task)_j · sign(grad_total)_j`, with `sign(0) = 0`.
pub fn n_align(grad_total: &[f64], grad_task: &[f64]) -> Result<i64> {
    if grad_total.len() != grad_task.len() {
        return Err(Error::DimensionMismatch {
            expected: grad_total.len(),
            got: grad_task.len(),
        });
    }
    Ok(grad_total
        .iter()
        .zip(grad_task)
        .map(|(&a, &b)| (sign(a) * sign(b)) as i64)
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub n_steps: usize,
    pub record_every: usize,
    pub record_align: bool,
    pub seed: u64,
    /// Stop at the first recorded step where every task loss is below this.
    pub stop_below: Option<f64>,
    pub plateau: Option<Plateau>,
}

/// Early stop once the mean total loss over the last `records` recorded
/// points differs from the mean over the `records` before them by at most
/// `rtol` relative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub records: usize,
    pub rtol: f64,
}

impl Plateau {
    pub fn reached(&self, totals: &[f64]) -> bool {
        let k = self.records.max(1);
        if totals.len() < 2 * k {
            return false;
        }
        let n = totals.len();
        let recent = totals[n - k..].iter().sum::<f64>() / k as f64;
        let prev = totals[n - 2 * k..n - k].iter().sum::<f64>() / k as f64;
        (recent - prev).abs() <= self.rtol * prev.abs()
    }
}

impl RunOptions {
    pub fn new(n_steps: usize, record_every: usize, seed: u64) -> Self {
        Self {
            n_steps,
            record_every: record_every.max(1),
            record_align: false,
            seed,
            stop_below: None,
            plateau: None,
        }
    }

    pub fn plateau(mut self, plateau: Plateau) -> Self {
        self.plateau = Some(plateau);
        self
    }

    pub fn stop_below(mut self, threshold: f64) -> Self {
        self.stop_below = Some(threshold);
        self
    }

    pub fn with_align(mut self) -> Self {
        self.record_align = true;
        self
    }
}

/// Trains `sys` in place and records skills and losses at step 0, every
/// `record_every` steps and at the final step.
pub fn run(sys: &mut GeometrySystem, spec: &OptimizerSpec, opts: &RunOptions) -> Result<Trajectory> {
    if opts.n_steps == 0 {
        return Err(Error::invalid("n_steps", "must be >= 1"));
    }
    let mut opt = Optimizer::new(*spec)?;
    let meta = serde_json::json!({
        "model": "geometry",
        "n_task": sys.n_task(),
        "n_dim": sys.n_dim(),
        "loss": sys.loss,
        "alpha": sys.dist.alpha(),
        "noise_sigma": sys.noise_sigma,
        "batch_size": sys.batch_size,
        "optimizer": spec,
        "n_steps": opts.n_steps,
        "record_every": opts.record_every,
        "seed": opts.seed,
    });
    let mut traj = Trajectory::new(meta);
    if opts.record_align {
        traj.n_align = Some(Vec::new());
    }
    let mut rng = rng::substream(opts.seed, streams::BATCHES);
    let mut grad = vec![0.0; sys.n_dim()];
    let every = opts.record_every.max(1);

    for step in 0..=opts.n_steps {
        let record = step % every == 0 || step == opts.n_steps;
        let skills = if record { Some(sys.skill_levels()) } else { None };
        let mut done = step == opts.n_steps;
        if let Some(s) = &skills {
            let losses = sys.task_losses(s);
            let total = sys.weighted_loss(s);
            if let Some(th) = opts.stop_below {
                done |= losses.iter().all(|&l| l < th);
            }
            traj.push(step as f64, s.clone(), losses, total);
            if let Some(p) = &opts.plateau {
                done |= p.reached(&traj.total_loss);
            }
        }
        if done && !(record && opts.record_align) {
            break;
        }
        sys.batch_gradient_into(&mut rng, &mut grad);
        if let (Some(s), Some(al)) = (&skills, traj.n_align.as_mut()) {
            al.push(sys.n_align_all(s, &grad));
        }
        if done {
            break;
        }
        opt.step(&mut sys.theta, &grad).map_err(|e| e.at_step(step))?;
    }
    Ok(traj)
}

/// First recorded step at which task `task`'s loss drops below `threshold`.
pub fn convergence_step(traj: &Trajectory, task: usize, threshold: f64) -> Option<f64> {
    traj.first_step_where(task, |_, l| l < threshold)
}
