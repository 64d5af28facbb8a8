//! Canned Geometry-model experiments: two-task learning-time ratios, loss
//! against dimension and against steps, and modular task vectors.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run, GeometrySystem, LossKind, Plateau, RunOptions};
use crate::error::{Error, Result};
use crate::optim::OptimizerSpec;
use crate::taskdist::{TaskDistribution, TaskVectorSet, VectorMode};
use crate::trajectory::Trajectory;

/// Two orthogonal tasks with frequencies `(p1, 1 − p1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoTaskConfig {
    pub p1: f64,
    pub n_dim: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerSpec,
    pub max_steps: usize,
    /// A task has converged once its loss drops below this.
    pub threshold: f64,
    pub seed: u64,
}

impl TwoTaskConfig {
    pub fn new(p1: f64, optimizer: OptimizerSpec) -> Self {
        Self {
            p1,
            n_dim: 1000,
            batch_size: 128,
            optimizer,
            max_steps: 200_000,
            threshold: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoTaskResult {
    pub p1: f64,
    pub p2: f64,
    pub t1: Option<f64>,
    pub t2: Option<f64>,
}

impl TwoTaskResult {
    /// `t2 / t1`, if both tasks converged.
    pub fn ratio(&self) -> Option<f64> {
        match (self.t1, self.t2) {
            (Some(a), Some(b)) if a > 0.0 => Some(b / a),
            _ => None,
        }
    }
}

pub fn two_task_times(cfg: &TwoTaskConfig) -> Result<TwoTaskResult> {
    if !(cfg.p1 > 0.0 && cfg.p1 < 1.0) {
        return Err(Error::invalid("p1", "must lie in (0, 1)"));
    }
    let p2 = 1.0 - cfg.p1;
    let tv = TaskVectorSet::new(2, cfg.n_dim, VectorMode::Orthogonalized, cfg.seed)?;
    let dist = TaskDistribution::explicit(vec![cfg.p1, p2])?;
    let mut sys = GeometrySystem::new(tv, dist, LossKind::Mse)?.with_batch_size(cfg.batch_size);
    let opts = RunOptions::new(cfg.max_steps, 1, cfg.seed).stop_below(cfg.threshold);
    let traj = run(&mut sys, &cfg.optimizer, &opts)?;
    Ok(TwoTaskResult {
        p1: cfg.p1,
        p2,
        t1: super::convergence_step(&traj, 0, cfg.threshold),
        t2: super::convergence_step(&traj, 1, cfg.threshold),
    })
}

/// Power-law task distribution trained in a single Geometry model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRunConfig {
    pub n_task: usize,
    pub n_dim: usize,
    pub alpha: f64,
    pub loss: LossKind,
    pub mode: VectorMode,
    pub optimizer: OptimizerSpec,
    pub n_steps: usize,
    pub batch_size: usize,
    pub noise_sigma: f64,
    pub record_every: usize,
    pub seed: u64,
    #[serde(default)]
    pub plateau: Option<Plateau>,
}

impl ScalingRunConfig {
    pub fn new(n_task: usize, n_dim: usize, alpha: f64, optimizer: OptimizerSpec, n_steps: usize) -> Self {
        Self {
            n_task,
            n_dim,
            alpha,
            loss: LossKind::Mse,
            mode: VectorMode::Random,
            optimizer,
            n_steps,
            batch_size: 0,
            noise_sigma: 0.0,
            record_every: (n_steps / 1000).max(1),
            seed: 0,
            plateau: None,
        }
    }

    pub fn system(&self) -> Result<GeometrySystem> {
        let tv = match self.mode {
            VectorMode::Onehot => modular_task_vectors(self.n_task, self.n_dim)?,
            mode => TaskVectorSet::new(self.n_task, self.n_dim, mode, self.seed)?,
        };
        let dist = TaskDistribution::power_law(self.n_task, self.alpha, true)?;
        Ok(GeometrySystem::new(tv, dist, self.loss)?
            .with_batch_size(self.batch_size)
            .with_noise(self.noise_sigma))
    }

    pub fn run(&self) -> Result<Trajectory> {
        let mut sys = self.system()?;
        let mut opts = RunOptions::new(self.n_steps, self.record_every, self.seed);
        opts.plateau = self.plateau;
        run(&mut sys, &self.optimizer, &opts)
    }
}

/// Mean total loss over the last `fraction` of the records.
pub fn tail_mean_loss(traj: &Trajectory, fraction: f64) -> f64 {
    let n = traj.len();
    if n == 0 {
        return f64::NAN;
    }
    let k = ((n as f64 * fraction).ceil() as usize).clamp(1, n);
    traj.total_loss[n - k..].iter().sum::<f64>() / k as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimSweepConfig {
    pub dims: Vec<usize>,
    pub base: ScalingRunConfig,
    /// Share of the trajectory averaged into the final loss; SignGD
    /// oscillates around its fixed point so a single last value is noisy.
    pub tail_fraction: f64,
    /// Final losses are averaged over these seeds; empty means `base.seed`.
    #[serde(default)]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimPoint {
    pub n_dim: usize,
    pub final_loss: f64,
}

/// One run per `(n_dim, seed)` cell on the rayon pool; points come back in
/// `dims` order with the loss averaged over seeds.
pub fn loss_vs_dim_sweep(cfg: &DimSweepConfig) -> Result<Vec<DimPoint>> {
    if cfg.dims.is_empty() {
        return Err(Error::invalid("dims", "must be non-empty"));
    }
    let seeds = if cfg.seeds.is_empty() {
        vec![cfg.base.seed]
    } else {
        cfg.seeds.clone()
    };
    let cells: Vec<(usize, u64)> = cfg
        .dims
        .iter()
        .flat_map(|&d| seeds.iter().map(move |&s| (d, s)))
        .collect();
    let losses = cells
        .par_iter()
        .map(|&(n_dim, seed)| {
            let run_cfg = ScalingRunConfig {
                n_dim,
                seed,
                ..cfg.base.clone()
            };
            Ok(tail_mean_loss(&run_cfg.run()?, cfg.tail_fraction))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(cfg
        .dims
        .iter()
        .zip(losses.chunks(seeds.len()))
        .map(|(&n_dim, chunk)| DimPoint {
            n_dim,
            final_loss: chunk.iter().sum::<f64>() / chunk.len() as f64,
        })
        .collect())
}

/// Task `i` owns coordinate `i mod n_dim`. With `n_task <= n_dim` this is the
/// canonical one-hot set; otherwise several tasks share a coordinate.
pub fn modular_task_vectors(n_task: usize, n_dim: usize) -> Result<TaskVectorSet> {
    if n_task <= n_dim {
        return TaskVectorSet::new(n_task, n_dim, VectorMode::Onehot, 0);
    }
    if n_dim == 0 {
        return Err(Error::invalid("n_dim", "must be >= 1"));
    }
    let mut v = Array2::zeros((n_task, n_dim));
    for i in 0..n_task {
        v[[i, i % n_dim]] = 1.0;
    }
    TaskVectorSet::from_rows(v)
}
