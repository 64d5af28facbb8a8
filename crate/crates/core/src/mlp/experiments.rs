//! Desk-scale MLP experiments: compositional parity, grokking on modular
//! addition, modular vs shared regression, and multitask parity scaling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{
    compositional_eval, compositional_parity, modular_addition, sparse_squares, sparse_squares_eval, stratified_parity,
    Composition, ParityStream, SparseParityTask,
};
use super::net::{DenseNet, EmbeddingSpec, Head, Inputs, Targets};
use super::train::{train, Dataset, EvalSets, Minibatches, RunResult, SuccessRule, Subtasks, TrainConfig};
use crate::error::{Error, Result};
use crate::optim::{Algo, OptimizerSpec};
use crate::taskdist::TaskDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositionalConfig {
    pub variant: Composition,
    pub n_bits: usize,
    pub hidden: usize,
    pub n_samples: usize,
    pub n_eval: usize,
    pub lr: f64,
    pub n_steps: usize,
    pub eval_every: usize,
    /// Per-output accuracy that counts as learned.
    pub threshold: f64,
    pub seed: u64,
}

impl CompositionalConfig {
    pub fn new(variant: Composition, seed: u64) -> Self {
        Self {
            variant,
            n_bits: 32,
            hidden: 50,
            n_samples: 10_000,
            n_eval: 2048,
            lr: 1e-3,
            n_steps: 20_000,
            eval_every: 50,
            threshold: 0.99,
            seed,
        }
    }
}

/// Full-batch Adam on three sigmoid outputs; success times per output. The
/// run ends once all three outputs are learned.
pub fn experiment_compositional_parity(cfg: &CompositionalConfig) -> Result<RunResult> {
    let data = compositional_parity(cfg.n_samples, cfg.n_bits, cfg.variant, cfg.seed)?;
    let test = compositional_eval(cfg.n_eval, cfg.n_bits, cfg.variant, cfg.seed)?;
    let mut net = DenseNet::new(&[cfg.n_bits, cfg.hidden, 3], Head::SigmoidBce, cfg.seed)?;
    let tc = TrainConfig {
        eval_every: cfg.eval_every,
        subtasks: Subtasks::Outputs,
        success: SuccessRule::AccuracyAtLeast(cfg.threshold),
        stop_on_success: true,
        ..TrainConfig::new(OptimizerSpec::adam(cfg.lr), cfg.n_steps)
    };
    let mut res = train(
        &mut net,
        &mut Minibatches::full(data),
        EvalSets { test: &test, train: None },
        &tc,
        cfg.seed,
    )?;
    res.config = serde_json::json!({ "experiment": "compositional_parity", "params": cfg, "train": tc });
    Ok(res)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrokkingConfig {
    pub algo: Algo,
    pub weight_decay: f64,
    pub p: usize,
    pub embed_dim: usize,
    pub width: usize,
    /// Hidden layers between the embeddings and the logits.
    pub depth: usize,
    pub train_frac: f64,
    pub lr: f64,
    pub n_steps: usize,
    /// 0 = full batch.
    pub batch_size: usize,
    pub eval_every: usize,
    /// Standard deviation of the initial embeddings.
    pub embed_scale: f64,
    pub seed: u64,
}

impl GrokkingConfig {
    pub fn new(algo: Algo, weight_decay: f64, seed: u64) -> Self {
        Self {
            algo,
            weight_decay,
            p: 59,
            embed_dim: 32,
            width: 100,
            depth: 2,
            train_frac: 0.8,
            lr: 1e-3,
            n_steps: 10_000,
            batch_size: 128,
            eval_every: 100,
            embed_scale: 0.2,
            seed,
        }
    }
}

pub fn experiment_grokking(cfg: &GrokkingConfig) -> Result<RunResult> {
    let (train_set, test_set) = modular_addition(cfg.p, cfg.train_frac, cfg.seed)?;
    let e = EmbeddingSpec {
        vocab: cfg.p,
        dim: cfg.embed_dim,
        n_tokens: 2,
    };
    let mut net = DenseNet::with_embedding(e, &vec![cfg.width; cfg.depth], cfg.p, Head::SoftmaxXent, cfg.seed)?;
    if cfg.embed_scale != 1.0 {
        net.params[..cfg.p * cfg.embed_dim].iter_mut().for_each(|v| *v *= cfg.embed_scale);
    }
    let opt = OptimizerSpec::new(cfg.algo, cfg.lr).with_weight_decay(cfg.weight_decay);
    let tc = TrainConfig {
        eval_every: cfg.eval_every,
        ..TrainConfig::new(opt, cfg.n_steps)
    };
    let mut res = train(
        &mut net,
        &mut Minibatches::new(train_set.clone(), cfg.batch_size, cfg.seed),
        EvalSets {
            test: &test_set,
            train: Some(&train_set),
        },
        &tc,
        cfg.seed,
    )?;
    res.config = serde_json::json!({ "experiment": "grokking", "params": cfg, "train": tc });
    Ok(res)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModularityConfig {
    pub modular: bool,
    pub n_points: usize,
    /// Held-out points used to measure success times.
    pub n_eval: usize,
    pub y_zero_prob: f64,
    /// Hidden width of the shared network; each modular half gets half.
    pub width: usize,
    pub lr: f64,
    /// Minibatch size; 0 = full batch. Small batches make the sparse `y`
    /// signal rare within shared parameters.
    pub batch_size: usize,
    pub max_steps: usize,
    /// Per-output MSE that counts as learned.
    pub threshold: f64,
    pub eval_every: usize,
    pub seed: u64,
}

impl ModularityConfig {
    pub fn new(modular: bool, seed: u64) -> Self {
        Self {
            modular,
            n_points: 1000,
            n_eval: 10_000,
            y_zero_prob: 0.99,
            width: 200,
            lr: 5e-4,
            batch_size: 16,
            max_steps: 5_000,
            threshold: 1e-3,
            eval_every: 10,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModularityPoint {
    pub seed: u64,
    pub t1: Option<usize>,
    pub t2: Option<usize>,
}

impl ModularityPoint {
    /// `t2/t1`; infinite when `x²` was learned but `y²` never was, absent
    /// when `x²` was never learned.
    pub fn ratio(&self) -> Option<f64> {
        match (self.t1, self.t2) {
            (Some(a), Some(b)) if a > 0 => Some(b as f64 / a as f64),
            (Some(a), None) if a > 0 => Some(f64::INFINITY),
            _ => None,
        }
    }
}

fn column_dataset(data: &Dataset, col: usize) -> Dataset {
    let (Inputs::Dense(x), Targets::Values(y)) = (&data.inputs, &data.targets) else {
        unreachable!("squares data is dense regression")
    };
    let pick = |a: &ndarray::Array2<f64>| a.slice(ndarray::s![.., col..col + 1]).to_owned();
    Dataset {
        inputs: Inputs::Dense(pick(x)),
        targets: Targets::Values(pick(y)),
        groups: None,
    }
}

/// Success times of the `x²` and `y²` outputs on held-out points. The
/// modular model is two disjoint networks, one per output.
pub fn experiment_modularity(cfg: &ModularityConfig) -> Result<ModularityPoint> {
    let data = sparse_squares(cfg.n_points, cfg.y_zero_prob, cfg.seed)?;
    let test = sparse_squares_eval(cfg.n_eval, cfg.y_zero_prob, cfg.seed)?;
    let tc = TrainConfig {
        eval_every: cfg.eval_every,
        subtasks: Subtasks::Outputs,
        success: SuccessRule::LossBelow(cfg.threshold),
        stop_on_success: true,
        ..TrainConfig::new(OptimizerSpec::adam(cfg.lr), cfg.max_steps)
    };
    if !cfg.modular {
        let mut net = DenseNet::new(&[2, cfg.width, cfg.width, 2], Head::LinearMse, cfg.seed)?;
        let res = train(
            &mut net,
            &mut Minibatches::new(data, cfg.batch_size, cfg.seed),
            EvalSets { test: &test, train: None },
            &tc,
            cfg.seed,
        )?;
        return Ok(ModularityPoint {
            seed: cfg.seed,
            t1: res.success[0],
            t2: res.success[1],
        });
    }
    let half = (cfg.width / 2).max(1);
    let mut times = [None, None];
    for (col, t) in times.iter_mut().enumerate() {
        let part = column_dataset(&data, col);
        let held = column_dataset(&test, col);
        let sub_seed = cfg.seed.wrapping_mul(2).wrapping_add(col as u64);
        let mut net = DenseNet::new(&[1, half, half, 1], Head::LinearMse, sub_seed)?;
        let res = train(
            &mut net,
            &mut Minibatches::new(part, cfg.batch_size, sub_seed),
            EvalSets { test: &held, train: None },
            &tc,
            cfg.seed,
        )?;
        *t = res.success[0];
    }
    Ok(ModularityPoint {
        seed: cfg.seed,
        t1: times[0],
        t2: times[1],
    })
}

/// One run per seed on the rayon pool, in seed order.
pub fn modularity_scatter(base: &ModularityConfig, seeds: &[u64]) -> Result<Vec<ModularityPoint>> {
    seeds
        .par_iter()
        .map(|&seed| experiment_modularity(&ModularityConfig { seed, ..*base }))
        .collect()
}

/// Median of the defined `t2/t1` ratios.
pub fn median_ratio(points: &[ModularityPoint]) -> Option<f64> {
    let mut r: Vec<f64> = points.iter().filter_map(ModularityPoint::ratio).collect();
    median(&mut r)
}

pub fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityScalingConfig {
    pub betas: Vec<(f64, f64)>,
    pub widths: Vec<usize>,
    pub alphas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub n_tasks: usize,
    pub n: usize,
    pub k: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub n_steps: usize,
    pub eval_every: usize,
    /// Stratified evaluation examples per subtask.
    pub eval_per_task: usize,
}

impl ParityScalingConfig {
    /// Desk preset: 100 subtasks and batch 4096 in place of 500 and 20000.
    pub fn desk() -> Self {
        Self {
            betas: vec![(0.9, 0.999), (0.9, 0.9)],
            widths: vec![16, 32, 64, 128, 256],
            alphas: vec![1.5],
            seeds: vec![0],
            n_tasks: 100,
            n: 100,
            k: 3,
            batch_size: 4096,
            lr: 1e-3,
            n_steps: 2000,
            eval_every: 50,
            eval_per_task: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCurve {
    pub beta1: f64,
    pub beta2: f64,
    pub width: usize,
    pub alpha: f64,
    pub seed: u64,
    pub n_params: usize,
    pub steps: Vec<usize>,
    /// Frequency-weighted expected loss `Σ p_i ℓ_i`.
    pub loss: Vec<f64>,
    /// Per-subtask loss at the last evaluation.
    pub final_sub_loss: Vec<f64>,
}

impl ScalingCurve {
    pub fn final_loss(&self) -> f64 {
        *self.loss.last().expect("at least one evaluation")
    }
}

fn parity_scaling_cell(cfg: &ParityScalingConfig, beta: (f64, f64), width: usize, alpha: f64, seed: u64) -> Result<ScalingCurve> {
    let dist = TaskDistribution::power_law(cfg.n_tasks, alpha, true)?;
    let task = SparseParityTask::new(cfg.n_tasks, cfg.n, cfg.k, dist.clone(), seed)?;
    let test = stratified_parity(&task, cfg.eval_per_task, seed);
    let mut net = DenseNet::new(&[task.input_width(), width, 2], Head::SoftmaxXent, seed)?;
    let tc = TrainConfig {
        eval_every: cfg.eval_every,
        subtasks: Subtasks::Groups { n: cfg.n_tasks },
        ..TrainConfig::new(OptimizerSpec::adam(cfg.lr).with_betas(beta.0, beta.1), cfg.n_steps)
    };
    let res = train(
        &mut net,
        &mut ParityStream::new(task, cfg.batch_size, seed),
        EvalSets { test: &test, train: None },
        &tc,
        seed,
    )?;
    let loss = res
        .sub_loss
        .iter()
        .map(|row| row.iter().zip(dist.p()).map(|(l, p)| l * p).sum())
        .collect();
    Ok(ScalingCurve {
        beta1: beta.0,
        beta2: beta.1,
        width,
        alpha,
        seed,
        n_params: net.n_params(),
        steps: res.steps,
        loss,
        final_sub_loss: res.sub_loss.last().cloned().unwrap_or_default(),
    })
}

/// Every `(betas, width, alpha, seed)` cell, in that nesting order.
pub fn experiment_parity_scaling(cfg: &ParityScalingConfig) -> Result<Vec<ScalingCurve>> {
    if cfg.betas.is_empty() || cfg.widths.is_empty() || cfg.alphas.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::invalid("sweep", "betas, widths, alphas and seeds must be non-empty"));
    }
    let mut cells = Vec::new();
    for &b in &cfg.betas {
        for &w in &cfg.widths {
            for &a in &cfg.alphas {
                for &s in &cfg.seeds {
                    cells.push((b, w, a, s));
                }
            }
        }
    }
    cells
        .par_iter()
        .map(|&(b, w, a, s)| parity_scaling_cell(cfg, b, w, a, s))
        .collect()
}

/// `(n_params, final loss)` per width for one `(betas, alpha)` slice,
/// averaged over seeds.
pub fn final_loss_vs_params(curves: &[ScalingCurve], beta: (f64, f64), alpha: f64) -> Vec<(f64, f64)> {
    let mut widths: Vec<usize> = curves.iter().map(|c| c.width).collect();
    widths.sort_unstable();
    widths.dedup();
    widths
        .into_iter()
        .filter_map(|w| {
            let sel: Vec<&ScalingCurve> = curves
                .iter()
                .filter(|c| c.width == w && (c.beta1, c.beta2) == beta && c.alpha == alpha)
                .collect();
            if sel.is_empty() {
                return None;
            }
            let mean = sel.iter().map(|c| c.final_loss()).sum::<f64>() / sel.len() as f64;
            Some((sel[0].n_params as f64, mean))
        })
        .collect()
}
