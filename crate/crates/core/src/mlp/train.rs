//! Minibatch training with periodic evaluation and per-subtask success
//! times.

use std::borrow::Cow;
use std::io::Write;
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::net::{correct, output_accuracies, DenseNet, Head, Inputs, Targets, Weights};
use crate::error::{Error, Result};
use crate::optim::{Optimizer, OptimizerSpec, Schedule};
use crate::rng::{self, streams, SimRng};
use crate::trajectory::fmt_num;

/// Loss above which a run is declared diverged.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Inputs,
    pub targets: Targets,
    /// Subtask id per example, used for stratified metrics.
    pub groups: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(inputs: Inputs, targets: Targets) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        Ok(Self {
            inputs,
            targets,
            groups: None,
        })
    }

    pub fn with_groups(mut self, groups: Vec<usize>) -> Result<Self> {
        if groups.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: groups.len(),
            });
        }
        self.groups = Some(groups);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select(idx),
            targets: self.targets.select(idx),
            groups: self.groups.as_ref().map(|g| idx.iter().map(|&i| g[i]).collect()),
        }
    }
}

/// Supplies the training batch for each step.
pub trait BatchSource {
    fn next_batch(&mut self, step: usize) -> Result<Cow<'_, Dataset>>;
}

/// A fixed dataset served whole (`batch_size` 0 or at least its length) or
/// as minibatches drawn without replacement.
#[derive(Debug, Clone)]
pub struct Minibatches {
    data: Dataset,
    batch_size: usize,
    rng: SimRng,
}

impl Minibatches {
    pub fn new(data: Dataset, batch_size: usize, seed: u64) -> Self {
        Self {
            data,
            batch_size,
            rng: rng::substream(seed, streams::BATCHES),
        }
    }

    pub fn full(data: Dataset) -> Self {
        Self::new(data, 0, 0)
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }
}

impl BatchSource for Minibatches {
    fn next_batch(&mut self, _step: usize) -> Result<Cow<'_, Dataset>> {
        let n = self.data.len();
        if self.batch_size == 0 || self.batch_size >= n {
            return Ok(Cow::Borrowed(&self.data));
        }
        let mut idx = index::sample(&mut self.rng, n, self.batch_size).into_vec();
        idx.sort_unstable();
        Ok(Cow::Owned(self.data.select(&idx)))
    }
}

/// How evaluation metrics are split into subtasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Subtasks {
    /// One subtask: the whole output.
    Whole,
    /// Examples grouped by [`Dataset::groups`].
    Groups { n: usize },
    /// One subtask per output column.
    Outputs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "threshold", rename_all = "snake_case")]
pub enum SuccessRule {
    AccuracyAtLeast(f64),
    LossBelow(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: Option<f64>,
    pub sub_loss: Vec<f64>,
    /// Empty for regression heads.
    pub sub_acc: Vec<f64>,
}

impl Evaluation {
    pub fn succeeded(&self, rule: SuccessRule) -> Vec<bool> {
        match rule {
            SuccessRule::AccuracyAtLeast(th) => self.sub_acc.iter().map(|&a| a >= th).collect(),
            SuccessRule::LossBelow(th) => self.sub_loss.iter().map(|&l| l < th).collect(),
        }
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

pub fn evaluate(net: &DenseNet, data: &Dataset, subtasks: Subtasks) -> Result<Evaluation> {
    let logits = net.forward(&data.inputs)?;
    let losses = net.example_losses(&logits, &data.targets)?;
    let hits = correct(net.head(), &logits, &data.targets);
    let loss = mean(losses.iter().copied());
    let accuracy = hits.as_ref().map(|h| mean(h.iter().map(|&c| f64::from(u8::from(c)))));
    let (sub_loss, sub_acc) = match subtasks {
        Subtasks::Whole => (vec![loss], accuracy.into_iter().collect()),
        Subtasks::Groups { n } => {
            let groups = data
                .groups
                .as_ref()
                .ok_or_else(|| Error::Data("grouped metrics need a dataset with groups".into()))?;
            let mut sl = vec![(0.0, 0usize); n];
            let mut sa = vec![0usize; n];
            for (k, &g) in groups.iter().enumerate() {
                if g >= n {
                    return Err(Error::Data(format!("group {g} out of range {n}")));
                }
                sl[g].0 += losses[k];
                sl[g].1 += 1;
                if hits.as_ref().is_some_and(|h| h[k]) {
                    sa[g] += 1;
                }
            }
            let sub_loss = sl.iter().map(|&(s, c)| s / c as f64).collect();
            let sub_acc = if hits.is_some() {
                sl.iter().zip(&sa).map(|(&(_, c), &a)| a as f64 / c as f64).collect()
            } else {
                Vec::new()
            };
            (sub_loss, sub_acc)
        }
        Subtasks::Outputs => {
            let sub_loss = net.output_losses(&logits, &data.targets)?;
            let sub_acc = match (&data.targets, net.head()) {
                (Targets::Values(y), Head::SigmoidBce) => output_accuracies(&logits, y),
                _ => Vec::new(),
            };
            (sub_loss, sub_acc)
        }
    };
    Ok(Evaluation {
        loss,
        accuracy,
        sub_loss,
        sub_acc,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerSpec,
    #[serde(default)]
    pub schedule: Schedule,
    pub n_steps: usize,
    pub eval_every: usize,
    /// Weight each example's loss by its own (detached) value.
    #[serde(default)]
    pub reweight: bool,
    pub subtasks: Subtasks,
    pub success: SuccessRule,
    /// End the run at the first evaluation where every subtask succeeded.
    #[serde(default)]
    pub stop_on_success: bool,
}

impl TrainConfig {
    pub fn new(optimizer: OptimizerSpec, n_steps: usize) -> Self {
        Self {
            optimizer,
            schedule: Schedule::Constant,
            n_steps,
            eval_every: 50,
            reweight: false,
            subtasks: Subtasks::Whole,
            success: SuccessRule::AccuracyAtLeast(0.99),
            stop_on_success: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub config: serde_json::Value,
    pub steps: Vec<usize>,
    /// Full training-set loss when one was supplied, else the batch loss.
    pub train_loss: Vec<f64>,
    pub test_loss: Vec<f64>,
    pub train_acc: Vec<Option<f64>>,
    pub test_acc: Vec<Option<f64>>,
    pub sub_loss: Vec<Vec<f64>>,
    pub sub_acc: Vec<Vec<f64>>,
    pub success_rule: SuccessRule,
    /// First evaluation step at which each subtask met `success_rule`.
    pub success: Vec<Option<usize>>,
}

impl RunResult {
    pub fn final_test_acc(&self) -> Option<f64> {
        self.test_acc.last().copied().flatten()
    }

    pub fn final_train_acc(&self) -> Option<f64> {
        self.train_acc.last().copied().flatten()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let n_sub = self.sub_loss.first().map_or(0, Vec::len);
        let n_acc = self.sub_acc.first().map_or(0, Vec::len);
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = ["step", "train_loss", "test_loss", "train_acc", "test_acc"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((1..=n_sub).map(|i| format!("sub_loss_{i}")));
        header.extend((1..=n_acc).map(|i| format!("sub_acc_{i}")));
        out.write_record(&header)?;
        let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
        for r in 0..self.steps.len() {
            let mut rec = vec![
                self.steps[r].to_string(),
                fmt_num(self.train_loss[r]),
                fmt_num(self.test_loss[r]),
                opt(self.train_acc[r]),
                opt(self.test_acc[r]),
            ];
            rec.extend(self.sub_loss[r].iter().map(|&v| fmt_num(v)));
            rec.extend(self.sub_acc[r].iter().map(|&v| fmt_num(v)));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(f), self)?;
        Ok(())
    }
}

/// Evaluation data: subtask metrics and success times come from `test`.
#[derive(Debug, Clone, Copy)]
pub struct EvalSets<'a> {
    pub test: &'a Dataset,
    pub train: Option<&'a Dataset>,
}

/// Trains `net` in place. Evaluates at step 0, every `eval_every` steps and
/// at the end; the batch loss is checked for divergence at every step.
pub fn train(
    net: &mut DenseNet,
    source: &mut dyn BatchSource,
    eval: EvalSets<'_>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<RunResult> {
    if cfg.n_steps == 0 {
        return Err(Error::invalid("n_steps", "must be >= 1"));
    }
    if cfg.eval_every == 0 {
        return Err(Error::invalid("eval_every", "must be >= 1"));
    }
    if matches!(cfg.success, SuccessRule::AccuracyAtLeast(_)) && net.head() == Head::LinearMse {
        return Err(Error::invalid("success", "accuracy threshold needs a classification head"));
    }
    let mut opt = Optimizer::new(cfg.optimizer)?;
    let mut grad = vec![0.0; net.n_params()];
    let mut res = RunResult {
        seed,
        config: serde_json::to_value(cfg)?,
        steps: Vec::new(),
        train_loss: Vec::new(),
        test_loss: Vec::new(),
        train_acc: Vec::new(),
        test_acc: Vec::new(),
        sub_loss: Vec::new(),
        sub_acc: Vec::new(),
        success_rule: cfg.success,
        success: Vec::new(),
    };
    let weights = if cfg.reweight {
        Weights::SelfLoss
    } else {
        Weights::Uniform
    };

    for step in 0..=cfg.n_steps {
        let batch = source.next_batch(step)?;
        let bl = net
            .loss_grad(&batch.inputs, &batch.targets, weights, &mut grad)
            .map_err(|e| e.at_step(step))?;
        drop(batch);
        if !bl.mean_loss.is_finite() || bl.mean_loss > DIVERGENCE_LOSS {
            return Err(Error::Diverged {
                step,
                loss: bl.mean_loss,
            });
        }
        if step % cfg.eval_every == 0 || step == cfg.n_steps {
            let te = evaluate(net, eval.test, cfg.subtasks)?;
            let (train_loss, train_acc) = match eval.train {
                Some(d) => {
                    let tr = evaluate(net, d, Subtasks::Whole)?;
                    (tr.loss, tr.accuracy)
                }
                None => (bl.mean_loss, None),
            };
            if res.success.is_empty() {
                res.success = vec![None; te.sub_loss.len()];
            }
            let ok = te.succeeded(cfg.success);
            for (s, &hit) in res.success.iter_mut().zip(&ok) {
                if hit && s.is_none() {
                    *s = Some(step);
                }
            }
            res.steps.push(step);
            res.train_loss.push(train_loss);
            res.test_loss.push(te.loss);
            res.train_acc.push(train_acc);
            res.test_acc.push(te.accuracy);
            res.sub_loss.push(te.sub_loss);
            res.sub_acc.push(te.sub_acc);
            if cfg.stop_on_success && res.success.iter().all(Option::is_some) {
                break;
            }
        }
        if step == cfg.n_steps {
            break;
        }
        let lr = cfg.optimizer.lr * cfg.schedule.factor(step);
        opt.step_with_lr(lr, &mut net.params, &grad)
            .map_err(|e| e.at_step(step))?;
    }
    Ok(res)
}
