//! Synthetic datasets: multitask sparse parity, compositional parity,
//! modular addition and the sparse squares regression.

use std::borrow::Cow;

use ndarray::Array2;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::net::{Inputs, Targets};
use super::train::{BatchSource, Dataset};
use crate::error::{Error, Result};
use crate::rng::{self, streams, SimRng};
use crate::taskdist::{TaskDistribution, TaskSampler};

/// XOR of the selected payload bits.
pub fn parity(payload: &[u8], subset: &[usize]) -> u8 {
    subset.iter().fold(0, |acc, &j| acc ^ payload[j])
}

/// `n_tasks` parity subtasks over an `n`-bit payload, each reading its own
/// `k`-subset. Inputs are a one-hot control block followed by the payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseParityTask {
    pub n_tasks: usize,
    pub n: usize,
    pub k: usize,
    pub subsets: Vec<Vec<usize>>,
    pub dist: TaskDistribution,
}

impl SparseParityTask {
    /// Draws each subtask's subset uniformly without replacement.
    pub fn new(n_tasks: usize, n: usize, k: usize, dist: TaskDistribution, seed: u64) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::invalid("k", format!("need 1 <= k <= n = {n}, got {k}")));
        }
        let mut rng = rng::substream(seed, streams::DATA);
        let subsets = (0..n_tasks)
            .map(|_| {
                let mut s = index::sample(&mut rng, n, k).into_vec();
                s.sort_unstable();
                s
            })
            .collect();
        Self::with_subsets(n, k, subsets, dist)
    }

    pub fn with_subsets(n: usize, k: usize, subsets: Vec<Vec<usize>>, dist: TaskDistribution) -> Result<Self> {
        if subsets.is_empty() {
            return Err(Error::invalid("n_tasks", "must be >= 1"));
        }
        if dist.len() != subsets.len() {
            return Err(Error::DimensionMismatch {
                expected: subsets.len(),
                got: dist.len(),
            });
        }
        for s in &subsets {
            let mut sorted = s.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if s.len() != k || sorted.len() != k || sorted.last().is_some_and(|&j| j >= n) {
                return Err(Error::invalid("subsets", format!("{s:?} is not a {k}-subset of 0..{n}")));
            }
        }
        Ok(Self {
            n_tasks: subsets.len(),
            n,
            k,
            subsets,
            dist,
        })
    }

    pub fn input_width(&self) -> usize {
        self.n_tasks + self.n
    }

    fn fill(&self, task: usize, rng: &mut SimRng, row: &mut [f64], payload: &mut [u8]) -> usize {
        row.iter_mut().for_each(|v| *v = 0.0);
        row[task] = 1.0;
        for (j, b) in payload.iter_mut().enumerate() {
            *b = u8::from(rng.random_bool(0.5));
            row[self.n_tasks + j] = f64::from(*b);
        }
        usize::from(parity(payload, &self.subsets[task]))
    }

    fn build(&self, tasks: &[usize], rng: &mut SimRng) -> Dataset {
        let mut x = Array2::zeros((tasks.len(), self.input_width()));
        let mut y = Vec::with_capacity(tasks.len());
        let mut payload = vec![0u8; self.n];
        for (r, &t) in tasks.iter().enumerate() {
            let row = x.row_mut(r).into_slice().expect("standard layout");
            y.push(self.fill(t, rng, row, &mut payload));
        }
        Dataset {
            inputs: Inputs::Dense(x),
            targets: Targets::Classes(y),
            groups: Some(tasks.to_vec()),
        }
    }
}

/// Control index drawn from the task distribution, payload uniform.
pub fn gen_multitask_parity(task: &SparseParityTask, n_samples: usize, seed: u64) -> Dataset {
    multitask_parity_from(task, n_samples, &mut rng::substream(seed, streams::DATA))
}

/// Like [`gen_multitask_parity`] but from the evaluation stream, so it never
/// repeats the training draws of the same seed.
pub fn eval_multitask_parity(task: &SparseParityTask, n_samples: usize, seed: u64) -> Dataset {
    multitask_parity_from(task, n_samples, &mut rng::substream(seed, streams::EVAL))
}

fn multitask_parity_from(task: &SparseParityTask, n_samples: usize, rng: &mut SimRng) -> Dataset {
    let sampler = TaskSampler::new(task.dist.p());
    let tasks: Vec<usize> = (0..n_samples).map(|_| sampler.sample(rng)).collect();
    task.build(&tasks, rng)
}

/// `per_task` examples of every subtask, for per-subtask evaluation.
pub fn stratified_parity(task: &SparseParityTask, per_task: usize, seed: u64) -> Dataset {
    let mut rng = rng::substream(seed, streams::EVAL);
    let tasks: Vec<usize> = (0..task.n_tasks).flat_map(|t| std::iter::repeat_n(t, per_task)).collect();
    task.build(&tasks, &mut rng)
}

/// Fresh multitask parity samples every step.
#[derive(Debug, Clone)]
pub struct ParityStream {
    task: SparseParityTask,
    sampler: TaskSampler,
    batch_size: usize,
    rng: SimRng,
}

impl ParityStream {
    pub fn new(task: SparseParityTask, batch_size: usize, seed: u64) -> Self {
        Self {
            sampler: TaskSampler::new(task.dist.p()),
            task,
            batch_size,
            rng: rng::substream(seed, streams::BATCHES),
        }
    }
}

impl BatchSource for ParityStream {
    fn next_batch(&mut self, _step: usize) -> Result<Cow<'_, Dataset>> {
        let tasks: Vec<usize> = (0..self.batch_size)
            .map(|_| self.sampler.sample(&mut self.rng))
            .collect();
        Ok(Cow::Owned(self.task.build(&tasks, &mut self.rng)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    /// `y3 = x1⊕x2⊕x3⊕x4 = y1⊕y2`.
    Dependent,
    /// `y3 = x5⊕x6⊕x7⊕x8`, unrelated to `y1`, `y2`.
    Ablation,
}

/// Three parity outputs over uniform bit strings: `y1 = x1⊕x2`,
/// `y2 = x3⊕x4` and `y3` per `variant` (bits 1-based).
pub fn compositional_parity(n_samples: usize, n_bits: usize, variant: Composition, seed: u64) -> Result<Dataset> {
    compositional_from(n_samples, n_bits, variant, &mut rng::substream(seed, streams::DATA))
}

/// Held-out draws for the same seed.
pub fn compositional_eval(n_samples: usize, n_bits: usize, variant: Composition, seed: u64) -> Result<Dataset> {
    compositional_from(n_samples, n_bits, variant, &mut rng::substream(seed, streams::EVAL))
}

fn compositional_from(n_samples: usize, n_bits: usize, variant: Composition, rng: &mut SimRng) -> Result<Dataset> {
    if n_bits < 8 {
        return Err(Error::invalid("n_bits", format!("need at least 8 bits, got {n_bits}")));
    }
    let x = Array2::from_shape_fn((n_samples, n_bits), |_| f64::from(u8::from(rng.random_bool(0.5))));
    Ok(compositional_labels(x, variant))
}

/// Labels an explicit bit matrix.
pub fn compositional_labels(x: Array2<f64>, variant: Composition) -> Dataset {
    let y = Array2::from_shape_fn((x.nrows(), 3), |(r, c)| {
        let bits: &[usize] = match (c, variant) {
            (0, _) => &[0, 1],
            (1, _) => &[2, 3],
            (_, Composition::Dependent) => &[0, 1, 2, 3],
            (_, Composition::Ablation) => &[4, 5, 6, 7],
        };
        let b: Vec<u8> = bits.iter().map(|&j| u8::from(x[[r, j]] > 0.5)).collect();
        f64::from(b.iter().fold(0, |a, &v| a ^ v))
    });
    Dataset {
        inputs: Inputs::Dense(x),
        targets: Targets::Values(y),
        groups: None,
    }
}

/// All `p²` pairs `(a, b) → (a + b) mod p`, shuffled and split.
pub fn modular_addition(p: usize, train_frac: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if p < 2 {
        return Err(Error::invalid("p", "modulus must be >= 2"));
    }
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::invalid("train_frac", format!("must lie in (0, 1), got {train_frac}")));
    }
    let mut rng = rng::substream(seed, streams::DATA);
    let total = p * p;
    let order = index::sample(&mut rng, total, total).into_vec();
    let n_train = ((total as f64) * train_frac).round() as usize;
    let make = |ids: &[usize]| {
        let tok = Array2::from_shape_fn((ids.len(), 2), |(r, c)| if c == 0 { ids[r] / p } else { ids[r] % p });
        let y = ids.iter().map(|&i| (i / p + i % p) % p).collect();
        Dataset {
            inputs: Inputs::Tokens(tok),
            targets: Targets::Classes(y),
            groups: None,
        }
    };
    Ok((make(&order[..n_train]), make(&order[n_train..])))
}

/// `(x, y) → (x², y²)` with `x ~ U[−1, 1]` and `y` zero with probability
/// `y_zero_prob`, else `U[−1, 1]`.
pub fn sparse_squares(n: usize, y_zero_prob: f64, seed: u64) -> Result<Dataset> {
    squares_from(n, y_zero_prob, &mut rng::substream(seed, streams::DATA))
}

/// Held-out draws for the same seed.
pub fn sparse_squares_eval(n: usize, y_zero_prob: f64, seed: u64) -> Result<Dataset> {
    squares_from(n, y_zero_prob, &mut rng::substream(seed, streams::EVAL))
}

fn squares_from(n: usize, y_zero_prob: f64, rng: &mut SimRng) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&y_zero_prob) {
        return Err(Error::invalid("y_zero_prob", format!("must lie in [0, 1], got {y_zero_prob}")));
    }
    let mut x = Array2::zeros((n, 2));
    for mut row in x.outer_iter_mut() {
        row[0] = rng.random_range(-1.0..1.0);
        row[1] = if rng.random_bool(y_zero_prob) {
            0.0
        } else {
            rng.random_range(-1.0..1.0)
        };
    }
    let y = x.mapv(|v| v * v);
    Ok(Dataset {
        inputs: Inputs::Dense(x),
        targets: Targets::Values(y),
        groups: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(v: usize, n: usize) -> Vec<u8> {
        (0..n).map(|j| ((v >> j) & 1) as u8).collect()
    }

    #[test]
    fn parity_examples() {
        assert_eq!(parity(&[0, 1, 0], &[1]), 1);
        assert_eq!(parity(&[1, 1, 0], &[0, 1]), 0);
        assert_eq!(parity(&[1, 1, 1], &[0, 1, 2]), 1);
    }

    #[test]
    fn generator_labels_match_brute_force() {
        for n in 1..=10 {
            let k = n.min(3);
            let task = SparseParityTask::new(2, n, k, TaskDistribution::power_law(2, 1.0, true).unwrap(), n as u64).unwrap();
            let data = gen_multitask_parity(&task, 300, 1);
            let (Inputs::Dense(x), Targets::Classes(y)) = (&data.inputs, &data.targets) else {
                panic!()
            };
            let groups = data.groups.as_ref().unwrap();
            for r in 0..data.len() {
                let row = x.row(r);
                let t = groups[r];
                assert_eq!(row[t], 1.0);
                assert_eq!(row.iter().take(2).sum::<f64>(), 1.0);
                let payload: Vec<u8> = row.iter().skip(2).map(|&v| v as u8).collect();
                // brute force: the label is the popcount parity of the masked payload
                let mut v = 0usize;
                for (j, &b) in payload.iter().enumerate() {
                    v |= (b as usize) << j;
                }
                let mask: usize = task.subsets[t].iter().map(|&j| 1 << j).sum();
                assert_eq!(y[r], ((v & mask).count_ones() % 2) as usize);
            }
            // every payload is labelled consistently
            for v in 0..(1usize << n) {
                let mask: usize = task.subsets[0].iter().map(|&j| 1 << j).sum();
                assert_eq!(parity(&bits(v, n), &task.subsets[0]) as u32, (v & mask).count_ones() % 2);
            }
        }
    }

    #[test]
    fn single_bit_label_is_that_bit() {
        let task = SparseParityTask::with_subsets(5, 1, vec![vec![3]], TaskDistribution::explicit(vec![1.0]).unwrap()).unwrap();
        let data = gen_multitask_parity(&task, 100, 4);
        let (Inputs::Dense(x), Targets::Classes(y)) = (&data.inputs, &data.targets) else {
            panic!()
        };
        for r in 0..100 {
            assert_eq!(y[r], x[[r, 1 + 3]] as usize);
        }
    }

    #[test]
    fn control_frequencies_match_distribution() {
        let dist = TaskDistribution::power_law(10, 1.0, true).unwrap();
        let task = SparseParityTask::new(10, 4, 2, dist.clone(), 0).unwrap();
        let n = 1_000_000;
        let data = gen_multitask_parity(&task, n, 9);
        let mut counts = [0usize; 10];
        for &g in data.groups.as_ref().unwrap() {
            counts[g] += 1;
        }
        for (c, &p) in counts.iter().zip(dist.p()) {
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((*c as f64 / n as f64 - p).abs() < 3.0 * se, "{c} vs {p}");
        }
    }

    #[test]
    fn subsets_are_valid_and_seeded() {
        let dist = TaskDistribution::power_law(50, 0.0, true).unwrap();
        let a = SparseParityTask::new(50, 20, 3, dist.clone(), 1).unwrap();
        let b = SparseParityTask::new(50, 20, 3, dist.clone(), 1).unwrap();
        assert_eq!(a, b);
        for s in &a.subsets {
            assert_eq!(s.len(), 3);
            assert!(s.windows(2).all(|w| w[0] < w[1]) && s[2] < 20);
        }
        assert!(SparseParityTask::new(5, 2, 3, TaskDistribution::power_law(5, 1.0, true).unwrap(), 0).is_err());
        assert!(SparseParityTask::with_subsets(4, 2, vec![vec![1, 1]], TaskDistribution::explicit(vec![1.0]).unwrap()).is_err());
    }

    #[test]
    fn stratified_and_stream_are_deterministic() {
        let dist = TaskDistribution::power_law(3, 1.0, true).unwrap();
        let task = SparseParityTask::new(3, 6, 2, dist, 0).unwrap();
        let s = stratified_parity(&task, 4, 1);
        assert_eq!(s.groups.as_deref(), Some(&[0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2][..]));
        let mut a = ParityStream::new(task.clone(), 8, 5);
        let mut b = ParityStream::new(task, 8, 5);
        let (ba, bb) = (a.next_batch(0).unwrap().into_owned(), b.next_batch(0).unwrap().into_owned());
        assert_eq!(ba.groups, bb.groups);
        let (Inputs::Dense(xa), Inputs::Dense(xb)) = (&ba.inputs, &bb.inputs) else { panic!() };
        assert_eq!(xa, xb);
    }

    #[test]
    fn compositional_zero_input_has_zero_labels() {
        for v in [Composition::Dependent, Composition::Ablation] {
            let d = compositional_labels(Array2::zeros((3, 32)), v);
            let Targets::Values(y) = d.targets else { panic!() };
            assert!(y.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn compositional_dependent_is_xor_of_parts() {
        let d = compositional_parity(500, 32, Composition::Dependent, 3).unwrap();
        let Targets::Values(y) = &d.targets else { panic!() };
        for r in 0..500 {
            assert_eq!(y[[r, 2]], f64::from((y[[r, 0]] as u8) ^ (y[[r, 1]] as u8)));
        }
        let a = compositional_parity(500, 32, Composition::Ablation, 3).unwrap();
        let (Inputs::Dense(x), Targets::Values(y)) = (&a.inputs, &a.targets) else { panic!() };
        for r in 0..500 {
            let want = (4..8).map(|j| x[[r, j]] as u8).fold(0, |a, b| a ^ b);
            assert_eq!(y[[r, 2]], f64::from(want));
        }
    }

    #[test]
    fn modular_addition_split_is_a_partition() {
        let (tr, te) = modular_addition(59, 0.8, 0).unwrap();
        assert_eq!(tr.len() + te.len(), 59 * 59);
        assert_eq!(tr.len(), 2785);
        let mut seen = vec![false; 59 * 59];
        for d in [&tr, &te] {
            let (Inputs::Tokens(t), Targets::Classes(c)) = (&d.inputs, &d.targets) else { panic!() };
            for (row, &c) in t.outer_iter().zip(c) {
                assert_eq!((row[0] + row[1]) % 59, c);
                assert!(!seen[row[0] * 59 + row[1]]);
                seen[row[0] * 59 + row[1]] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn sparse_squares_moments() {
        let d = sparse_squares(200_000, 0.99, 1).unwrap();
        let (Inputs::Dense(x), Targets::Values(y)) = (&d.inputs, &d.targets) else { panic!() };
        let nonzero = x.column(1).iter().filter(|&&v| v != 0.0).count() as f64 / 200_000.0;
        assert!((nonzero - 0.01).abs() < 0.002);
        // zero predictor on the y output: E[y^4] = 0.01 / 5
        let m4 = y.column(1).iter().map(|v| v * v).sum::<f64>() / 200_000.0;
        assert!((m4 - 0.002).abs() < 3e-4, "{m4}");
        assert!(y.iter().zip(x.iter()).all(|(a, b)| *a == b * b));
    }
}
