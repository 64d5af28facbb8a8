//! Task frequency distributions and task-vector geometries.

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistKind {
    PowerLaw,
    Exponential,
    Explicit,
}

/// Frequencies `p_1, ..., p_n` of the tasks a model is trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDistribution {
    p: Vec<f64>,
    alpha: Option<f64>,
    kind: DistKind,
    normalized: bool,
}

impl TaskDistribution {
    /// `p_i ∝ i^(-alpha)`, optionally normalized to sum to one.
    pub fn power_law(n_task: usize, alpha: f64, normalize: bool) -> Result<Self> {
        if n_task == 0 {
            return Err(Error::EmptyDistribution);
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::invalid("alpha", format!("must be finite and >= 0, got {alpha}")));
        }
        let raw: Vec<f64> = (1..=n_task).map(|i| (i as f64).powf(-alpha)).collect();
        let p = if normalize { normalize_sum(raw) } else { raw };
        Ok(Self {
            p,
            alpha: Some(alpha),
            kind: DistKind::PowerLaw,
            normalized: normalize,
        })
    }

    /// `p_i ∝ exp(-alpha * i)`, normalized.
    pub fn exponential(n_task: usize, alpha: f64) -> Result<Self> {
        if n_task == 0 {
            return Err(Error::EmptyDistribution);
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::invalid("alpha", format!("must be finite and >= 0, got {alpha}")));
        }
        // shift the exponent so the largest term is 1 and nothing underflows first
        let raw: Vec<f64> = (1..=n_task).map(|i| (-alpha * (i as f64 - 1.0)).exp()).collect();
        if raw.iter().any(|&x| x <= 0.0) {
            return Err(Error::invalid("alpha", "frequencies underflow to zero"));
        }
        Ok(Self {
            p: normalize_sum(raw),
            alpha: Some(alpha),
            kind: DistKind::Exponential,
            normalized: true,
        })
    }

    /// Frequencies given directly. Every entry must be positive; the order is
    /// kept as given (dependency experiments deliberately use increasing
    /// frequencies).
    pub fn explicit(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        if let Some(bad) = p.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::invalid("p", format!("frequencies must be positive, got {bad}")));
        }
        let normalized = (p.iter().sum::<f64>() - 1.0).abs() < 1e-12;
        Ok(Self {
            p,
            alpha: None,
            kind: DistKind::Explicit,
            normalized,
        })
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn kind(&self) -> DistKind {
        self.kind
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn is_non_increasing(&self) -> bool {
        self.p.windows(2).all(|w| w[0] >= w[1])
    }

    /// Sampler over task indices with probabilities proportional to `p`.
    pub fn sampler(&self) -> TaskSampler {
        TaskSampler::new(&self.p)
    }
}

fn normalize_sum(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}

/// Inverse-CDF sampler over task indices.
#[derive(Debug, Clone)]
pub struct TaskSampler {
    cdf: Vec<f64>,
}

impl TaskSampler {
    pub fn new(weights: &[f64]) -> Self {
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        Self { cdf }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }

    /// Counts per task for `n` i.i.d. draws.
    pub fn counts<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<usize> {
        let mut counts = vec![0; self.cdf.len()];
        for _ in 0..n {
            counts[self.sample(rng)] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorMode {
    Random,
    Orthogonalized,
    Onehot,
}

/// Unit task vectors, one row per task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskVectorSet {
    vectors: Array2<f64>,
    mode: VectorMode,
}

impl TaskVectorSet {
    pub fn new(n_task: usize, n_dim: usize, mode: VectorMode, seed: u64) -> Result<Self> {
        if n_task == 0 {
            return Err(Error::EmptyDistribution);
        }
        if n_dim == 0 {
            return Err(Error::invalid("n_dim", "must be >= 1"));
        }
        let vectors = match mode {
            VectorMode::Onehot => {
                if n_task > n_dim {
                    return Err(Error::InfeasibleOrthogonalization { n_task, n_dim });
                }
                let mut v = Array2::zeros((n_task, n_dim));
                for i in 0..n_task {
                    v[[i, i]] = 1.0;
                }
                v
            }
            VectorMode::Random => {
                let mut v = gaussian_rows(n_task, n_dim, seed);
                for mut row in v.rows_mut() {
                    let norm = row.dot(&row).sqrt();
                    row /= norm;
                }
                v
            }
            VectorMode::Orthogonalized => {
                if n_task > n_dim {
                    return Err(Error::InfeasibleOrthogonalization { n_task, n_dim });
                }
                let mut v = gaussian_rows(n_task, n_dim, seed);
                gram_schmidt(&mut v);
                v
            }
        };
        Ok(Self { vectors, mode })
    }

    /// Wraps an existing matrix after normalizing its rows.
    pub fn from_rows(mut vectors: Array2<f64>) -> Result<Self> {
        if vectors.nrows() == 0 {
            return Err(Error::EmptyDistribution);
        }
        for mut row in vectors.rows_mut() {
            let norm = row.dot(&row).sqrt();
            if !(norm > 0.0) {
                return Err(Error::invalid("vectors", "zero-length task vector"));
            }
            row /= norm;
        }
        Ok(Self {
            vectors,
            mode: VectorMode::Random,
        })
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(i)
    }

    pub fn mode(&self) -> VectorMode {
        self.mode
    }

    pub fn n_task(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn n_dim(&self) -> usize {
        self.vectors.ncols()
    }

    /// `C_ij = t_i · t_j`.
    pub fn correlation_matrix(&self) -> Array2<f64> {
        let mut c = self.vectors.dot(&self.vectors.t());
        // rows are unit vectors; pin the diagonal and the symmetry exactly
        let n = c.nrows();
        for i in 0..n {
            c[[i, i]] = 1.0;
            for j in 0..i {
                let avg = 0.5 * (c[[i, j]] + c[[j, i]]);
                c[[i, j]] = avg;
                c[[j, i]] = avg;
            }
        }
        c
    }
}

fn gaussian_rows(n_task: usize, n_dim: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng::substream(seed, streams::TASK_VECTORS);
    let scale = (n_dim as f64).sqrt().recip();
    Array2::from_shape_simple_fn((n_task, n_dim), || {
        let z: f64 = rng.sample(StandardNormal);
        z * scale
    })
}

/// Modified Gram–Schmidt over rows in order, with one re-orthogonalization
/// pass so that inner products land well below 1e-12.
fn gram_schmidt(v: &mut Array2<f64>) {
    let n = v.nrows();
    for i in 0..n {
        for _pass in 0..2 {
            for j in 0..i {
                let (done, mut rest) = v.view_mut().split_at(ndarray::Axis(0), i);
                let basis = done.row(j);
                let mut row = rest.row_mut(0);
                let proj = row.dot(&basis);
                row.scaled_add(-proj, &basis);
            }
        }
        let mut row = v.row_mut(i);
        let norm = row.dot(&row).sqrt();
        row /= norm;
    }
}
