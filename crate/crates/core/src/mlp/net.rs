//! Dense ReLU networks over a flat parameter vector, with manual backprop.
//!
//! Parameter layout: `[embedding (vocab × dim)] [W_1 (in × out) | b_1] ...`,
//! all row-major. Keeping everything in one `Vec<f64>` lets the optimizers
//! step the whole network in one call.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sigmoid, softplus};
use crate::rng::{self, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    LinearMse,
    SigmoidBce,
    SoftmaxXent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub vocab: usize,
    pub dim: usize,
    /// Tokens per example; their embeddings are concatenated.
    pub n_tokens: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    w: usize,
    b: usize,
}

#[derive(Debug, Clone)]
pub enum Inputs {
    Dense(Array2<f64>),
    Tokens(Array2<usize>),
}

impl Inputs {
    pub fn len(&self) -> usize {
        match self {
            Inputs::Dense(x) => x.nrows(),
            Inputs::Tokens(x) => x.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Inputs {
        match self {
            Inputs::Dense(x) => Inputs::Dense(x.select(Axis(0), idx)),
            Inputs::Tokens(x) => Inputs::Tokens(x.select(Axis(0), idx)),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Targets {
    /// Regression targets or per-output bits.
    Values(Array2<f64>),
    Classes(Vec<usize>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Values(y) => y.nrows(),
            Targets::Classes(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Values(y) => Targets::Values(y.select(Axis(0), idx)),
            Targets::Classes(c) => Targets::Classes(idx.iter().map(|&i| c[i]).collect()),
        }
    }
}

/// Per-example loss weights in the batch objective `(1/B) Σ w_i ℓ_i`.
#[derive(Debug, Clone, Copy)]
pub enum Weights<'a> {
    Uniform,
    /// `w_i = ℓ_i`, treated as constants.
    SelfLoss,
    Given(&'a [f64]),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLoss {
    /// The weighted objective that was differentiated.
    pub objective: f64,
    /// Plain mean of the per-example losses.
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct DenseNet {
    sizes: Vec<usize>,
    head: Head,
    embedding: Option<EmbeddingSpec>,
    layers: Vec<Layer>,
    pub params: Vec<f64>,
}

impl DenseNet {
    /// Dense stack `sizes[0] → … → sizes[last]`, initialised from `seed`.
    pub fn new(sizes: &[usize], head: Head, seed: u64) -> Result<Self> {
        Self::build(sizes, head, None, seed)
    }

    /// Embedding table in front of a dense stack whose input width is
    /// `n_tokens · dim`.
    pub fn with_embedding(
        embedding: EmbeddingSpec,
        hidden: &[usize],
        n_out: usize,
        head: Head,
        seed: u64,
    ) -> Result<Self> {
        if embedding.vocab == 0 || embedding.dim == 0 || embedding.n_tokens == 0 {
            return Err(Error::invalid("embedding", "vocab, dim and n_tokens must be >= 1"));
        }
        let mut sizes = vec![embedding.n_tokens * embedding.dim];
        sizes.extend_from_slice(hidden);
        sizes.push(n_out);
        Self::build(&sizes, head, Some(embedding), seed)
    }

    fn build(sizes: &[usize], head: Head, embedding: Option<EmbeddingSpec>, seed: u64) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::invalid("sizes", "need an input and an output size"));
        }
        if sizes.contains(&0) {
            return Err(Error::invalid("sizes", "layer sizes must be >= 1"));
        }
        let n_out = *sizes.last().unwrap();
        if head == Head::SoftmaxXent && n_out < 2 {
            return Err(Error::invalid("sizes", "softmax head needs at least 2 outputs"));
        }
        let mut off = embedding.map_or(0, |e| e.vocab * e.dim);
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for w in sizes.windows(2) {
            let l = Layer {
                fan_in: w[0],
                fan_out: w[1],
                w: off,
                b: off + w[0] * w[1],
            };
            off = l.b + l.fan_out;
            layers.push(l);
        }
        let mut net = Self {
            sizes: sizes.to_vec(),
            head,
            embedding,
            layers,
            params: vec![0.0; off],
        };
        net.init(seed);
        Ok(net)
    }

    /// Dense weights and biases `U(−1/√fan_in, 1/√fan_in)`; embeddings
    /// `N(0, 1)`.
    pub fn init(&mut self, seed: u64) {
        let mut rng = rng::substream(seed, streams::INIT);
        if let Some(e) = self.embedding {
            for v in &mut self.params[..e.vocab * e.dim] {
                *v = rng.sample(StandardNormal);
            }
        }
        for l in &self.layers {
            let bound = 1.0 / (l.fan_in as f64).sqrt();
            for v in &mut self.params[l.w..l.b + l.fan_out] {
                *v = rng.random_range(-bound..bound);
            }
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn embedding(&self) -> Option<EmbeddingSpec> {
        self.embedding
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn n_out(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn weight(&self, l: &Layer) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((l.fan_in, l.fan_out), &self.params[l.w..l.b]).expect("layout")
    }

    fn embed(&self, x: &Inputs) -> Result<Array2<f64>> {
        let width = self.sizes[0];
        match (x, self.embedding) {
            (Inputs::Dense(x), None) => {
                if x.ncols() != width {
                    return Err(Error::DimensionMismatch {
                        expected: width,
                        got: x.ncols(),
                    });
                }
                Ok(x.clone())
            }
            (Inputs::Tokens(tok), Some(e)) => {
                if tok.ncols() != e.n_tokens {
                    return Err(Error::DimensionMismatch {
                        expected: e.n_tokens,
                        got: tok.ncols(),
                    });
                }
                let table = ArrayView2::from_shape((e.vocab, e.dim), &self.params[..e.vocab * e.dim])
                    .expect("layout");
                let mut a = Array2::zeros((tok.nrows(), width));
                for (r, row) in tok.outer_iter().enumerate() {
                    for (j, &t) in row.iter().enumerate() {
                        if t >= e.vocab {
                            return Err(Error::invalid("tokens", format!("token {t} >= vocab {}", e.vocab)));
                        }
                        a.slice_mut(s![r, j * e.dim..(j + 1) * e.dim]).assign(&table.row(t));
                    }
                }
                Ok(a)
            }
            (Inputs::Dense(_), Some(_)) => Err(Error::invalid("inputs", "network expects tokens")),
            (Inputs::Tokens(_), None) => Err(Error::invalid("inputs", "network expects dense inputs")),
        }
    }

    /// Layer inputs `A_0 … A_{L−1}` and the output logits.
    fn forward_cache(&self, x: &Inputs) -> Result<(Vec<Array2<f64>>, Array2<f64>)> {
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut a = self.embed(x)?;
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = a.dot(&self.weight(l));
            z += &Array1::from(self.params[l.b..l.b + l.fan_out].to_vec());
            acts.push(a);
            if k + 1 < self.layers.len() {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        Ok((acts, a))
    }

    /// Output logits (pre-head).
    pub fn forward(&self, x: &Inputs) -> Result<Array2<f64>> {
        Ok(self.forward_cache(x)?.1)
    }

    /// Head applied to the logits: identity, sigmoid or softmax.
    pub fn predict(&self, x: &Inputs) -> Result<Array2<f64>> {
        let mut z = self.forward(x)?;
        match self.head {
            Head::LinearMse => {}
            Head::SigmoidBce => z.mapv_inplace(sigmoid),
            Head::SoftmaxXent => {
                for mut row in z.outer_iter_mut() {
                    let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    row.mapv_inplace(|v| (v - m).exp());
                    let s = row.sum();
                    row /= s;
                }
            }
        }
        Ok(z)
    }

    fn check_targets(&self, y: &Targets, n: usize) -> Result<()> {
        if y.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: y.len() });
        }
        match (self.head, y) {
            (Head::SoftmaxXent, Targets::Classes(c)) => {
                if let Some(&bad) = c.iter().find(|&&c| c >= self.n_out()) {
                    return Err(Error::invalid("targets", format!("class {bad} >= {}", self.n_out())));
                }
                Ok(())
            }
            (Head::LinearMse | Head::SigmoidBce, Targets::Values(v)) if v.ncols() == self.n_out() => Ok(()),
            (Head::LinearMse | Head::SigmoidBce, Targets::Values(v)) => Err(Error::DimensionMismatch {
                expected: self.n_out(),
                got: v.ncols(),
            }),
            _ => Err(Error::invalid("targets", "target kind does not match the head")),
        }
    }

    /// Per-example losses for given logits. Multi-output heads average over
    /// outputs.
    pub fn example_losses(&self, logits: &Array2<f64>, y: &Targets) -> Result<Vec<f64>> {
        self.check_targets(y, logits.nrows())?;
        Ok(match (self.head, y) {
            (Head::SoftmaxXent, Targets::Classes(c)) => logits
                .outer_iter()
                .zip(c)
                .map(|(z, &c)| logsumexp(z.iter().copied()) - z[c])
                .collect(),
            (head, Targets::Values(v)) => {
                let k = v.ncols() as f64;
                logits
                    .outer_iter()
                    .zip(v.outer_iter())
                    .map(|(z, t)| {
                        z.iter()
                            .zip(t)
                            .map(|(&z, &t)| match head {
                                Head::LinearMse => (z - t) * (z - t),
                                _ => softplus(z) - t * z,
                            })
                            .sum::<f64>()
                            / k
                    })
                    .collect()
            }
            _ => unreachable!("checked above"),
        })
    }

    /// Per-output losses averaged over the batch (`Values` targets only).
    pub fn output_losses(&self, logits: &Array2<f64>, y: &Targets) -> Result<Vec<f64>> {
        self.check_targets(y, logits.nrows())?;
        let Targets::Values(v) = y else {
            return Err(Error::invalid("targets", "per-output losses need value targets"));
        };
        let n = logits.nrows() as f64;
        Ok((0..v.ncols())
            .map(|j| {
                logits
                    .column(j)
                    .iter()
                    .zip(v.column(j))
                    .map(|(&z, &t)| match self.head {
                        Head::LinearMse => (z - t) * (z - t),
                        _ => softplus(z) - t * z,
                    })
                    .sum::<f64>()
                    / n
            })
            .collect())
    }

    /// Objective `(1/B) Σ w_i ℓ_i` and its gradient, written into `grad`.
    pub fn loss_grad(&self, x: &Inputs, y: &Targets, weights: Weights<'_>, grad: &mut [f64]) -> Result<BatchLoss> {
        if grad.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                got: grad.len(),
            });
        }
        let (acts, logits) = self.forward_cache(x)?;
        let losses = self.example_losses(&logits, y)?;
        let b = losses.len();
        if b == 0 {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        let w: Vec<f64> = match weights {
            Weights::Uniform => vec![1.0; b],
            Weights::SelfLoss => losses.clone(),
            Weights::Given(w) if w.len() == b => w.to_vec(),
            Weights::Given(w) => return Err(Error::DimensionMismatch { expected: b, got: w.len() }),
        };
        let bf = b as f64;
        let objective = losses.iter().zip(&w).map(|(l, w)| l * w).sum::<f64>() / bf;
        let mean_loss = losses.iter().sum::<f64>() / bf;

        // dJ/dz for the output layer
        let mut g = logits;
        match (self.head, y) {
            (Head::SoftmaxXent, Targets::Classes(c)) => {
                for ((mut row, &c), &wi) in g.outer_iter_mut().zip(c).zip(&w) {
                    let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    row.mapv_inplace(|v| (v - m).exp());
                    let s = row.sum();
                    row /= s;
                    row[c] -= 1.0;
                    row *= wi / bf;
                }
            }
            (head, Targets::Values(v)) => {
                let k = v.ncols() as f64;
                for ((mut row, t), &wi) in g.outer_iter_mut().zip(v.outer_iter()).zip(&w) {
                    let scale = wi / (bf * k);
                    row.zip_mut_with(&t, |z, &t| {
                        *z = scale
                            * match head {
                                Head::LinearMse => 2.0 * (*z - t),
                                _ => sigmoid(*z) - t,
                            }
                    });
                }
            }
            _ => unreachable!("checked in example_losses"),
        }

        grad.iter_mut().for_each(|v| *v = 0.0);
        for k in (0..self.layers.len()).rev() {
            let l = self.layers[k];
            let a = &acts[k];
            {
                let mut dw = ArrayViewMut2::from_shape((l.fan_in, l.fan_out), &mut grad[l.w..l.b]).expect("layout");
                general_mat_mul(1.0, &a.t(), &g, 0.0, &mut dw);
            }
            for (d, v) in grad[l.b..l.b + l.fan_out].iter_mut().zip(g.sum_axis(Axis(0))) {
                *d = v;
            }
            if k == 0 && self.embedding.is_none() {
                break;
            }
            let mut da = g.dot(&self.weight(&l).t());
            if k > 0 {
                // A_k = relu(Z_k) > 0 exactly where the unit was active
                da.zip_mut_with(a, |d, &act| {
                    if act <= 0.0 {
                        *d = 0.0;
                    }
                });
                g = da;
            } else if let (Some(e), Inputs::Tokens(tok)) = (self.embedding, x) {
                for (r, row) in tok.outer_iter().enumerate() {
                    for (j, &t) in row.iter().enumerate() {
                        let dst = &mut grad[t * e.dim..(t + 1) * e.dim];
                        for (d, &v) in dst.iter_mut().zip(da.slice(s![r, j * e.dim..(j + 1) * e.dim])) {
                            *d += v;
                        }
                    }
                }
            }
        }
        Ok(BatchLoss { objective, mean_loss })
    }

    /// Objective without the gradient.
    pub fn objective(&self, x: &Inputs, y: &Targets, weights: Weights<'_>) -> Result<f64> {
        let losses = self.example_losses(&self.forward(x)?, y)?;
        let b = losses.len() as f64;
        Ok(match weights {
            Weights::Uniform => losses.iter().sum::<f64>() / b,
            Weights::SelfLoss => losses.iter().map(|l| l * l).sum::<f64>() / b,
            Weights::Given(w) => losses.iter().zip(w).map(|(l, w)| l * w).sum::<f64>() / b,
        })
    }
}

fn logsumexp(z: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = z.clone().fold(f64::NEG_INFINITY, f64::max);
    m + z.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Per-example correctness: argmax for softmax, every output on the right
/// side of 0.5 for sigmoid. `None` for regression heads.
pub fn correct(head: Head, logits: &Array2<f64>, y: &Targets) -> Option<Vec<bool>> {
    match (head, y) {
        (Head::SoftmaxXent, Targets::Classes(c)) => Some(
            logits
                .outer_iter()
                .zip(c)
                .map(|(z, &c)| argmax(z.iter().copied()) == c)
                .collect(),
        ),
        (Head::SigmoidBce, Targets::Values(v)) => Some(
            logits
                .outer_iter()
                .zip(v.outer_iter())
                .map(|(z, t)| z.iter().zip(t).all(|(&z, &t)| (z > 0.0) == (t > 0.5)))
                .collect(),
        ),
        _ => None,
    }
}

/// Accuracy of each sigmoid output column.
pub fn output_accuracies(logits: &Array2<f64>, y: &Array2<f64>) -> Vec<f64> {
    let n = logits.nrows() as f64;
    (0..y.ncols())
        .map(|j| {
            logits
                .column(j)
                .iter()
                .zip(y.column(j))
                .filter(|(&z, &t)| (z > 0.0) == (t > 0.5))
                .count() as f64
                / n
        })
        .collect()
}

fn argmax(z: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in z.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_batch(head: Head, n_in: usize, n_out: usize, b: usize, seed: u64) -> (Inputs, Targets) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((b, n_in), |_| rng.random_range(-1.0..1.0));
        let y = match head {
            Head::LinearMse => Targets::Values(Array2::from_shape_fn((b, n_out), |_| rng.random_range(-1.0..1.0))),
            Head::SigmoidBce => Targets::Values(Array2::from_shape_fn((b, n_out), |_| f64::from(rng.random_bool(0.5)))),
            Head::SoftmaxXent => Targets::Classes((0..b).map(|_| rng.random_range(0..n_out)).collect()),
        };
        (Inputs::Dense(x), y)
    }

    /// Central differences against backprop, coordinate by coordinate.
    fn check_fd(net: &mut DenseNet, x: &Inputs, y: &Targets, w: Weights<'_>) {
        let h = 1e-5;
        let mut g = vec![0.0; net.n_params()];
        net.loss_grad(x, y, w, &mut g).unwrap();
        for i in 0..net.n_params() {
            let orig = net.params[i];
            net.params[i] = orig + h;
            let up = net.objective(x, y, w).unwrap();
            net.params[i] = orig - h;
            let dn = net.objective(x, y, w).unwrap();
            net.params[i] = orig;
            let fd = (up - dn) / (2.0 * h);
            let scale = g[i].abs().max(fd.abs()).max(1e-6);
            assert!((g[i] - fd).abs() / scale < 1e-4, "param {i}: backprop {} fd {fd}", g[i]);
        }
    }

    #[test]
    fn parameter_count() {
        let net = DenseNet::new(&[4, 5, 2], Head::LinearMse, 0).unwrap();
        assert_eq!(net.n_params(), 5 * 5 + 6 * 2);
        let e = EmbeddingSpec { vocab: 59, dim: 32, n_tokens: 2 };
        let net = DenseNet::with_embedding(e, &[100, 100], 59, Head::SoftmaxXent, 0).unwrap();
        assert_eq!(net.n_params(), 65 * 100 + 101 * 100 + 101 * 59 + 59 * 32);
    }

    #[test]
    fn zero_network_is_head_neutral() {
        let x = Inputs::Dense(Array2::zeros((3, 4)));
        for (head, want) in [(Head::LinearMse, 0.0), (Head::SigmoidBce, 0.5), (Head::SoftmaxXent, 1.0 / 3.0)] {
            let mut net = DenseNet::new(&[4, 6, 3], head, 1).unwrap();
            net.params.iter_mut().for_each(|p| *p = 0.0);
            let out = net.predict(&x).unwrap();
            assert!(out.iter().all(|&v| (v - want).abs() < 1e-15), "{head:?}");
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = DenseNet::new(&[9, 16, 2], Head::LinearMse, 7).unwrap();
        let b = DenseNet::new(&[9, 16, 2], Head::LinearMse, 7).unwrap();
        let c = DenseNet::new(&[9, 16, 2], Head::LinearMse, 8).unwrap();
        assert_eq!(a.params, b.params);
        assert_ne!(a.params, c.params);
        // first layer: bound 1/3
        assert!(a.params[..9 * 16 + 16].iter().all(|v| v.abs() < 1.0 / 3.0));
    }

    #[test]
    fn backprop_matches_finite_differences() {
        for head in [Head::LinearMse, Head::SigmoidBce, Head::SoftmaxXent] {
            let mut net = DenseNet::new(&[4, 5, 2], head, 3).unwrap();
            let (x, y) = random_batch(head, 4, 2, 6, 11);
            check_fd(&mut net, &x, &y, Weights::Uniform);
        }
        let mut deep = DenseNet::new(&[3, 7, 6, 4], Head::SoftmaxXent, 5).unwrap();
        let (x, y) = random_batch(Head::SoftmaxXent, 3, 4, 5, 2);
        check_fd(&mut deep, &x, &y, Weights::Uniform);
    }

    #[test]
    fn weighted_gradient_matches_finite_differences() {
        let mut net = DenseNet::new(&[4, 5, 3], Head::SigmoidBce, 4).unwrap();
        let (x, y) = random_batch(Head::SigmoidBce, 4, 3, 5, 9);
        check_fd(&mut net, &x, &y, Weights::Given(&[0.5, 2.0, 0.0, 1.0, 3.0]));
    }

    #[test]
    fn embedding_gradient_matches_finite_differences() {
        let e = EmbeddingSpec { vocab: 5, dim: 3, n_tokens: 2 };
        let mut net = DenseNet::with_embedding(e, &[6], 5, Head::SoftmaxXent, 2).unwrap();
        // token 4 never appears; its rows must get zero gradient
        let tok = Array2::from_shape_vec((4, 2), vec![0, 1, 2, 2, 3, 0, 1, 1]).unwrap();
        let x = Inputs::Tokens(tok);
        let y = Targets::Classes(vec![1, 4, 0, 2]);
        check_fd(&mut net, &x, &y, Weights::Uniform);
        let mut g = vec![0.0; net.n_params()];
        net.loss_grad(&x, &y, Weights::Uniform, &mut g).unwrap();
        assert!(g[12..15].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn self_loss_weights_are_detached() {
        let net = DenseNet::new(&[4, 5, 2], Head::LinearMse, 3).unwrap();
        let (x, y) = random_batch(Head::LinearMse, 4, 2, 6, 1);
        let losses = net.example_losses(&net.forward(&x).unwrap(), &y).unwrap();
        let mut a = vec![0.0; net.n_params()];
        let mut b = vec![0.0; net.n_params()];
        let la = net.loss_grad(&x, &y, Weights::SelfLoss, &mut a).unwrap();
        let lb = net.loss_grad(&x, &y, Weights::Given(&losses), &mut b).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }

    #[test]
    fn equal_losses_scale_the_update() {
        let net = DenseNet::new(&[3, 8, 2], Head::SigmoidBce, 6).unwrap();
        let row = [0.3, -0.7, 0.1];
        let x = Inputs::Dense(Array2::from_shape_fn((4, 3), |(_, j)| row[j]));
        let y = Targets::Values(Array2::from_shape_fn((4, 2), |(_, j)| j as f64));
        let l = net.example_losses(&net.forward(&x).unwrap(), &y).unwrap()[0];
        let mut plain = vec![0.0; net.n_params()];
        let mut weighted = vec![0.0; net.n_params()];
        net.loss_grad(&x, &y, Weights::Uniform, &mut plain).unwrap();
        net.loss_grad(&x, &y, Weights::SelfLoss, &mut weighted).unwrap();
        for (p, w) in plain.iter().zip(&weighted) {
            assert!((w - l * p).abs() <= 1e-15 * (1.0 + p.abs()));
            assert_eq!(crate::optim::sign(*w), crate::optim::sign(*p));
        }
    }

    #[test]
    fn input_and_target_mismatches() {
        let net = DenseNet::new(&[4, 5, 2], Head::SoftmaxXent, 0).unwrap();
        let x = Inputs::Dense(Array2::zeros((2, 3)));
        assert!(matches!(net.forward(&x), Err(Error::DimensionMismatch { .. })));
        let x = Inputs::Dense(Array2::zeros((2, 4)));
        let mut g = vec![0.0; net.n_params()];
        assert!(net.loss_grad(&x, &Targets::Classes(vec![0, 2]), Weights::Uniform, &mut g).is_err());
        assert!(net.loss_grad(&x, &Targets::Values(Array2::zeros((2, 2))), Weights::Uniform, &mut g).is_err());
        assert!(net.forward(&Inputs::Tokens(Array2::zeros((2, 1)))).is_err());
        assert!(DenseNet::new(&[4, 1], Head::SoftmaxXent, 0).is_err());
        assert!(DenseNet::new(&[4, 0, 2], Head::LinearMse, 0).is_err());
    }

    #[test]
    fn accuracy_helpers() {
        let z = Array2::from_shape_vec((2, 2), vec![1.0, -1.0, -0.5, 2.0]).unwrap();
        let c = correct(Head::SoftmaxXent, &z, &Targets::Classes(vec![0, 0])).unwrap();
        assert_eq!(c, vec![true, false]);
        let y = Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(output_accuracies(&z, &y), vec![0.5, 1.0]);
        assert!(correct(Head::LinearMse, &z, &Targets::Values(y)).is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn random_nets_pass_gradient_check(
            hidden in 1usize..6,
            n_in in 1usize..5,
            head_ix in 0usize..3,
            seed in 0u64..1000,
        ) {
            let head = [Head::LinearMse, Head::SigmoidBce, Head::SoftmaxXent][head_ix];
            let mut net = DenseNet::new(&[n_in, hidden, 3], head, seed).unwrap();
            let (x, y) = random_batch(head, n_in, 3, 4, seed + 1);
            check_fd(&mut net, &x, &y, Weights::Uniform);
        }
    }
}
