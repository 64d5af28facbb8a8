//! Stateful first-order optimizers over flat parameter vectors.
//!
//! All algorithms share one interface: an [`OptimizerSpec`] (hyperparameters)
//! and an [`OptimizerState`] (moment buffers, lazily sized on the first step).
//! Weight decay is decoupled everywhere: `θ ← θ − lr·wd·θ` is applied in
//! addition to the algorithm's own update, using the pre-update parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Sgd,
    Signgd,
    Adam,
    Ademamix,
    Lion,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Sgd => "sgd",
            Algo::Signgd => "signgd",
            Algo::Adam => "adam",
            Algo::Ademamix => "ademamix",
            Algo::Lion => "lion",
        }
    }
}

impl std::str::FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Algo::Sgd),
            "signgd" => Ok(Algo::Signgd),
            "adam" => Ok(Algo::Adam),
            "ademamix" => Ok(Algo::Ademamix),
            "lion" => Ok(Algo::Lion),
            other => Err(Error::invalid("algo", format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSpec {
    pub algo: Algo,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Slow-momentum decay (AdEMAMix only).
    pub beta3: f64,
    /// Slow-momentum weight (AdEMAMix only).
    pub mix_alpha: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl OptimizerSpec {
    pub fn new(algo: Algo, lr: f64) -> Self {
        let (beta1, beta2) = match algo {
            Algo::Lion => (0.9, 0.99),
            _ => (0.9, 0.999),
        };
        Self {
            algo,
            lr,
            beta1,
            beta2,
            beta3: 0.9999,
            mix_alpha: 5.0,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }

    pub fn sgd(lr: f64) -> Self {
        Self::new(Algo::Sgd, lr)
    }

    pub fn signgd(lr: f64) -> Self {
        Self::new(Algo::Signgd, lr)
    }

    pub fn adam(lr: f64) -> Self {
        Self::new(Algo::Adam, lr)
    }

    pub fn ademamix(lr: f64) -> Self {
        Self::new(Algo::Ademamix, lr)
    }

    pub fn lion(lr: f64) -> Self {
        Self::new(Algo::Lion, lr)
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    pub fn with_lr(mut self, lr: f64) -> Self {
        self.lr = lr;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("lr", format!("must be > 0, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2), ("beta3", self.beta3)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(name, format!("must lie in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid("eps", format!("must be > 0, got {}", self.eps)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::invalid(
                "weight_decay",
                format!("must be >= 0, got {}", self.weight_decay),
            ));
        }
        if !(self.mix_alpha >= 0.0) {
            return Err(Error::invalid("mix_alpha", format!("must be >= 0, got {}", self.mix_alpha)));
        }
        Ok(())
    }
}

/// Moment buffers. `m1` is the (fast) first moment, `m2` the AdEMAMix slow
/// momentum and `v` the second moment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerState {
    pub step_count: u64,
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
    pub v: Vec<f64>,
}

/// `sign(0) = 0`.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl OptimizerState {
    pub fn new() -> Self {
        Self::default()
    }

    fn ensure(buf: &mut Vec<f64>, n: usize) {
        if buf.len() != n {
            *buf = vec![0.0; n];
        }
    }

    /// Applies one update to `params` in place.
    pub fn step(&mut self, spec: &OptimizerSpec, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != grad.len() {
            return Err(Error::DimensionMismatch {
                expected: params.len(),
                got: grad.len(),
            });
        }
        if let Some((index, &value)) = grad.iter().enumerate().find(|(_, g)| !g.is_finite()) {
            return Err(Error::NumericFault { index, value });
        }
        let n = params.len();
        self.step_count += 1;
        let t = self.step_count as i32;
        let lr = spec.lr;
        let decay = lr * spec.weight_decay;

        match spec.algo {
            Algo::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g + decay * *p;
                }
            }
            Algo::Signgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * sign(*g) + decay * *p;
                }
            }
            Algo::Adam => {
                Self::ensure(&mut self.m1, n);
                Self::ensure(&mut self.v, n);
                let (b1, b2) = (spec.beta1, spec.beta2);
                let bc1 = 1.0 - b1.powi(t);
                let bc2 = 1.0 - b2.powi(t);
                for i in 0..n {
                    let g = grad[i];
                    self.m1[i] = b1 * self.m1[i] + (1.0 - b1) * g;
                    self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
                    let m_hat = self.m1[i] / bc1;
                    let v_hat = self.v[i] / bc2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + spec.eps) + decay * params[i];
                }
            }
            Algo::Ademamix => {
                Self::ensure(&mut self.m1, n);
                Self::ensure(&mut self.m2, n);
                Self::ensure(&mut self.v, n);
                let (b1, b2, b3) = (spec.beta1, spec.beta2, spec.beta3);
                let bc1 = 1.0 - b1.powi(t);
                let bc2 = 1.0 - b2.powi(t);
                for i in 0..n {
                    let g = grad[i];
                    self.m1[i] = b1 * self.m1[i] + (1.0 - b1) * g;
                    self.m2[i] = b3 * self.m2[i] + (1.0 - b3) * g;
                    self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
                    let m_hat = self.m1[i] / bc1;
                    let v_hat = self.v[i] / bc2;
                    let dir = (m_hat + spec.mix_alpha * self.m2[i]) / (v_hat.sqrt() + spec.eps);
                    params[i] -= lr * dir + decay * params[i];
                }
            }
            Algo::Lion => {
                Self::ensure(&mut self.m1, n);
                let (b1, b2) = (spec.beta1, spec.beta2);
                for i in 0..n {
                    let g = grad[i];
                    let c = b1 * self.m1[i] + (1.0 - b1) * g;
                    params[i] -= lr * sign(c) + decay * params[i];
                    self.m1[i] = b2 * self.m1[i] + (1.0 - b2) * g;
                }
            }
        }
        Ok(())
    }
}

/// Learning-rate multiplier as a function of the step index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Constant,
    /// Linear warmup over `warmup` steps, then cosine decay to
    /// `min_factor` at `total`.
    WarmupCosine {
        warmup: usize,
        total: usize,
        min_factor: f64,
    },
}

impl Schedule {
    pub fn factor(&self, step: usize) -> f64 {
        match *self {
            Schedule::Constant => 1.0,
            Schedule::WarmupCosine {
                warmup,
                total,
                min_factor,
            } => {
                if step < warmup {
                    return (step + 1) as f64 / warmup as f64;
                }
                let span = total.saturating_sub(warmup).max(1) as f64;
                let x = ((step - warmup) as f64 / span).min(1.0);
                min_factor + (1.0 - min_factor) * 0.5 * (1.0 + (std::f64::consts::PI * x).cos())
            }
        }
    }
}

/// Spec and state bundled together.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub spec: OptimizerSpec,
    pub state: OptimizerState,
}

impl Optimizer {
    pub fn new(spec: OptimizerSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            state: OptimizerState::new(),
        })
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        self.state.step(&self.spec, params, grad)
    }

    /// Step with a learning rate overriding the spec's (used by schedules).
    pub fn step_with_lr(&mut self, lr: f64, params: &mut [f64], grad: &[f64]) -> Result<()> {
        let spec = self.spec.with_lr(lr);
        self.state.step(&spec, params, grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run(spec: OptimizerSpec, theta: &[f64], grads: &[Vec<f64>]) -> Vec<f64> {
        let mut p = theta.to_vec();
        let mut st = OptimizerState::new();
        for g in grads {
            st.step(&spec, &mut p, g).unwrap();
        }
        p
    }

    #[test]
    fn warmup_cosine_shape() {
        let s = Schedule::WarmupCosine {
            warmup: 10,
            total: 110,
            min_factor: 0.1,
        };
        assert!((s.factor(0) - 0.1).abs() < 1e-15);
        assert_eq!(s.factor(9), 1.0);
        assert_eq!(s.factor(10), 1.0);
        assert!((s.factor(60) - 0.55).abs() < 1e-12);
        assert!((s.factor(110) - 0.1).abs() < 1e-12);
        assert!((s.factor(10_000) - 0.1).abs() < 1e-12);
        assert_eq!(Schedule::Constant.factor(123), 1.0);
    }

    #[test]
    fn signgd_step_example() {
        let p = run(OptimizerSpec::signgd(3e-4), &[0.0; 3], &[vec![2.0, -0.5, 0.0]]);
        assert_eq!(p, vec![-3e-4, 3e-4, 0.0]);
    }

    #[test]
    fn adam_with_zero_betas_is_signgd() {
        let g = vec![vec![2.0, -0.5, 1e-3, -7.0]];
        let adam = run(
            OptimizerSpec::adam(1e-2).with_betas(0.0, 0.0).with_eps(1e-12),
            &[0.1, 0.2, 0.3, 0.4],
            &g,
        );
        let sgn = run(OptimizerSpec::signgd(1e-2), &[0.1, 0.2, 0.3, 0.4], &g);
        for (a, b) in adam.iter().zip(&sgn) {
            let step_a = a - 0.1;
            let step_b = b - 0.1;
            assert!((step_a - step_b).abs() <= 1e-6 * step_b.abs().max(1e-2));
        }
    }

    #[test]
    fn adam_constant_gradient_displacement() {
        // Bias-corrected moments are exact for a constant gradient:
        // m_hat = c, v_hat = c^2, so every step moves by lr * c / (|c| + eps).
        let c = 0.37;
        let lr = 1e-3;
        let spec = OptimizerSpec::adam(lr);
        let mut p = vec![0.0; 4];
        let mut st = OptimizerState::new();
        let mut prev = p.clone();
        for t in 1..=1000 {
            st.step(&spec, &mut p, &[c; 4]).unwrap();
            if t > 10 {
                for i in 0..4 {
                    let d = p[i] - prev[i];
                    assert!((d + lr * c / (c + 1e-8)).abs() < 1e-12);
                }
            }
            prev.clone_from(&p);
        }
        assert!((p[0] + 1000.0 * lr).abs() < 1e-6);
    }

    #[test]
    fn nonfinite_gradient_reports_index() {
        let mut st = OptimizerState::new();
        let mut p = vec![0.0; 3];
        let err = st
            .step(&OptimizerSpec::adam(1e-3), &mut p, &[0.0, f64::NAN, 1.0])
            .unwrap_err();
        assert!(matches!(err, Error::NumericFault { index: 1, .. }));
        assert_eq!(st.step_count, 0);
    }

    #[test]
    fn mismatched_lengths_fail() {
        let mut st = OptimizerState::new();
        let mut p = vec![0.0; 3];
        assert!(st.step(&OptimizerSpec::sgd(1.0), &mut p, &[1.0]).is_err());
    }

    #[test]
    fn step_count_and_lazy_buffers() {
        let mut st = OptimizerState::new();
        let mut p = vec![1.0; 5];
        assert!(st.m1.is_empty());
        st.step(&OptimizerSpec::ademamix(1e-3), &mut p, &[1.0; 5]).unwrap();
        assert_eq!(st.step_count, 1);
        assert_eq!((st.m1.len(), st.m2.len(), st.v.len()), (5, 5, 5));
    }

    #[test]
    fn decoupled_weight_decay_with_zero_gradient() {
        for algo in [Algo::Sgd, Algo::Signgd, Algo::Adam, Algo::Lion] {
            let spec = OptimizerSpec::new(algo, 0.1).with_weight_decay(0.5);
            let p = run(spec, &[2.0], &[vec![0.0]]);
            assert!((p[0] - 2.0 * (1.0 - 0.05)).abs() < 1e-12, "{algo:?}");
        }
    }

    #[test]
    fn lion_first_step_is_sign_of_gradient() {
        let p = run(OptimizerSpec::lion(0.01), &[0.0, 0.0, 0.0], &[vec![3.0, -1e-6, 0.0]]);
        assert_eq!(p, vec![-0.01, 0.01, 0.0]);
    }

    #[test]
    fn ademamix_first_step_matches_hand_computation() {
        // t = 1: m_hat = g, v_hat = g^2, slow momentum = (1 - beta3) g.
        let spec = OptimizerSpec::ademamix(1e-3);
        let g = 0.5;
        let p = run(spec, &[0.0], &[vec![g]]);
        let dir = (g + spec.mix_alpha * (1.0 - spec.beta3) * g) / (g + spec.eps);
        assert!((p[0] + 1e-3 * dir).abs() < 1e-15);
    }

    #[test]
    fn validation_rejects_bad_hyperparameters() {
        assert!(OptimizerSpec::sgd(0.0).validate().is_err());
        assert!(OptimizerSpec::adam(1e-3).with_betas(1.0, 0.9).validate().is_err());
        assert!(OptimizerSpec::adam(1e-3).with_eps(0.0).validate().is_err());
        assert!(OptimizerSpec::adam(1e-3).with_weight_decay(-1.0).validate().is_err());
        assert!(OptimizerSpec::lion(1e-3).validate().is_ok());
    }

    fn grads_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(
            prop::collection::vec(
                prop_oneof![(0.01f64..10.0), (-10.0f64..-0.01)],
                6,
            ),
            1..20,
        )
    }

    proptest! {
        #[test]
        fn sign_equivalence_trajectories(grads in grads_strategy()) {
            let theta = [0.0; 6];
            let a = run(OptimizerSpec::adam(1e-3).with_betas(0.0, 0.0).with_eps(1e-12), &theta, &grads);
            let s = run(OptimizerSpec::signgd(1e-3), &theta, &grads);
            for (x, y) in a.iter().zip(&s) {
                prop_assert!((x - y).abs() < 1e-12 * grads.len() as f64 + 1e-14);
            }
        }

        #[test]
        fn sign_methods_are_scale_free_sgd_is_not(grads in grads_strategy(), scale in 1.5f64..100.0) {
            let theta = [0.3; 6];
            let scaled: Vec<Vec<f64>> = grads.iter().map(|g| g.iter().map(|x| x * scale).collect()).collect();
            for spec in [OptimizerSpec::signgd(1e-2), OptimizerSpec::lion(1e-2)] {
                prop_assert_eq!(run(spec, &theta, &grads), run(spec, &theta, &scaled));
            }
            let a = run(OptimizerSpec::sgd(1e-2), &theta, &grads);
            let b = run(OptimizerSpec::sgd(1e-2), &theta, &scaled);
            prop_assert!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-9));
        }

        #[test]
        fn determinism(grads in grads_strategy()) {
            for algo in [Algo::Sgd, Algo::Signgd, Algo::Adam, Algo::Ademamix, Algo::Lion] {
                let spec = OptimizerSpec::new(algo, 1e-3).with_weight_decay(0.01);
                let a = run(spec, &[0.5; 6], &grads);
                let b = run(spec, &[0.5; 6], &grads);
                prop_assert_eq!(a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                                b.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
            }
        }
    }
}
