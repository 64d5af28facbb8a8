//! Quadratic loss `Σ w_i x_i²` with `x = Rθ`, for comparing optimizers in
//! basis-aligned and rotated coordinates.

use std::io::Write;

use ndarray::{arr2, Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{Optimizer, OptimizerSpec};
use crate::trajectory::fmt_num;

pub const DEFAULT_WEIGHTS: [f64; 4] = [1.0, 0.1, 0.01, 0.001];

/// The 4×4 Hadamard matrix scaled by 1/2, so it is orthogonal.
pub fn hadamard4() -> Array2<f64> {
    arr2(&[
        [1.0, 1.0, 1.0, 1.0],
        [1.0, 1.0, -1.0, -1.0],
        [1.0, -1.0, 1.0, -1.0],
        [1.0, -1.0, -1.0, 1.0],
    ]) * 0.5
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticLoss {
    weights: Vec<f64>,
    rotation: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticEval {
    pub total: f64,
    pub per_component: Vec<f64>,
}

impl QuadraticLoss {
    pub fn new(weights: Vec<f64>, rotation: Array2<f64>) -> Result<Self> {
        let n = weights.len();
        if n == 0 {
            return Err(Error::invalid("weights", "must be non-empty"));
        }
        if weights.iter().any(|&w| !(w > 0.0)) || weights.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("weights", "must be positive and non-increasing"));
        }
        if rotation.dim() != (n, n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: rotation.nrows(),
            });
        }
        let gram = rotation.t().dot(&rotation);
        let off = (&gram - &Array2::<f64>::eye(n)).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if off > 1e-12 {
            return Err(Error::invalid("rotation", format!("not orthogonal (max |RᵀR − I| = {off:e})")));
        }
        Ok(Self { weights, rotation })
    }

    /// Default weights, identity or Hadamard rotation.
    pub fn standard(rotated: bool) -> Self {
        let r = if rotated { hadamard4() } else { Array2::eye(4) };
        Self::new(DEFAULT_WEIGHTS.to_vec(), r).expect("built-in loss is valid")
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rotation(&self) -> &Array2<f64> {
        &self.rotation
    }

    pub fn coords(&self, theta: &[f64]) -> Result<Array1<f64>> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: theta.len(),
            });
        }
        Ok(self.rotation.dot(&ArrayView1::from(theta)))
    }

    pub fn eval(&self, theta: &[f64]) -> Result<QuadraticEval> {
        let x = self.coords(theta)?;
        let per_component: Vec<f64> = x.iter().zip(&self.weights).map(|(xi, w)| w * xi * xi).collect();
        Ok(QuadraticEval {
            total: per_component.iter().sum(),
            per_component,
        })
    }

    /// `∇θ = 2 Rᵀ (w ∘ x)`.
    pub fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let x = self.coords(theta)?;
        let wx: Array1<f64> = x.iter().zip(&self.weights).map(|(xi, w)| 2.0 * w * xi).collect();
        Ok(self.rotation.t().dot(&wx).to_vec())
    }

    /// Parameters whose rotated coordinates equal `x`: `θ = Rᵀx`.
    pub fn theta_for(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.rotation.t().dot(&ArrayView1::from(x)).to_vec())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticRun {
    pub steps: Vec<usize>,
    /// `components[k][i]` is `w_i x_i²` after `steps[k]` updates.
    pub components: Vec<Vec<f64>>,
    pub total: Vec<f64>,
}

impl QuadraticRun {
    pub fn component_series(&self, i: usize) -> Vec<f64> {
        self.components.iter().map(|row| row[i]).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let n = self.components.first().map_or(0, Vec::len);
        let mut header = vec!["step".to_string()];
        header.extend((1..=n).map(|i| format!("loss_{i}")));
        header.push("total".into());
        out.write_record(&header)?;
        for ((step, row), total) in self.steps.iter().zip(&self.components).zip(&self.total) {
            let mut rec = vec![step.to_string()];
            rec.extend(row.iter().map(|&v| fmt_num(v)));
            rec.push(fmt_num(*total));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Full-gradient descent, recording every step (step 0 included).
pub fn run_quadratic(
    q: &QuadraticLoss,
    spec: &OptimizerSpec,
    theta0: &[f64],
    n_steps: usize,
) -> Result<QuadraticRun> {
    let mut opt = Optimizer::new(*spec)?;
    let mut theta = theta0.to_vec();
    let mut run = QuadraticRun {
        steps: Vec::with_capacity(n_steps + 1),
        components: Vec::with_capacity(n_steps + 1),
        total: Vec::with_capacity(n_steps + 1),
    };
    for step in 0..=n_steps {
        let ev = q.eval(&theta)?;
        run.steps.push(step);
        run.components.push(ev.per_component);
        run.total.push(ev.total);
        if step == n_steps {
            break;
        }
        let g = q.gradient(&theta)?;
        opt.step(&mut theta, &g).map_err(|e| e.at_step(step))?;
    }
    Ok(run)
}

/// First step at which each component falls below `level` times its
/// initial loss.
pub fn drop_times(run: &QuadraticRun, level: f64) -> Vec<Option<usize>> {
    let n = run.components.first().map_or(0, Vec::len);
    let init = &run.components[0];
    (0..n)
        .map(|i| {
            run.components
                .iter()
                .position(|row| row[i] < level * init[i])
                .map(|k| run.steps[k])
        })
        .collect()
}

/// Largest relative change of component `i+1` before component `i` drops
/// below `trigger` of its initial loss, for each `i`.
pub fn sequential_drift(run: &QuadraticRun, trigger: f64) -> Vec<f64> {
    let n = run.components.first().map_or(0, Vec::len);
    let init = &run.components[0];
    (0..n.saturating_sub(1))
        .map(|i| {
            run.components
                .iter()
                .take_while(|row| row[i] >= trigger * init[i])
                .map(|row| (row[i + 1] - init[i + 1]).abs() / init[i + 1])
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Checks that component `i+1` stays within `hold` (relative) of its initial
/// loss until component `i` has dropped below `trigger` of its own initial
/// loss. Returns the first offending `i`, if any.
pub fn sequential_violation(run: &QuadraticRun, hold: f64, trigger: f64) -> Option<usize> {
    let n = run.components.first().map_or(0, Vec::len);
    let init = &run.components[0];
    (0..n.saturating_sub(1)).find(|&i| {
        run.components
            .iter()
            .take_while(|row| row[i] >= trigger * init[i])
            .any(|row| (row[i + 1] - init[i + 1]).abs() > hold * init[i + 1])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hadamard_is_orthogonal() {
        let h = hadamard4();
        let g = h.t().dot(&h);
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g[[i, j]] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn eval_examples() {
        let id = QuadraticLoss::standard(false);
        assert_eq!(id.eval(&[0.0; 4]).unwrap().total, 0.0);
        assert_eq!(id.eval(&[1.0; 4]).unwrap().per_component, DEFAULT_WEIGHTS.to_vec());
        let rot = QuadraticLoss::standard(true);
        let theta = rot.theta_for(&[1.0; 4]).unwrap();
        assert_eq!(theta, vec![2.0, 0.0, 0.0, 0.0]);
        let pc = rot.eval(&theta).unwrap().per_component;
        for (a, b) in pc.iter().zip(DEFAULT_WEIGHTS) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let q = QuadraticLoss::standard(true);
        let theta = [0.3, -1.2, 0.7, 2.0];
        let g = q.gradient(&theta).unwrap();
        let h = 1e-6;
        for j in 0..4 {
            let mut up = theta;
            let mut dn = theta;
            up[j] += h;
            dn[j] -= h;
            let fd = (q.eval(&up).unwrap().total - q.eval(&dn).unwrap().total) / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-7);
        }
    }

    #[test]
    fn rejects_invalid_losses() {
        assert!(QuadraticLoss::new(vec![1.0, 2.0], Array2::eye(2)).is_err());
        assert!(QuadraticLoss::new(vec![1.0, 0.5], Array2::ones((2, 2))).is_err());
        assert!(QuadraticLoss::new(vec![1.0], Array2::eye(2)).is_err());
    }

    #[test]
    fn sgd_is_rotation_equivariant() {
        let spec = OptimizerSpec::sgd(0.05);
        let id = QuadraticLoss::standard(false);
        let rot = QuadraticLoss::standard(true);
        let a = run_quadratic(&id, &spec, &[1.0; 4], 5000).unwrap();
        let b = run_quadratic(&rot, &spec, &rot.theta_for(&[1.0; 4]).unwrap(), 5000).unwrap();
        let worst = a
            .components
            .iter()
            .flatten()
            .zip(b.components.iter().flatten())
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn signgd_aligned_moves_in_lockstep() {
        let lr = 1e-3;
        let q = QuadraticLoss::standard(false);
        let mut opt = Optimizer::new(OptimizerSpec::signgd(lr)).unwrap();
        let mut theta = vec![1.0; 4];
        for t in 1..=990 {
            let g = q.gradient(&theta).unwrap();
            opt.step(&mut theta, &g).unwrap();
            for &x in &theta {
                assert!((x - (1.0 - lr * t as f64)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn signgd_rotated_is_sequential() {
        let q = QuadraticLoss::standard(true);
        let run = run_quadratic(&q, &OptimizerSpec::signgd(1e-3), &q.theta_for(&[1.0; 4]).unwrap(), 5000).unwrap();
        // the first component is learned with the rest frozen exactly
        assert!(sequential_drift(&run, 0.1)[0] < 1e-9);
        let half: Vec<usize> = drop_times(&run, 0.5).into_iter().map(Option::unwrap).collect();
        assert!(half.windows(2).all(|w| w[1] > w[0]), "{half:?}");

        let aligned = run_quadratic(&QuadraticLoss::standard(false), &OptimizerSpec::signgd(1e-3), &[1.0; 4], 5000).unwrap();
        assert_eq!(sequential_violation(&aligned, 0.05, 0.1), Some(0));
        let half = drop_times(&aligned, 0.5);
        assert!(half.iter().all(|&t| t == half[0]));
    }

    #[test]
    fn csv_layout() {
        let q = QuadraticLoss::standard(false);
        let run = run_quadratic(&q, &OptimizerSpec::sgd(0.05), &[1.0; 4], 2).unwrap();
        let mut buf = Vec::new();
        run.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,loss_1,loss_2,loss_3,loss_4,total\n0,1,0.1,0.01,0.001,1.111"));
        assert_eq!(text.lines().count(), 4);
    }
}
