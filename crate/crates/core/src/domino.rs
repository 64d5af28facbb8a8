//! The Domino model: skills are learned one after another, each taking `t0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::LossKind;
use crate::taskdist::TaskDistribution;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominoConfig {
    pub n_task: usize,
    pub t0: f64,
    /// Tasks beyond this index are never learned (capacity cutoff).
    pub n_learnable: usize,
}

impl DominoConfig {
    pub fn new(n_task: usize, t0: f64) -> Result<Self> {
        Self::with_capacity(n_task, t0, n_task)
    }

    pub fn with_capacity(n_task: usize, t0: f64, n_learnable: usize) -> Result<Self> {
        if n_task == 0 {
            return Err(Error::EmptyDistribution);
        }
        if !(t0 > 0.0 && t0.is_finite()) {
            return Err(Error::invalid("t0", "must be finite and > 0"));
        }
        if n_learnable > n_task {
            return Err(Error::invalid("n_learnable", "must not exceed n_task"));
        }
        Ok(Self {
            n_task,
            t0,
            n_learnable,
        })
    }
}

/// Skill of task `i` (1-based) at time `t`: zero until `(i−1)t0`, a unit ramp
/// over the next `t0`, then one.
pub fn skill_curve(cfg: &DominoConfig, i: usize, t: f64) -> f64 {
    if i == 0 || i > cfg.n_learnable {
        return 0.0;
    }
    (t / cfg.t0 - (i - 1) as f64).clamp(0.0, 1.0)
}

pub fn total_time(cfg: &DominoConfig) -> f64 {
    cfg.n_learnable as f64 * cfg.t0
}

/// `ℓ(t) = Σ p_i L(s_i(t))` scaled so an unlearned task costs
/// `loss_at_unlearned`.
pub fn loss_curve(
    cfg: &DominoConfig,
    dist: &TaskDistribution,
    loss: LossKind,
    loss_at_unlearned: f64,
    ts: &[f64],
) -> Result<Vec<f64>> {
    if dist.len() != cfg.n_task {
        return Err(Error::DimensionMismatch {
            expected: cfg.n_task,
            got: dist.len(),
        });
    }
    let scale = loss_at_unlearned / loss.value(0.0);
    let p = dist.p();
    Ok(ts
        .iter()
        .map(|&t| {
            let acc: f64 = p
                .iter()
                .enumerate()
                .map(|(idx, pi)| pi * loss.value(skill_curve(cfg, idx + 1, t)))
                .sum();
            scale * acc
        })
        .collect())
}

/// Trajectory of Domino skills on an explicit time grid.
pub fn trajectory(cfg: &DominoConfig, dist: &TaskDistribution, ts: &[f64]) -> Result<Trajectory> {
    let mut traj = Trajectory::new(serde_json::json!({
        "model": "domino",
        "n_task": cfg.n_task,
        "t0": cfg.t0,
        "n_learnable": cfg.n_learnable,
    }));
    let p = dist.p();
    if p.len() != cfg.n_task {
        return Err(Error::DimensionMismatch {
            expected: cfg.n_task,
            got: p.len(),
        });
    }
    for &t in ts {
        let s: Vec<f64> = (1..=cfg.n_task).map(|i| skill_curve(cfg, i, t)).collect();
        let l: Vec<f64> = s.iter().map(|&x| LossKind::Mse.value(x)).collect();
        let total = l.iter().zip(p).map(|(a, b)| a * b).sum();
        traj.push(t, s, l, total);
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentPair {
    pub alpha_n: f64,
    pub alpha_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPrediction {
    pub quanta: ExponentPair,
    pub domino: ExponentPair,
    /// `alpha <= 1`: both models predict no parameter scaling.
    pub degenerate: bool,
}

/// Quanta `(α−1, (α−1)/α)` and Domino `(α−1, α−1)` exponent predictions.
pub fn scaling_exponents(alpha: f64) -> ScalingPrediction {
    if !(alpha > 1.0) {
        let zero = ExponentPair {
            alpha_n: 0.0,
            alpha_s: 0.0,
        };
        return ScalingPrediction {
            quanta: zero,
            domino: zero,
            degenerate: true,
        };
    }
    ScalingPrediction {
        quanta: ExponentPair {
            alpha_n: alpha - 1.0,
            alpha_s: (alpha - 1.0) / alpha,
        },
        domino: ExponentPair {
            alpha_n: alpha - 1.0,
            alpha_s: alpha - 1.0,
        },
        degenerate: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModularSpeedup {
    pub t_nonmodular: f64,
    pub t_modular: f64,
    pub ratio: f64,
}

/// Learning-time algebra with `t0 ∝ 1/√n_dim`: a shared model learns tasks
/// one after another (`n_task/√n_dim`), a modular one learns them in parallel
/// in `n_dim/n_task` dimensions each (`√n_task/√n_dim`).
pub fn modular_speedup(n_task: usize, n_dim: usize) -> Result<ModularSpeedup> {
    if n_task == 0 || n_dim == 0 {
        return Err(Error::invalid("n_task", "n_task and n_dim must be >= 1"));
    }
    let root_dim = (n_dim as f64).sqrt();
    let root_task = (n_task as f64).sqrt();
    let t_nonmodular = n_task as f64 / root_dim;
    let t_modular = root_task / root_dim;
    Ok(ModularSpeedup {
        t_nonmodular,
        t_modular,
        ratio: root_task,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(n: usize, t0: f64) -> DominoConfig {
        DominoConfig::new(n, t0).unwrap()
    }

    #[test]
    fn skill_curve_examples() {
        let c = cfg(5, 2.0);
        assert_eq!(skill_curve(&c, 1, 0.0), 0.0);
        assert_eq!(skill_curve(&c, 1, 1.0), 0.5);
        assert_eq!(skill_curve(&c, 3, 5.0), 0.5);
        assert_eq!(skill_curve(&c, 3, 4.0), 0.0);
        assert_eq!(skill_curve(&c, 3, 6.0), 1.0);
    }

    #[test]
    fn capacity_cutoff() {
        let c = DominoConfig::with_capacity(10, 1.0, 5).unwrap();
        assert_eq!(total_time(&c), 5.0);
        assert_eq!(skill_curve(&c, 6, 100.0), 0.0);
        assert!(DominoConfig::with_capacity(3, 1.0, 4).is_err());
        assert_eq!(total_time(&cfg(1, 3.0)), 3.0);
        assert_eq!(total_time(&cfg(10, 2.0)), 20.0);
    }

    #[test]
    fn loss_curve_endpoints() {
        let c = cfg(20, 1.0);
        let d = TaskDistribution::power_law(20, 1.5, true).unwrap();
        let l = loss_curve(&c, &d, LossKind::Mse, 1.0, &[0.0, 1e6]).unwrap();
        assert!((l[0] - 1.0).abs() < 1e-12);
        assert_eq!(l[1], 0.0);
        let xent = loss_curve(&c, &d, LossKind::Xent, 2.0_f64.ln(), &[0.0]).unwrap();
        assert!((xent[0] - 2.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn exponent_table() {
        let e2 = scaling_exponents(2.0);
        assert_eq!((e2.quanta.alpha_n, e2.quanta.alpha_s), (1.0, 0.5));
        assert_eq!((e2.domino.alpha_n, e2.domino.alpha_s), (1.0, 1.0));
        let e4 = scaling_exponents(4.0);
        assert_eq!((e4.quanta.alpha_n, e4.quanta.alpha_s), (3.0, 0.75));
        assert_eq!(e4.domino.alpha_s, 3.0);
        let e1 = scaling_exponents(1.0);
        assert!(e1.degenerate);
        assert_eq!(e1.quanta.alpha_n, 0.0);
    }

    #[test]
    fn modular_ratio_is_root_n() {
        assert_eq!(modular_speedup(1, 9).unwrap().ratio, 1.0);
        assert_eq!(modular_speedup(100, 400).unwrap().ratio, 10.0);
        assert_eq!(modular_speedup(7, 70).unwrap().ratio, 7f64.sqrt());
    }

    proptest! {
        #[test]
        fn one_fractional_skill_and_full_usage(n in 1usize..30, t0 in 0.1f64..5.0, frac in 0.0f64..1.0) {
            let c = cfg(n, t0);
            let t = frac * total_time(&c);
            let s: Vec<f64> = (1..=n).map(|i| skill_curve(&c, i, t)).collect();
            let total: f64 = s.iter().sum();
            prop_assert!((total - t / t0).abs() < 1e-9);
            if (t / t0).fract() != 0.0 {
                prop_assert_eq!(s.iter().filter(|&&x| x > 0.0 && x < 1.0).count(), 1);
            }
        }

        #[test]
        fn modular_ratio_matches_time_ratio(n in 1usize..10_000, d in 1usize..100_000) {
            let m = modular_speedup(n, d).unwrap();
            prop_assert!((m.t_nonmodular / m.t_modular - m.ratio).abs() <= 1e-9 * m.ratio);
        }
    }
}
