//! The Resource model: skills compete for a shared learning budget.
//!
//! Independent form `du_i/dt = −η p_i u_i / (Σ_j p_j u_j + N0)`, a correlated
//! regression form whose numerator mixes tasks through `C_ik`, a correlated
//! cross-entropy form on skill levels, and optional dependency gates `B_i(u)`
//! on the own-task numerator term.

mod calibrate;
mod gates;
pub(crate) mod ode;

pub use calibrate::*;
pub use gates::{ancestors, and_chain, default_gamma, hierarchy7, Gate, GateKind, GateSet};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sigmoid, softplus};
use crate::taskdist::TaskDistribution;
use crate::trajectory::Trajectory;
use ode::{Rhs, Solver, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    IndependentMse,
    CorrelatedMse,
    CorrelatedXent,
}

impl Variant {
    fn is_mse(self) -> bool {
        !matches!(self, Variant::CorrelatedXent)
    }
}

/// Piecewise-constant frequencies: `p` switches to `switches[k].1` at time
/// `switches[k].0`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrequencySchedule {
    switches: Vec<(f64, Vec<f64>)>,
}

impl FrequencySchedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn then_at(mut self, t: f64, p: Vec<f64>) -> Result<Self> {
        if !(t > 0.0) || self.switches.last().is_some_and(|(last, _)| *last >= t) {
            return Err(Error::invalid("schedule", "switch times must be positive and increasing"));
        }
        if p.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::invalid("schedule", "frequencies must be positive"));
        }
        self.switches.push((t, p));
        Ok(self)
    }

    pub fn switch_times(&self) -> Vec<f64> {
        self.switches.iter().map(|(t, _)| *t).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResourceSystem {
    pub dist: TaskDistribution,
    pub variant: Variant,
    pub corr: Option<Array2<f64>>,
    pub gates: Option<GateSet>,
    pub schedule: FrequencySchedule,
    pub n0: f64,
    pub eta_eff: f64,
}

impl ResourceSystem {
    pub fn new(dist: TaskDistribution, variant: Variant) -> Self {
        Self {
            dist,
            variant,
            corr: None,
            gates: None,
            schedule: FrequencySchedule::default(),
            n0: 0.0,
            eta_eff: 1.0,
        }
    }

    /// `η_eff = 2·√n_dim·lr`, matching a Geometry model with unit task
    /// vectors in `n_dim` dimensions.
    pub fn from_geometry(dist: TaskDistribution, variant: Variant, n_dim: usize, lr: f64) -> Self {
        Self::new(dist, variant).with_eta_eff(effective_lr(n_dim, lr))
    }

    pub fn with_n0(mut self, n0: f64) -> Self {
        self.n0 = n0;
        self
    }

    pub fn with_eta_eff(mut self, eta_eff: f64) -> Self {
        self.eta_eff = eta_eff;
        self
    }

    pub fn with_corr(mut self, corr: Array2<f64>) -> Self {
        self.corr = Some(corr);
        self
    }

    pub fn with_gates(mut self, gates: GateSet) -> Self {
        self.gates = Some(gates);
        self
    }

    pub fn with_schedule(mut self, schedule: FrequencySchedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn n_task(&self) -> usize {
        self.dist.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_task();
        if !(self.n0 >= 0.0 && self.n0.is_finite()) {
            return Err(Error::invalid("n0", "must be finite and >= 0"));
        }
        if !(self.eta_eff > 0.0 && self.eta_eff.is_finite()) {
            return Err(Error::invalid("eta_eff", "must be finite and > 0"));
        }
        match (&self.corr, self.variant) {
            (Some(c), _) => {
                if c.dim() != (n, n) {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: c.nrows(),
                    });
                }
                for i in 0..n {
                    if (c[[i, i]] - 1.0).abs() > 1e-9 {
                        return Err(Error::invalid("corr", "diagonal must be 1"));
                    }
                    for j in 0..i {
                        if (c[[i, j]] - c[[j, i]]).abs() > 1e-9 {
                            return Err(Error::invalid("corr", "must be symmetric"));
                        }
                    }
                }
            }
            (None, Variant::CorrelatedMse | Variant::CorrelatedXent) => {
                return Err(Error::invalid("corr", "correlated variants need a correlation matrix"));
            }
            (None, Variant::IndependentMse) => {}
        }
        if let Some(g) = &self.gates {
            if g.n_task() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: g.n_task(),
                });
            }
        }
        for (_, p) in &self.schedule.switches {
            if p.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: p.len(),
                });
            }
        }
        Ok(())
    }

    /// Frequencies in force at time `t`.
    pub fn p_at(&self, t: f64) -> &[f64] {
        self.schedule
            .switches
            .iter()
            .rev()
            .find(|(ts, _)| t >= *ts)
            .map_or(self.dist.p(), |(_, p)| p.as_slice())
    }

    /// Initial state: `u = 1` for the MSE variants, `s = 0` for cross-entropy.
    pub fn initial_state(&self) -> Vec<f64> {
        let v = if self.variant.is_mse() { 1.0 } else { 0.0 };
        vec![v; self.n_task()]
    }

    /// `du/dt` (or `ds/dt` for cross-entropy) at `(t, state)`.
    pub fn rhs(&self, t: f64, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.n_task() {
            return Err(Error::DimensionMismatch {
                expected: self.n_task(),
                got: state.len(),
            });
        }
        let mut dy = vec![0.0; state.len()];
        self.eval_into(t, state, &vec![false; state.len()], &mut dy, false)?;
        Ok(dy)
    }

    fn unskill(&self, state: &[f64]) -> Vec<f64> {
        if self.variant.is_mse() {
            state.to_vec()
        } else {
            state.iter().map(|s| 1.0 - s).collect()
        }
    }

    /// With `lenient` set (inside the integrator), trial stages that overshoot
    /// zero count as zero demand, and an empty budget yields no motion instead
    /// of an error; the clamp event then resolves the crossing.
    fn eval_into(&self, t: f64, y: &[f64], frozen: &[bool], dy: &mut [f64], lenient: bool) -> Result<()> {
        let p = self.p_at(t);
        let n = y.len();
        // per-task "demand": p u for regression, p σ̄(s) for cross-entropy
        let demand: Vec<f64> = match self.variant {
            Variant::CorrelatedXent => y.iter().zip(p).map(|(&s, pi)| pi * sigmoid(-s)).collect(),
            _ if lenient => y.iter().zip(p).map(|(&u, pi)| pi * u.max(0.0)).collect(),
            _ => y.iter().zip(p).map(|(&u, pi)| pi * u).collect(),
        };
        let denom = demand.iter().sum::<f64>() + self.n0;
        if !(denom > 0.0) {
            if lenient && denom == 0.0 {
                dy.iter_mut().for_each(|d| *d = 0.0);
                return Ok(());
            }
            return Err(Error::Degenerate {
                time: t,
                denominator: denom,
            });
        }
        let unskill = self.gates.as_ref().map(|_| self.unskill(y));
        let gate = |i: usize| -> f64 {
            match (&self.gates, &unskill) {
                (Some(g), Some(u)) => g.factor(i, u),
                _ => 1.0,
            }
        };
        let sgn = if self.variant.is_mse() { -1.0 } else { 1.0 };
        let scale = sgn * self.eta_eff / denom;
        for i in 0..n {
            if frozen[i] {
                dy[i] = 0.0;
                continue;
            }
            let mut num = gate(i) * demand[i];
            if let (Some(c), Variant::CorrelatedMse | Variant::CorrelatedXent) = (&self.corr, self.variant) {
                for k in 0..n {
                    if k != i {
                        num += c[[i, k]] * demand[k];
                    }
                }
            }
            dy[i] = scale * num;
        }
        Ok(())
    }

    /// Per-task losses for a state: `u²` for regression, `−log σ(s)` for
    /// cross-entropy.
    pub fn task_losses(&self, state: &[f64]) -> Vec<f64> {
        match self.variant {
            Variant::CorrelatedXent => state.iter().map(|&s| softplus(-s)).collect(),
            _ => state.iter().map(|&u| u * u).collect(),
        }
    }

    pub fn skills(&self, state: &[f64]) -> Vec<f64> {
        self.unskill(state).iter().map(|u| 1.0 - u).collect()
    }

    fn solver(&self, dt_max: f64) -> Solver {
        Solver::new(
            self.initial_state(),
            Tolerances {
                atol: 1e-9,
                rtol: 1e-7,
                dt_max,
            },
            self.variant.is_mse(),
            self.schedule.switch_times(),
        )
    }
}

impl Rhs for ResourceSystem {
    fn eval(&self, t: f64, y: &[f64], frozen: &[bool], dy: &mut [f64]) -> Result<()> {
        self.eval_into(t, y, frozen, dy, true)
    }
}

pub fn effective_lr(n_dim: usize, lr: f64) -> f64 {
    2.0 * (n_dim as f64).sqrt() * lr
}

/// Integrates to `t_end` and records `n_points` evenly spaced states
/// (including `t = 0` and `t_end`).
pub fn integrate(sys: &ResourceSystem, t_end: f64, dt_max: f64, n_points: usize) -> Result<Trajectory> {
    if !(t_end > 0.0) {
        return Err(Error::invalid("t_end", "must be > 0"));
    }
    let n_points = n_points.max(2);
    let times: Vec<f64> = (0..n_points)
        .map(|k| t_end * k as f64 / (n_points - 1) as f64)
        .collect();
    integrate_at(sys, &times, dt_max)
}

/// Integrates and records the state at each of `times` (sorted, `>= 0`).
pub fn integrate_at(sys: &ResourceSystem, times: &[f64], dt_max: f64) -> Result<Trajectory> {
    sys.validate()?;
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::invalid("times", "must be sorted and non-negative"));
    }
    if !(dt_max > 0.0) {
        return Err(Error::invalid("dt_max", "must be > 0"));
    }
    let meta = serde_json::json!({
        "model": "resource",
        "variant": sys.variant,
        "n_task": sys.n_task(),
        "alpha": sys.dist.alpha(),
        "n0": sys.n0,
        "eta_eff": sys.eta_eff,
        "gated": sys.gates.is_some(),
    });
    let mut traj = Trajectory::new(meta);
    let mut solver = sys.solver(dt_max);
    for &t in times {
        solver.advance_to(sys, t)?;
        let p = sys.p_at(t);
        let losses = sys.task_losses(&solver.y);
        let total = losses.iter().zip(p).map(|(l, pi)| l * pi).sum();
        traj.push(t, sys.skills(&solver.y), losses, total);
    }
    Ok(traj)
}

/// Earliest time at which `g(state)` drops to `level` or below, searched up
/// to `t_max`. `g` should be non-increasing along trajectories.
pub fn first_time(
    sys: &ResourceSystem,
    g: impl Fn(&[f64]) -> f64,
    level: f64,
    t_max: f64,
    dt_max: f64,
) -> Result<Option<f64>> {
    sys.validate()?;
    let mut solver = sys.solver(dt_max);
    if g(&solver.y) <= level {
        return Ok(Some(0.0));
    }
    let n_coarse = 2000;
    let dt = t_max / n_coarse as f64;
    for k in 1..=n_coarse {
        let before = solver.clone();
        solver.advance_to(sys, dt * k as f64)?;
        if g(&solver.y) <= level {
            let (mut lo, mut hi) = (before.t, solver.t);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let mut probe = before.clone();
                probe.advance_to(sys, mid)?;
                if g(&probe.y) <= level {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(Some(hi));
        }
    }
    Ok(None)
}

/// First recorded time at which each task's unskill falls below `threshold`.
pub fn completion_times(traj: &Trajectory, threshold: f64) -> Vec<Option<f64>> {
    (0..traj.n_task())
        .map(|i| traj.first_step_where(i, |s, _| 1.0 - s < threshold))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningTime {
    pub total: f64,
    pub task: f64,
    pub waste: f64,
}

/// Time for the independent model to reach `u_j^{1/p_j} = c_target`.
pub fn learning_time(dist: &TaskDistribution, eta_eff: f64, n0: f64, c_target: f64) -> Result<LearningTime> {
    if !(c_target > 0.0 && c_target < 1.0) {
        return Err(Error::Domain(format!("c_target must lie in (0, 1), got {c_target}")));
    }
    if !(eta_eff > 0.0) {
        return Err(Error::invalid("eta_eff", "must be > 0"));
    }
    let n = dist.len() as f64;
    let task = (n - dist.p().iter().map(|&p| c_target.powf(p)).sum::<f64>()) / eta_eff;
    let waste = -n0 * c_target.ln() / eta_eff;
    Ok(LearningTime {
        total: task + waste,
        task,
        waste,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalLr {
    pub eta: f64,
    /// Set when every task is already learned, so any rate is optimal.
    pub degenerate: bool,
}

/// Maximizer of `η Σpu / (Σpu + κη²)` when waste grows as `N0 = κη²`.
pub fn optimal_lr(dist: &TaskDistribution, u: &[f64], kappa: f64) -> Result<OptimalLr> {
    if u.len() != dist.len() {
        return Err(Error::DimensionMismatch {
            expected: dist.len(),
            got: u.len(),
        });
    }
    if !(kappa > 0.0) {
        return Err(Error::invalid("kappa", "must be > 0"));
    }
    let demand: f64 = dist.p().iter().zip(u).map(|(p, u)| p * u).sum();
    if demand <= 0.0 {
        return Ok(OptimalLr {
            eta: 0.0,
            degenerate: true,
        });
    }
    Ok(OptimalLr {
        eta: (demand / kappa).sqrt(),
        degenerate: false,
    })
}

/// `u_i^{1/p_i}` per record and task (`u = 1 − s`, negatives clamped to 0).
pub fn collapse_curves(traj: &Trajectory, p: &[f64]) -> Vec<Vec<f64>> {
    traj.skills
        .iter()
        .map(|row| {
            row.iter()
                .zip(p)
                .map(|(&s, &pi)| (1.0 - s).max(0.0).powf(1.0 / pi))
                .collect()
        })
        .collect()
}
