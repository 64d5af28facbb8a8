//! Fitting the waste parameter `N0` so that a Resource trajectory matches the
//! total loss of a Geometry run.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{integrate_at, ResourceSystem, Variant};
use crate::error::{Error, Result};
use crate::geometry::ScalingRunConfig;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFit {
    pub n0: f64,
    /// Mean squared difference of log total loss at the optimum.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrateOptions {
    pub n0_min: f64,
    pub n0_max: f64,
    /// Coarse log-spaced scan before the golden-section refinement.
    pub scan_points: usize,
    pub iterations: usize,
}

impl Default for CalibrateOptions {
    fn default() -> Self {
        Self {
            n0_min: 1e-6,
            n0_max: 1e3,
            scan_points: 28,
            iterations: 60,
        }
    }
}

pub fn calibrate_n0(geo: &Trajectory, template: &ResourceSystem, window: (f64, f64)) -> Result<CalibrationFit> {
    calibrate_n0_with(geo, template, window, &CalibrateOptions::default())
}

pub fn calibrate_n0_with(
    geo: &Trajectory,
    template: &ResourceSystem,
    window: (f64, f64),
    opts: &CalibrateOptions,
) -> Result<CalibrationFit> {
    let (times, target): (Vec<f64>, Vec<f64>) = geo
        .steps
        .iter()
        .zip(&geo.total_loss)
        .filter(|(t, _)| **t >= window.0 && **t <= window.1)
        .map(|(&t, &l)| (t, l))
        .unzip();
    if times.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: times.len(),
        });
    }
    if let Some((t, l)) = times.iter().zip(&target).find(|(_, l)| !(l.is_finite() && **l > 0.0)) {
        return Err(Error::Data(format!("loss {l} at step {t} is not finite and positive")));
    }
    let log_target: Vec<f64> = target.iter().map(|l| l.ln()).collect();
    let dt_max = (times[times.len() - 1] / 20.0).max(1e-6);

    let objective = |x: f64| -> Result<f64> {
        let sys = template.clone().with_n0(x.exp());
        let traj = integrate_at(&sys, &times, dt_max)?;
        let sq: f64 = traj
            .total_loss
            .iter()
            .zip(&log_target)
            .map(|(l, lt)| {
                let d = l.max(1e-300).ln() - lt;
                d * d
            })
            .sum();
        Ok(sq / times.len() as f64)
    };

    let (a, b) = (opts.n0_min.ln(), opts.n0_max.ln());
    let m = opts.scan_points.max(3);
    let grid: Vec<f64> = (0..m).map(|k| a + (b - a) * k as f64 / (m - 1) as f64).collect();
    let vals = grid.iter().map(|&x| objective(x)).collect::<Result<Vec<_>>>()?;
    let best = vals
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .map(|(k, _)| k)
        .expect("non-empty scan");
    let mut lo = grid[best.saturating_sub(1)];
    let mut hi = grid[(best + 1).min(m - 1)];

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = objective(x1)?;
    let mut f2 = objective(x2)?;
    for _ in 0..opts.iterations {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = objective(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = objective(x2)?;
        }
    }
    let (mut x, mut f) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    if vals[best] < f {
        x = grid[best];
        f = vals[best];
    }
    Ok(CalibrationFit {
        n0: x.exp(),
        residual: f,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseAxis {
    Lr,
    Noise,
    /// Batch size; a grid value of 0 means the exact (infinite-batch) gradient.
    Batch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseConfig {
    pub base: ScalingRunConfig,
    /// Fit window as fractions of the run length.
    pub window: (f64, f64),
    /// Scale the step budget by `base_lr / lr` on the lr axis so every run
    /// covers the same nominal amount of learning.
    pub scale_steps_with_lr: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponsePoint {
    pub value: f64,
    pub n0: f64,
    pub residual: f64,
}

impl ResponseConfig {
    pub fn run_config(&self, axis: ResponseAxis, value: f64) -> Result<ScalingRunConfig> {
        let mut cfg = self.base.clone();
        match axis {
            ResponseAxis::Lr => {
                if !(value > 0.0) {
                    return Err(Error::invalid("lr", "grid values must be > 0"));
                }
                if self.scale_steps_with_lr {
                    let scale = self.base.optimizer.lr / value;
                    cfg.n_steps = ((cfg.n_steps as f64 * scale).round() as usize).max(10);
                    cfg.record_every = ((cfg.record_every as f64 * scale).round() as usize).max(1);
                }
                cfg.optimizer.lr = value;
            }
            ResponseAxis::Noise => {
                if !(value >= 0.0) {
                    return Err(Error::invalid("noise_sigma", "grid values must be >= 0"));
                }
                cfg.noise_sigma = value;
            }
            ResponseAxis::Batch => {
                if !(value >= 0.0) || value.fract() != 0.0 {
                    return Err(Error::invalid("batch_size", "grid values must be whole numbers"));
                }
                cfg.batch_size = value as usize;
            }
        }
        Ok(cfg)
    }
}

/// Geometry run + `N0` fit for one configuration.
pub fn fit_geometry_run(cfg: &ScalingRunConfig, window: (f64, f64)) -> Result<(Trajectory, CalibrationFit)> {
    let traj = cfg.run()?;
    let dist = crate::taskdist::TaskDistribution::power_law(cfg.n_task, cfg.alpha, true)?;
    let template = ResourceSystem::from_geometry(dist, Variant::IndependentMse, cfg.n_dim, cfg.optimizer.lr);
    let n = cfg.n_steps as f64;
    let fit = calibrate_n0(&traj, &template, (window.0 * n, window.1 * n))?;
    Ok((traj, fit))
}

/// Fitted `N0` along one axis of the Geometry configuration, in grid order.
pub fn n0_response_curve(axis: ResponseAxis, grid: &[f64], cfg: &ResponseConfig) -> Result<Vec<ResponsePoint>> {
    if grid.is_empty() {
        return Err(Error::invalid("grid", "must be non-empty"));
    }
    grid.par_iter()
        .map(|&value| {
            let run_cfg = cfg.run_config(axis, value)?;
            let (_, fit) = fit_geometry_run(&run_cfg, cfg.window)?;
            Ok(ResponsePoint {
                value,
                n0: fit.n0,
                residual: fit.residual,
            })
        })
        .collect()
}

/// Adjacent pairs that break the requested monotone direction.
pub fn count_inversions(values: &[f64], increasing: bool) -> usize {
    values
        .windows(2)
        .filter(|w| if increasing { w[1] < w[0] } else { w[1] > w[0] })
        .count()
}
