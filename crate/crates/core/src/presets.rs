//! Named configurations shared by the command-line runner, the benches and
//! the acceptance harness.

use crate::geometry::{DimSweepConfig, Plateau, ScalingRunConfig, TwoTaskConfig};
use crate::optim::OptimizerSpec;
use crate::resource::{ResponseAxis, ResponseConfig};
use crate::scaling::Window;
use crate::taskdist::VectorMode;

/// SGD step size for the two-task ratio comparison.
pub const TWO_TASK_SGD_LR: f64 = 0.1;

/// Two orthogonal tasks in 1000 dimensions, batch 128, SignGD at 3e-4 or
/// SGD at [`TWO_TASK_SGD_LR`].
pub fn two_task(p1: f64, signgd: bool, seed: u64) -> TwoTaskConfig {
    let opt = if signgd {
        OptimizerSpec::signgd(3e-4)
    } else {
        OptimizerSpec::sgd(TWO_TASK_SGD_LR)
    };
    TwoTaskConfig {
        seed,
        ..TwoTaskConfig::new(p1, opt)
    }
}

/// Five power-law tasks (alpha 4), full batch SignGD, every step recorded.
pub fn sequential(seed: u64) -> ScalingRunConfig {
    ScalingRunConfig {
        record_every: 1,
        seed,
        ..ScalingRunConfig::new(5, 1000, 4.0, OptimizerSpec::signgd(3e-4), 3000)
    }
}

/// Base run for the `N0` response curves: ten tasks at alpha 2, SignGD
/// 3e-4, batch 128.
pub fn n0_response() -> ResponseConfig {
    ResponseConfig {
        base: ScalingRunConfig {
            batch_size: 128,
            record_every: 5,
            ..ScalingRunConfig::new(10, 1000, 2.0, OptimizerSpec::signgd(3e-4), 3000)
        },
        window: (0.0, 1.0),
        scale_steps_with_lr: true,
    }
}

pub fn n0_grid(axis: ResponseAxis) -> Vec<f64> {
    match axis {
        ResponseAxis::Lr => vec![1e-4, 3e-4, 1e-3, 3e-3],
        ResponseAxis::Noise => vec![0.0, 0.1, 0.3, 1.0],
        // 0 = exact gradient
        ResponseAxis::Batch => vec![32.0, 128.0, 512.0, 0.0],
    }
}

/// Loss against dimension at alpha 1 for 1000 tasks. Runs stop once the
/// SignGD cycle plateaus; the tail average over five seeds is fitted.
pub fn alpha_n_sweep() -> DimSweepConfig {
    DimSweepConfig {
        dims: vec![16, 32, 64, 128, 250],
        base: ScalingRunConfig {
            record_every: 10,
            plateau: Some(Plateau { records: 20, rtol: 1e-6 }),
            ..ScalingRunConfig::new(1000, 250, 1.0, OptimizerSpec::signgd(0.01), 100_000)
        },
        tail_fraction: 0.1,
        seeds: (0..5).collect(),
    }
}

pub const ALPHA_N_WINDOW: Window = Window::DIMS;

/// Loss against steps for 1000 tasks in 250 dimensions.
pub fn alpha_s_run(alpha: f64, seed: u64) -> ScalingRunConfig {
    ScalingRunConfig {
        record_every: 10,
        seed,
        ..ScalingRunConfig::new(1000, 250, alpha, OptimizerSpec::signgd(1e-4), 10_000)
    }
}

pub const ALPHA_S_WINDOW: Window = Window::STEPS;

/// Geometry comparison of one-hot (modular) and random task vectors.
pub fn modular_geometry(n_dim: usize, mode: VectorMode, seed: u64) -> ScalingRunConfig {
    ScalingRunConfig {
        mode,
        record_every: 10,
        seed,
        ..ScalingRunConfig::new(1000, n_dim, 1.0, OptimizerSpec::signgd(0.01), 10_000)
    }
}
