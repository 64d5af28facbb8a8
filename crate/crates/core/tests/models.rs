use proptest::prelude::*;

use skilldyn_core::domino::{self, DominoConfig};
use skilldyn_core::geometry::{self, RunOptions};
use skilldyn_core::{GeometrySystem, LossKind, OptimizerSpec, TaskDistribution, TaskVectorSet, Trajectory, VectorMode};

fn small_system(seed: u64) -> GeometrySystem {
    let tv = TaskVectorSet::new(5, 40, VectorMode::Random, seed).unwrap();
    GeometrySystem::new(tv, TaskDistribution::power_law(5, 2.0, true).unwrap(), LossKind::Mse).unwrap()
}

fn skills(traj: &Trajectory) -> Vec<Vec<f64>> {
    (0..traj.n_task()).map(|i| traj.skill_series(i)).collect()
}

fn run(spec: &OptimizerSpec, steps: usize, seed: u64) -> Trajectory {
    geometry::run(&mut small_system(seed), spec, &RunOptions::new(steps, 1, seed)).unwrap()
}

#[test]
fn lion_without_momentum_is_signgd() {
    let sign = run(&OptimizerSpec::signgd(1e-3), 100, 4);
    let lion = run(&OptimizerSpec::lion(1e-3).with_betas(0.0, 0.99), 100, 4);
    assert_eq!(skills(&sign), skills(&lion));
}

#[test]
fn first_adam_step_matches_signgd() {
    let sign = run(&OptimizerSpec::signgd(1e-3), 1, 9);
    let adam = run(&OptimizerSpec::adam(1e-3).with_eps(1e-14), 1, 9);
    for (a, b) in skills(&sign).iter().flatten().zip(skills(&adam).iter().flatten()) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn domino_trajectory_survives_a_csv_round_trip() {
    let cfg = DominoConfig::new(6, 2.0).unwrap();
    let dist = TaskDistribution::power_law(6, 2.0, true).unwrap();
    let ts: Vec<f64> = (0..=30).map(|k| k as f64 * 0.5).collect();
    let traj = domino::trajectory(&cfg, &dist, &ts).unwrap();
    let back = Trajectory::read_csv(traj.to_csv_string().unwrap().as_bytes()).unwrap();
    assert_eq!(skills(&traj), skills(&back));
    assert_eq!(traj.steps, back.steps);
}

proptest! {
    #[test]
    fn domino_skills_sum_to_elapsed_ramps(
        n_task in 1usize..30,
        cut in 0.0f64..1.0,
        t0 in 0.1f64..10.0,
        frac in 0.0f64..1.2,
    ) {
        let n_learnable = ((n_task as f64) * cut).round() as usize;
        let cfg = DominoConfig::with_capacity(n_task, t0, n_learnable).unwrap();
        let t = frac * domino::total_time(&cfg);
        let total: f64 = (1..=n_task).map(|i| domino::skill_curve(&cfg, i, t)).sum();
        let expected = (t / t0).min(n_learnable as f64);
        prop_assert!((total - expected).abs() <= 1e-9 * (1.0 + expected));
        // at most one skill is mid-ramp
        let partial = (1..=n_task)
            .map(|i| domino::skill_curve(&cfg, i, t))
            .filter(|&s| s > 0.0 && s < 1.0)
            .count();
        prop_assert!(partial <= 1);
    }

    #[test]
    fn geometry_runs_are_reproducible(seed in 0u64..1000, batch in prop_oneof![Just(0usize), Just(8)]) {
        let go = || {
            let mut sys = small_system(seed).with_batch_size(batch);
            geometry::run(&mut sys, &OptimizerSpec::adam(1e-3), &RunOptions::new(30, 3, seed)).unwrap()
        };
        prop_assert_eq!(go(), go());
    }
}
