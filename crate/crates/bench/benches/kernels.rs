use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;

use skilldyn_core::geometry::{self, RunOptions};
use skilldyn_core::mlp::{DenseNet, Head, Inputs, Targets, Weights};
use skilldyn_core::resource::integrate;
use skilldyn_core::{
    GeometrySystem, LossKind, Optimizer, OptimizerSpec, ResourceSystem, TaskDistribution, TaskVectorSet, Variant,
    VectorMode,
};

fn system(n_task: usize, n_dim: usize) -> GeometrySystem {
    let tv = TaskVectorSet::new(n_task, n_dim, VectorMode::Random, 0).unwrap();
    GeometrySystem::new(tv, TaskDistribution::power_law(n_task, 2.0, true).unwrap(), LossKind::Mse).unwrap()
}

fn geometry_gradient(c: &mut Criterion) {
    let mut g = c.benchmark_group("geometry_gradient");
    for (n_task, n_dim) in [(10, 1000), (1000, 250)] {
        let sys = system(n_task, n_dim);
        g.bench_with_input(BenchmarkId::from_parameter(format!("{n_task}x{n_dim}")), &sys, |b, s| {
            b.iter(|| black_box(s.batch_gradient(0)))
        });
    }
    let sys = system(10, 1000).with_batch_size(128);
    g.bench_function("10x1000_batch128", |b| b.iter(|| black_box(sys.batch_gradient(0))));
    g.finish();
}

fn geometry_run(c: &mut Criterion) {
    c.bench_function("geometry_run_signgd_10x1000_100_steps", |b| {
        b.iter(|| {
            let mut sys = system(10, 1000);
            geometry::run(&mut sys, &OptimizerSpec::signgd(3e-4), &RunOptions::new(100, 10, 0)).unwrap()
        })
    });
}

fn optimizer_step(c: &mut Criterion) {
    let n = 100_000;
    let grad: Vec<f64> = (0..n).map(|i| ((i * 7919) % 1000) as f64 / 500.0 - 1.0).collect();
    let mut g = c.benchmark_group("optimizer_step_1e5");
    for spec in [
        OptimizerSpec::sgd(0.1),
        OptimizerSpec::signgd(1e-3),
        OptimizerSpec::adam(1e-3),
        OptimizerSpec::ademamix(1e-3),
        OptimizerSpec::lion(1e-3),
    ] {
        let mut opt = Optimizer::new(spec).unwrap();
        let mut params = vec![0.0; n];
        g.bench_function(spec.algo.name(), |b| b.iter(|| opt.step(&mut params, black_box(&grad)).unwrap()));
    }
    g.finish();
}

fn resource_integrate(c: &mut Criterion) {
    let mut g = c.benchmark_group("resource_integrate");
    for n_task in [5, 50] {
        let sys = ResourceSystem::new(TaskDistribution::power_law(n_task, 2.0, true).unwrap(), Variant::IndependentMse)
            .with_n0(0.01);
        g.bench_with_input(BenchmarkId::from_parameter(n_task), &sys, |b, s| {
            b.iter(|| integrate(s, 100.0, 0.01, 1001).unwrap())
        });
    }
    g.finish();
}

fn mlp_loss_grad(c: &mut Criterion) {
    let net = DenseNet::new(&[40, 200, 200, 3], Head::SigmoidBce, 0).unwrap();
    let x = Inputs::Dense(Array2::from_shape_fn((128, 40), |(i, j)| if (i + j) % 3 == 0 { 1.0 } else { -1.0 }));
    let y = Targets::Values(Array2::from_shape_fn((128, 3), |(i, j)| ((i + j) % 2) as f64));
    let mut grad = vec![0.0; net.n_params()];
    c.bench_function("mlp_loss_grad_40-200-200-3_batch128", |b| {
        b.iter(|| net.loss_grad(&x, &y, Weights::Uniform, &mut grad).unwrap())
    });
}

criterion_group!(benches, geometry_gradient, geometry_run, optimizer_step, resource_integrate, mlp_loss_grad);
criterion_main!(benches);
