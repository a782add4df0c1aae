use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use screenopt::direct::{evaluate_phi_with, phi_gradient_with};
use screenopt::grid::hessian_with;
use screenopt::par::Exec;
use screenopt::pricing::{price_menu_with, product_intensity_with};
use screenopt::regions::{classify_with, DEFAULT_ANGLE_DEG, DEFAULT_RANK_TOL, DEFAULT_ZERO_TOL};
use screenopt::{ModelParams, ScalarField};

const SCHEDULES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

/// A smooth stand-in for a solution: zero below a line, convex above it.
fn field(n: usize) -> ScalarField {
    let p = ModelParams::new(1.0, n, 1e-9).unwrap();
    ScalarField::from_fn(p, |x, y| {
        let t = (x + y - 2.4).max(0.0);
        0.375 * t * t + 0.2 * (x - y).powi(2) * t
    })
}

fn grid_kernels(c: &mut Criterion) {
    let mut g = c.benchmark_group("grid");
    for n in [64, 128] {
        let u = field(n);
        for (name, exec) in SCHEDULES {
            g.bench_with_input(BenchmarkId::new(format!("phi/{name}"), n), &u, |b, u| b.iter(|| evaluate_phi_with(exec, black_box(u))));
            g.bench_with_input(BenchmarkId::new(format!("phi_gradient/{name}"), n), &u, |b, u| {
                b.iter(|| phi_gradient_with(exec, black_box(u)))
            });
            g.bench_with_input(BenchmarkId::new(format!("hessian/{name}"), n), &u, |b, u| b.iter(|| hessian_with(exec, black_box(u))));
            g.bench_with_input(BenchmarkId::new(format!("classify/{name}"), n), &u, |b, u| {
                b.iter(|| classify_with(exec, black_box(u), DEFAULT_RANK_TOL, DEFAULT_ZERO_TOL, DEFAULT_ANGLE_DEG).unwrap())
            });
        }
    }
    g.finish();
}

fn pricing_kernels(c: &mut Criterion) {
    let mut g = c.benchmark_group("pricing");
    let u = field(64);
    for (name, exec) in SCHEDULES {
        g.bench_function(BenchmarkId::new("price_menu", name), |b| b.iter(|| price_menu_with(exec, black_box(&u), 2.0, 64).unwrap()));
        g.bench_function(BenchmarkId::new("intensity", name), |b| {
            b.iter(|| product_intensity_with(exec, black_box(&u), 32, 2.0).unwrap())
        });
    }
    g.finish();
}

criterion_group!(
    name = kernels;
    config = Criterion::default().sample_size(10).measurement_time(Duration::from_secs(2)).warm_up_time(Duration::from_millis(500));
    targets = grid_kernels, pricing_kernels
);
criterion_main!(kernels);
