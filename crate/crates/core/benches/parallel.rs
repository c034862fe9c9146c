use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use gibbslab::engines::{mc_sample, McConfig};
use gibbslab::lattice::{Boundary, Dim, Interaction, LocalFunction, Region, Site, TailedConfiguration};
use gibbslab::specification::{GibbsSpecification, KernelTable};
use gibbslab::thermo::{pressure_estimate, MeasureRecipe, PressureMode};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let threads = std::thread::available_parallelism().map_or(4, |n| n.get()).max(2);
    vec![
        ("sequential", rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("parallel", rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()),
    ]
}

fn kernel_table(c: &mut Criterion) {
    let spec = GibbsSpecification::new(Interaction::new(1.0, 0.2, 0.7).unwrap(), Dim::Two);
    let lam = Region::cube(1, Dim::Two);
    let fill = TailedConfiguration::all_plus(Dim::Two);
    let mut g = c.benchmark_group("kernel_table");
    for (name, pool) in pools() {
        g.bench_function(name, |b| b.iter(|| pool.install(|| KernelTable::build(&spec, black_box(&lam), &fill).unwrap())));
    }
    g.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let phi = Interaction::ising(0.4);
    let w = Region::cube(4, Dim::Two);
    let cfg = McConfig::new(1, 8, 200, 20);
    let mut g = c.benchmark_group("monte_carlo");
    for (name, pool) in pools() {
        g.bench_function(name, |b| b.iter(|| pool.install(|| mc_sample(&phi, &w, &Boundary::Periodic, &[], black_box(&cfg)).unwrap())));
    }
    g.finish();
}

fn pressure(c: &mut Criterion) {
    let nu = MeasureRecipe::gibbs_1d(&Interaction::ising(0.8));
    let f = LocalFunction::spin_at(Site::ORIGIN, Dim::One).scaled(0.3);
    let mut g = c.benchmark_group("pressure");
    for (name, pool) in pools() {
        g.bench_function(name, |b| b.iter(|| pool.install(|| pressure_estimate(black_box(&f), &nu, 8, PressureMode::Open).unwrap())));
    }
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = kernel_table, monte_carlo, pressure
}
criterion_main!(benches);
