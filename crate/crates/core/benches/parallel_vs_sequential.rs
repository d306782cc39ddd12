//! Throughput comparison of the data-parallel core against single-threaded
//! execution: one solver step at realistic path counts, and batch jump
//! sampling.  With `--no-default-features` the crate runs sequentially; the
//! pool-size comparison then degenerates to two identical sequential runs.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pide_mc::harness::config_for_dt;
use pide_mc::kernels::{sample_jump, KernelFamily, KernelSpec};
use pide_mc::problems::example1;
use pide_mc::rng::StreamKey;
use pide_mc::solver::{advance_step, initialize, PathEstimator};

fn bench_solver_step(c: &mut Criterion) {
    let problem = example1(3).unwrap();
    let mut group = c.benchmark_group("solver_step_d3_level4_m2000");
    group.sample_size(10);
    for threads in [1usize, num_threads()] {
        for estimator in [PathEstimator::Sampled, PathEstimator::Conditioned] {
            let cfg = config_for_dt(&problem, 0.125, 2_000, 4, 1).with_estimator(estimator);
            let init = initialize(&problem, &cfg).unwrap();
            group.bench_with_input(
                BenchmarkId::new(format!("{estimator:?}"), threads),
                &threads,
                |b, &t| {
                    let pool = pool(t);
                    b.iter(|| {
                        pool.install(|| {
                            advance_step(&problem, &cfg, &init, StreamKey::new(1, 1, 0, 0)).unwrap()
                        })
                    });
                },
            );
        }
    }
    group.finish();
}

fn bench_jump_sampling(c: &mut Criterion) {
    let specs = [
        ("hypersingular", KernelSpec::new(KernelFamily::Hypersingular { alpha: 0.5 }, 0.4, 3).unwrap()),
        ("tempered", KernelSpec::new(KernelFamily::Tempered { alpha: 1.0, beta: 1.0 }, 0.4, 3).unwrap()),
        ("gaussian", KernelSpec::new(KernelFamily::Gaussian { sigma: 1.0 }, 0.4, 3).unwrap()),
    ];
    let mut group = c.benchmark_group("jump_sampling_10k");
    for (name, spec) in specs {
        group.bench_function(name, |b| {
            b.iter(|| {
                let mut acc = 0.0;
                for i in 0..10_000u64 {
                    acc += sample_jump(&spec, StreamKey::new(2, 0, 0, i)).unwrap().r;
                }
                acc
            })
        });
    }
    group.finish();
}

#[cfg(feature = "parallel")]
fn num_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(2)
}

#[cfg(not(feature = "parallel"))]
fn num_threads() -> usize {
    1
}

#[cfg(feature = "parallel")]
struct Pool(rayon::ThreadPool);

#[cfg(feature = "parallel")]
fn pool(threads: usize) -> Pool {
    Pool(rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap())
}

#[cfg(feature = "parallel")]
impl Pool {
    fn install<R>(&self, f: impl FnOnce() -> R + Send) -> R
    where
        R: Send,
    {
        self.0.install(f)
    }
}

#[cfg(not(feature = "parallel"))]
struct Pool;

#[cfg(not(feature = "parallel"))]
fn pool(_threads: usize) -> Pool {
    Pool
}

#[cfg(not(feature = "parallel"))]
impl Pool {
    fn install<R>(&self, f: impl FnOnce() -> R) -> R {
        f()
    }
}

criterion_group!(benches, bench_solver_step, bench_jump_sampling);
criterion_main!(benches);
