use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rvlab_core::ldlab::{deviate_shift, Mode, SamplerKind, ShiftExperiment};
use rvlab_core::rauzy::rauzy_class;
use rvlab_core::shift::TableObservable;
use rvlab_core::thermo::{
    bernoulli_measure_rational, equilibrium_measure, exact_deviation_probability, pressure,
    Potential,
};
use rvlab_core::zippered::{renormalized_step, sample_zippered};
use rvlab_core::Permutation;

fn bench_pressure(c: &mut Criterion) {
    let psi = Potential::new(
        TableObservable::new(4, 2, (0..16).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap(),
    );
    c.bench_function("pressure/L4-depth2", |b| {
        b.iter(|| pressure(black_box(&psi)).unwrap())
    });
    c.bench_function("equilibrium/L4-depth2", |b| {
        b.iter(|| equilibrium_measure(black_box(&psi)).unwrap())
    });
}

fn bench_rauzy(c: &mut Criterion) {
    let pi = Permutation::new((1..=7usize).rev().collect()).unwrap();
    c.bench_function("rauzy-class/m7-symmetric", |b| {
        b.iter(|| rauzy_class(black_box(&pi)).unwrap())
    });
}

fn bench_orbit(c: &mut Criterion) {
    let pi = Permutation::new(vec![4, 3, 2, 1]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = sample_zippered(&pi, false, &mut rng);
    c.bench_function("renormalized-orbit/m4-1000-steps", |b| {
        b.iter(|| {
            let mut x = start.clone();
            for _ in 0..1000 {
                x = renormalized_step(&x).unwrap().next;
            }
            x
        })
    });
}

fn bench_enumeration(c: &mut Criterion) {
    let mu = bernoulli_measure_rational(&[(1, 2), (1, 2)]).unwrap();
    let phi = TableObservable::new(2, 1, vec![-1.0, 1.0]).unwrap();
    c.bench_function("exact-deviation/n16", |b| {
        b.iter(|| exact_deviation_probability(black_box(&mu), &phi, 16, 0.5).unwrap())
    });
}

fn bench_mc(c: &mut Criterion) {
    let cfg = ShiftExperiment {
        psi: Potential::bernoulli(&[1.0, 1.0]).unwrap(),
        phi: TableObservable::new(2, 1, vec![-1.0, 1.0]).unwrap(),
        epsilon: 0.5,
        n_grid: vec![100],
        samples: 20_000,
        seed: 7,
        mode: Mode::Mc,
        sampler: SamplerKind::Tilted,
        workers: 1,
    };
    c.bench_function("tilted-mc/n100-20k-samples", |b| {
        b.iter(|| deviate_shift(black_box(&cfg)).unwrap())
    });
}

criterion_group!(
    benches,
    bench_pressure,
    bench_rauzy,
    bench_orbit,
    bench_enumeration,
    bench_mc
);
criterion_main!(benches);
