use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use patternforge::parabolic::{lambda1, solve_parabolic, ControlSchedule, SimOptions};
use patternforge::phase_plane::{half_period, integrate_orbit};
use patternforge::steady_synth::{finger_pattern, synthesize_divergence};
use patternforge::{default_nonlinearity, Grid, PhasePoint, PiecewiseProfile, SStarTarget};

fn orbits(c: &mut Criterion) {
    let nl = default_nonlinearity();
    let profile = PiecewiseProfile::constant(0.0, 20.0, 0.5).unwrap();
    c.bench_function("integrate_orbit length 20", |b| {
        b.iter(|| integrate_orbit(black_box(PhasePoint::new(0.6, 0.0)), &profile, (0.0, 20.0), 1e-10, &nl).unwrap())
    });
    c.bench_function("half_period", |b| b.iter(|| half_period(black_box(0.7), 0.5, &nl).unwrap()));
}

fn synthesis(c: &mut Criterion) {
    let nl = default_nonlinearity();
    let grid = Grid::unit(1025).unwrap();
    let target = SStarTarget::new(vec![0.5, -0.5], vec![0.0, 0.5, 1.0]).unwrap();
    c.bench_function("synthesize_divergence N=1 eps=0.1", |b| {
        b.iter(|| synthesize_divergence(black_box(&target), 0.1, &grid, &nl).unwrap())
    });
}

fn parabolic(c: &mut Criterion) {
    let nl = default_nonlinearity();
    let mut group = c.benchmark_group("parabolic");
    group.sample_size(20);
    for n in [257, 1025] {
        let grid = Grid::unit(n).unwrap();
        let finger = finger_pattern(1, 0.8, &grid, &nl).unwrap();
        let sched = ControlSchedule::frozen(&finger.state, 0.1).unwrap();
        group.bench_function(format!("solve 100 steps, grid {n}"), |b| {
            b.iter(|| {
                solve_parabolic(black_box(&finger.state.values), &sched, &grid, &SimOptions::default(), &nl).unwrap()
            })
        });
    }
    let grid = Grid::unit(4096).unwrap();
    let mu = PiecewiseProfile::constant(0.0, 1.0, 1.0).unwrap();
    group.bench_function("lambda1 grid 4096", |b| b.iter(|| lambda1(black_box(&mu), &nl, &grid).unwrap()));
    group.finish();
}

criterion_group!(benches, orbits, synthesis, parabolic);
criterion_main!(benches);
