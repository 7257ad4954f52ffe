use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use singular_orbits::expr::Layout;
use singular_orbits::flows::{self, FieldSource, Region};
use singular_orbits::mineur_actions::{trace_cycle, CycleOptions, PlanarSystem};
use singular_orbits::par::{self, Execution};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn probe_flows(c: &mut Criterion) {
    let field = FieldSource::parse("(x1*y2 - x2*y1) + 0.5*(x1*y1 + x2*y2)^2", Layout::fiber(2)).unwrap();
    let probes = Region::cube(4, 0.8).halton(256);
    let mut g = c.benchmark_group("probe_flows");
    for (name, mode) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| par::map_with(mode, &probes, |z| flows::flow(&field, 1.0, black_box(z), 1e-10).unwrap()))
        });
    }
    g.finish();
}

fn action_cycles(c: &mut Criterion) {
    let sys = PlanarSystem::parse("x1^2 + y1^2 + 0.3*(x1^2 + y1^2)^2", 2.0).unwrap();
    let energies: Vec<f64> = (1..=32).map(|i| 0.025 * i as f64).collect();
    let opts = CycleOptions::default();
    let mut g = c.benchmark_group("action_cycles");
    for (name, mode) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| par::map_with(mode, &energies, |&e| trace_cycle(&sys, black_box(e), &opts).unwrap().integrals))
        });
    }
    g.finish();
}

criterion_group!(benches, probe_flows, action_cycles);
criterion_main!(benches);
