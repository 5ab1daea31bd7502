use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use wiretap_core::channel::max_deliverable_energy;
use wiretap_core::{solve, EnergyMode, PowerSpec, Receiver, Scheme, SolverConfig, WiretapChannel};

fn instance(n_t: usize, n_r: usize, n_e: usize) -> (WiretapChannel, PowerSpec) {
    let ch = WiretapChannel::random(n_t, n_r, n_e, 7).unwrap();
    let level = n_e as f64 + 0.5 * max_deliverable_energy(&ch, 10.0, Receiver::Eve);
    let spec = PowerSpec::new(&ch, 10.0).unwrap().with(Receiver::Eve, EnergyMode::Min, level).unwrap();
    (ch, spec)
}

pub fn sequential_vs_parallel(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    // β grid of the single-antenna AN search, then SCP restarts on MIMO.
    let cases = [("miso-an", instance(4, 1, 1), Scheme::An, 3), ("mimo-mean", instance(3, 3, 3), Scheme::Mean, 7)];
    for (name, (ch, spec), scheme, restarts) in &cases {
        for parallel in [false, true] {
            let cfg = SolverConfig { parallel, restarts: *restarts, ..SolverConfig::default() };
            let id = BenchmarkId::new(*name, if parallel { "parallel" } else { "sequential" });
            group.bench_with_input(id, &cfg, |b, cfg| b.iter(|| solve(black_box(ch), spec, *scheme, cfg).unwrap()));
        }
    }
    group.finish();
}

criterion_group!(benches, sequential_vs_parallel);
criterion_main!(benches);
