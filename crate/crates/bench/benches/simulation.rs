use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use awdl_bench::mesh_scenario;
use awdl_core::sim::{run_scenario, SimOptions};

fn mesh(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulated_seconds");
    g.sample_size(10);
    for n in [2u8, 5, 10] {
        let scenario = mesh_scenario(n, 5_000);
        g.bench_with_input(BenchmarkId::new("mesh_5s", n), &scenario, |b, s| {
            b.iter(|| run_scenario(black_box(s), SimOptions::default()).unwrap())
        });
    }
    let scenario = mesh_scenario(5, 5_000);
    g.bench_function("mesh_5s_with_pcap/5", |b| {
        b.iter(|| run_scenario(black_box(&scenario), SimOptions { record_pcap: true }).unwrap())
    });
    g.finish();
}

criterion_group!(benches, mesh);
criterion_main!(benches);
