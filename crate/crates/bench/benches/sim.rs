use criterion::{black_box, criterion_group, criterion_main, Criterion};

use cplab_bench::medium_construction;
use cplab_core::ancestry::{self, RenewalScanner};
use cplab_core::forward::{run_multitype, TypedConfig};
use cplab_core::walk::{presets, DecompositionCache};

fn sampling(c: &mut Criterion) {
    let mut group = c.benchmark_group("harris");
    group.sample_size(20);
    group.bench_function("sample_401x50", |b| {
        let mut seed = 0u64;
        b.iter(|| {
            seed += 1;
            black_box(medium_construction(seed))
        })
    });
    group.bench_function("reverse", |b| {
        let h = medium_construction(7);
        b.iter(|| black_box(h.reverse(50.0)))
    });
    group.finish();
}

fn forward_sweep(c: &mut Criterion) {
    let h = medium_construction(3);
    let init = TypedConfig::heaviside(h.window());
    h.merged_events(); // build the index outside the timing loop
    let mut group = c.benchmark_group("forward");
    group.sample_size(30);
    group.bench_function("heaviside_sweep_50", |b| {
        b.iter(|| black_box(run_multitype(&h, &init, &[25.0], 50.0).final_config))
    });
    group.finish();
}

fn dual_machinery(c: &mut Criterion) {
    let h = medium_construction(5);
    h.merged_events();
    let mut group = c.benchmark_group("ancestry");
    group.sample_size(30);
    group.bench_function("trace_to_50", |b| {
        b.iter(|| black_box(ancestry::trace_ancestry(&h, 0, 50.0).value.len()))
    });
    group.bench_function("renewal_scan_margin_15", |b| {
        b.iter(|| {
            let mut scanner = RenewalScanner::new(&h, 0, 15.0);
            let mut n = 0;
            while scanner.next_renewal().is_some() {
                n += 1;
            }
            black_box(n)
        })
    });
    group.finish();
}

fn walk_tails(c: &mut Criterion) {
    let family = presets::drifted();
    let cache = DecompositionCache::build(&family).unwrap();
    let mut group = c.benchmark_group("walk");
    group.bench_function("hitting_tail_1e3x256", |b| {
        b.iter(|| {
            black_box(cplab_core::walk::hitting_tail_mc(
                &family,
                &cache,
                5,
                &[256],
                1000,
                9,
            ))
        })
    });
    group.finish();
}

criterion_group!(benches, sampling, forward_sweep, dual_machinery, walk_tails);
criterion_main!(benches);
