use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use vasctree::pipeline;
use vasctree::skeleton::thin;
use vasctree::stats::{cumulative_distribution, fit_power_law};
use vasctree::{build_graph, distance_transform, perfusion_map, region_grow, BinaryMask, GrowParams};
use vasctree_bench::fixture;

fn stages(c: &mut Criterion) {
    let f = fixture(4, 240.0, 1200.0);
    let dims = f.vessel.grid().dims();
    let mut g = c.benchmark_group(format!("g4_{}x{}x{}", dims[0], dims[1], dims[2]));
    g.sample_size(10);

    g.bench_function("region_grow", |b| b.iter(|| region_grow(black_box(&f.volume), &GrowParams::vessel(f.root))));
    g.bench_function("edt", |b| b.iter(|| distance_transform(black_box(&f.vessel))));
    g.bench_function("thin", |b| b.iter(|| thin(black_box(&f.vessel))));

    let skel = thin(&f.vessel).unwrap();
    let edt = pipeline::wall_distance(&f.vessel).unwrap();
    g.bench_function("graph", |b| b.iter(|| build_graph(black_box(&skel))));
    g.bench_function("tree", |b| b.iter(|| pipeline::build_tree(black_box(&skel), &edt, f.root, 1.0)));

    let tissue = BinaryMask::full(*f.vessel.grid());
    g.bench_function("perfusion_map", |b| b.iter(|| perfusion_map(black_box(&tissue), &f.vessel)));

    let (tree, _) = pipeline::build_tree(&skel, &edt, f.root, 1.0).unwrap();
    g.bench_function("power_law", |b| b.iter(|| fit_power_law(&cumulative_distribution(black_box(&tree)), None)));
    g.finish();
}

criterion_group!(benches, stages);
criterion_main!(benches);
