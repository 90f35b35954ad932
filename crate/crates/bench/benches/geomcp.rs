use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use geomcp::geometry::map_both;
use geomcp::simulation::generate_from_plan;
use geomcp::{geomcp_detect, pelt, replication_rng, translate, ChangePlan, CostModel, DetectionConfig, Penalty, SeriesMatrix};

fn null_data(n: usize, p: usize) -> SeriesMatrix {
    generate_from_plan(&ChangePlan::stationary(p), n, None, &mut replication_rng(1, 0)).unwrap()
}

fn mapping(c: &mut Criterion) {
    let mut g = c.benchmark_group("mapping");
    for p in [100, 400] {
        let m = null_data(500, p);
        g.bench_with_input(BenchmarkId::new("translate_and_map", p), &m, |b, m| {
            b.iter(|| map_both(&translate(black_box(m), None).unwrap()).unwrap())
        });
    }
    g.finish();
}

fn search(c: &mut Criterion) {
    let m = null_data(2000, 50);
    let (distance, _) = map_both(&translate(&m, None).unwrap()).unwrap();
    let mut g = c.benchmark_group("pelt");
    for (name, model) in [("normal", CostModel::normal()), ("empirical", CostModel::empirical())] {
        g.bench_function(name, |b| {
            b.iter(|| pelt(black_box(&distance.values), model, Penalty::Mbic, 2).unwrap())
        });
    }
    g.finish();
}

fn detect(c: &mut Criterion) {
    let mut g = c.benchmark_group("detect");
    g.sample_size(20);
    for p in [100, 200, 400] {
        let m = null_data(500, p);
        let cfg = DetectionConfig::default();
        g.bench_with_input(BenchmarkId::new("n500", p), &m, |b, m| b.iter(|| geomcp_detect(black_box(m), &cfg).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, mapping, search, detect);
criterion_main!(benches);
