//! Batch forward/backward over encoded records: rayon fan-out vs a plain
//! loop on one thread. Build with `--no-default-features` and `par::map`
//! itself becomes sequential.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use rulefuzz::data::{gen_random_industry, GenSpec};
use rulefuzz::fuzzify::{DiffModel, FuzzConfig, ModelSpec};
use rulefuzz::par;
use rulefuzz::scenario::{Relaxation, Scenario};
use rulefuzz::train::Encoded;

const CHUNK: usize = 25;

fn chunk_grad(model: &DiffModel, enc: &Encoded, rows: &[usize]) -> Vec<f64> {
    let mut ws = model.workspace();
    let mut grad = vec![0.0; model.param_count()];
    for &i in rows {
        model.graph.forward(&mut ws, enc.row(i), &model.params.values).unwrap();
        model.graph.backward(&mut ws, &model.params.values, &[1.0], &mut grad);
    }
    grad
}

fn chunk_forward(model: &DiffModel, enc: &Encoded, rows: &[usize]) -> f64 {
    let mut ws = model.workspace();
    rows.iter()
        .map(|&i| model.forward(&mut ws, enc.row(i)).unwrap()[0])
        .sum()
}

fn bench(c: &mut Criterion) {
    let data = gen_random_industry(&GenSpec::new(2000, 1)).unwrap();
    let mut group = c.benchmark_group("batch");
    group.sample_size(20);
    for r in [Relaxation::TimeRight, Relaxation::All] {
        let model = DiffModel::build(ModelSpec::rules(Scenario::Industry, r.source()), FuzzConfig::default()).unwrap();
        let enc = Encoded::new(&model, &data).unwrap();
        let idx: Vec<usize> = (0..enc.len()).collect();
        let chunks: Vec<&[usize]> = idx.chunks(CHUNK).collect();

        group.bench_with_input(BenchmarkId::new("gradient/parallel", r), &chunks, |b, ch| {
            b.iter(|| par::map(ch, |c| chunk_grad(&model, &enc, c)))
        });
        group.bench_with_input(BenchmarkId::new("gradient/sequential", r), &chunks, |b, ch| {
            b.iter(|| par::map_seq(ch, |c| chunk_grad(&model, &enc, c)))
        });
        group.bench_with_input(BenchmarkId::new("forward/parallel", r), &chunks, |b, ch| {
            b.iter(|| par::map(ch, |c| chunk_forward(&model, &enc, c)))
        });
        group.bench_with_input(BenchmarkId::new("forward/sequential", r), &chunks, |b, ch| {
            b.iter(|| par::map_seq(ch, |c| chunk_forward(&model, &enc, c)))
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
