use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rana::align::{build_prior, final_lite_align, isorank_align, AlignerConfig};
use rana::graph::{synthesize_pair, NoiseSpec};
use rana::influence::{compute_influence, DEFAULT_TRUNC_EPS};
use rana::selection::{
    greedy_select, score_candidates, ActivationSet, Cleanliness, SelectionConfig,
};
use rana::NetworkPair;

fn pair(n: usize) -> NetworkPair {
    let mut p = synthesize_pair(n, 0.05, 1, NoiseSpec::new(0.1, 2).unwrap()).unwrap();
    p.sample_anchors(0.1, 3).unwrap();
    p
}

fn solvers(c: &mut Criterion) {
    let mut g = c.benchmark_group("align");
    g.sample_size(10);
    let cfg = AlignerConfig::default();
    for n in [100, 200, 400] {
        let p = pair(n);
        let prior = build_prior(&p, &[]).unwrap();
        g.bench_with_input(BenchmarkId::new("isorank", n), &n, |b, _| {
            b.iter(|| isorank_align(black_box(&p), &prior, &cfg).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("final_lite", n), &n, |b, _| {
            b.iter(|| final_lite_align(black_box(&p), &prior, &cfg).unwrap())
        });
    }
    g.finish();
}

fn influence(c: &mut Criterion) {
    let mut g = c.benchmark_group("influence");
    for n in [200, 1000] {
        let p = pair(n);
        for k in [1, 2, 3] {
            g.bench_with_input(BenchmarkId::new(format!("k{k}"), n), &n, |b, _| {
                b.iter(|| compute_influence(black_box(&p.source), k, DEFAULT_TRUNC_EPS).unwrap())
            });
        }
    }
    g.finish();
}

fn selection(c: &mut Criterion) {
    let p = pair(200);
    let prior = build_prior(&p, &[]).unwrap();
    let state = isorank_align(&p, &prior, &AlignerConfig::default()).unwrap();
    let cfg = SelectionConfig::default();
    let clean = Cleanliness::compute(&p);
    let fs = compute_influence(&p.source, 2, DEFAULT_TRUNC_EPS).unwrap();
    let ft = compute_influence(&p.target, 2, DEFAULT_TRUNC_EPS).unwrap();
    let pool: Vec<(usize, usize)> = state
        .candidates
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().map(move |&j| (i, j)))
        .collect();
    let cands = score_candidates(&pool, &state, &clean, &cfg);
    c.bench_function("greedy_select/200x5", |b| {
        b.iter(|| {
            let covered = ActivationSet::empty(200, 200);
            greedy_select(black_box(&cands), (&fs, &ft), &cfg, covered).unwrap()
        })
    });
}

criterion_group!(benches, solvers, influence, selection);
criterion_main!(benches);
