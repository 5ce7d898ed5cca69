use coherence_bench::{captions, primary_subsets, two_annotator_store};
use coherence_core::evaluate::{cider_score, cohen_kappa, CiderConfig};
use coherence_core::labelmap::map_to_single;
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

fn cider(c: &mut Criterion) {
    let mut group = c.benchmark_group("cider");
    for n in [100, 1000] {
        let cands = captions(n, 1);
        let refs: Vec<Vec<String>> = captions(n * 5, 2).chunks(5).map(|c| c.to_vec()).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| cider_score(black_box(&cands), black_box(&refs), &CiderConfig::default()).unwrap())
        });
    }
    group.finish();
}

fn labelmap(c: &mut Criterion) {
    let subsets = primary_subsets();
    c.bench_function("labelmap/63x100", |b| {
        b.iter(|| {
            for rs in &subsets {
                for seed in 0..100 {
                    black_box(map_to_single(rs, seed).unwrap());
                }
            }
        })
    });
}

fn kappa(c: &mut Criterion) {
    let store = two_annotator_store(300, 3);
    c.bench_function("kappa/300-pairs", |b| {
        b.iter(|| cohen_kappa(black_box(&store), "a", "b").unwrap())
    });
}

criterion_group!(benches, cider, labelmap, kappa);
criterion_main!(benches);
