use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use treespec::{
    build_tree, expand_tree, greedy_decode, prune_tree, speculative_decode, verify_tree,
    verify_tree_batched, BranchPolicy,
};
use treespec_bench::Fixture;

fn tree_construction(c: &mut Criterion) {
    let fx = Fixture::new();
    let draft = fx.draft(0.25);
    let prompt = &fx.prompts[0];
    let mut group = c.benchmark_group("tree_construction");
    for (b, d, n) in [(2, 4, 8), (3, 5, 16), (4, 4, 32)] {
        let policy = BranchPolicy::new(0.5, b, d, n).unwrap();
        let label = format!("b{b}_d{d}_n{n}");
        group.bench_with_input(
            BenchmarkId::new("best_first", &label),
            &policy,
            |bench, p| bench.iter(|| build_tree(&draft, black_box(prompt), p).unwrap()),
        );
        group.bench_with_input(
            BenchmarkId::new("expand_then_prune", &label),
            &policy,
            |bench, p| {
                bench.iter(|| {
                    let full = expand_tree(&draft, black_box(prompt), p).unwrap();
                    prune_tree(&full, n).unwrap()
                })
            },
        );
    }
    group.finish();
}

fn verification(c: &mut Criterion) {
    let fx = Fixture::new();
    let draft = fx.draft(0.5);
    let policy = BranchPolicy::new(0.5, 4, 8, 32).unwrap();
    let tree = build_tree(&draft, &fx.prompts[1], &policy).unwrap().tree;
    let mut group = c.benchmark_group("verification");
    group.bench_function("walk", |bench| {
        bench.iter(|| verify_tree(&fx.target, black_box(&tree)).unwrap())
    });
    group.bench_function("batched", |bench| {
        bench.iter(|| verify_tree_batched(&fx.target, black_box(&tree)).unwrap())
    });
    group.finish();
}

fn decoding(c: &mut Criterion) {
    let fx = Fixture::new();
    let max_tokens = 64;
    let mut group = c.benchmark_group("decoding");
    group.bench_function("greedy", |bench| {
        bench.iter(|| {
            for p in &fx.prompts {
                black_box(greedy_decode(&fx.target, p, max_tokens).unwrap());
            }
        })
    });
    for lambda in [0.0, 0.5, 1.0] {
        let draft = fx.draft(lambda);
        for (name, policy) in [
            ("chain", BranchPolicy::chain(6).unwrap()),
            ("dynamic", BranchPolicy::new(1.0, 4, 6, 6).unwrap()),
        ] {
            group.bench_function(BenchmarkId::new(name, format!("lambda{lambda}")), |bench| {
                bench.iter(|| {
                    for p in &fx.prompts {
                        black_box(
                            speculative_decode(&draft, &fx.target, p, max_tokens, &policy).unwrap(),
                        );
                    }
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, tree_construction, verification, decoding);
criterion_main!(benches);
