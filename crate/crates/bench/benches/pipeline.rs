use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use connectogen::centrality::{betweenness, differentiable_ec, eigenvector, EC_UNROLL_STEPS};
use connectogen::gcn::{normalize_adjacency, ModelSet, ParamMode};
use connectogen::population::{feature_len, synthesize_population, vectorize, BrainGraph};
use connectogen::similarity::{learn_similarity, KernelBank};
use connectogen::tensor::{ParamStore, Tape, Tensor};
use connectogen::training::{
    generator_objective, train, ClusterBatch, LossWeights, TrainingConfig,
};
use connectogen::Metric;

fn random_graph(rng: &mut ChaCha8Rng, r: usize) -> BrainGraph {
    let mut w = Tensor::zeros(r, r);
    for i in 0..r {
        for j in (i + 1)..r {
            let v = rng.gen_range(0.1..1.0);
            w.set(i, j, v);
            w.set(j, i, v);
        }
    }
    BrainGraph::new(w).unwrap()
}

fn bench_centrality(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = random_graph(&mut rng, 35);
    c.bench_function("betweenness r=35", |b| b.iter(|| betweenness(&g).unwrap()));
    c.bench_function("eigenvector r=35", |b| {
        b.iter(|| eigenvector(&g, 1000, 1e-10).unwrap())
    });
    let values = vectorize(&g);
    let row = Tensor::from_vec(1, values.len(), values).unwrap();
    c.bench_function("differentiable EC forward+backward r=35", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let leaf = tape.leaf(row.clone());
            let ec = differentiable_ec(&mut tape, leaf, 35, EC_UNROLL_STEPS).unwrap();
            let s = tape.sum(ec).unwrap();
            tape.backward(s).unwrap();
        })
    });
}

fn bench_similarity(c: &mut Criterion) {
    let pop = synthesize_population(2, 100, 8, 1, 2, 0.05)
        .unwrap()
        .population;
    let feats = pop.source().features.clone();
    c.bench_function("mkml similarity n=100", |b| {
        b.iter(|| learn_similarity(&feats, &KernelBank::default_bank(), 5).unwrap())
    });
}

fn bench_gcn(c: &mut Criterion) {
    let f = feature_len(8);
    let mut store = ParamStore::new();
    let model = ModelSet::new(&mut store, f, 2, 2, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 70;
    let feats = Tensor::from_vec(n, f, (0..n * f).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
    let mut sim = Tensor::identity(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v: f64 = rng.gen_range(0.0..1.0);
            sim.set(i, j, v);
            sim.set(j, i, v);
        }
    }
    let a_norm = normalize_adjacency(&sim).unwrap();
    c.bench_function("encoder forward n=70", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let fe = tape.constant(feats.clone());
            let an = tape.constant(a_norm.clone());
            model
                .encoder
                .encode(&mut tape, &store, ParamMode::Frozen, fe, an)
                .unwrap();
        })
    });
}

fn bench_generator_step(c: &mut Criterion) {
    let f = feature_len(8);
    let mut store = ParamStore::new();
    let model = ModelSet::new(&mut store, f, 2, 2, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 16;
    let mk = |rng: &mut ChaCha8Rng| {
        Tensor::from_vec(n, f, (0..n * f).map(|_| rng.gen_range(0.1..0.9)).collect()).unwrap()
    };
    let batches: Vec<ClusterBatch> = (0..2)
        .map(|_| ClusterBatch {
            source_feats: mk(&mut rng),
            source_anorm: Tensor::identity(n),
            real_targets: (0..2).map(|_| mk(&mut rng)).collect(),
            target_anorms: (0..2).map(|_| Tensor::identity(n)).collect(),
            loc_subsample: (0..n).collect(),
        })
        .collect();
    let weights = LossWeights::default();
    c.bench_function("generator objective backward (EC, 2 clusters)", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let (loss, _) = generator_objective(
                &mut tape,
                &model,
                &store,
                &batches,
                &weights,
                Metric::Eigenvector,
                8,
            )
            .unwrap();
            tape.backward(loss).unwrap();
        })
    });
}

fn bench_training_iteration(c: &mut Criterion) {
    let pop = synthesize_population(7, 24, 6, 2, 2, 0.02)
        .unwrap()
        .population;
    let config = TrainingConfig {
        iterations: 1,
        batch_size: 16,
        c: 2,
        seed: 7,
        centrality_metric: Metric::Closeness,
        ..TrainingConfig::default()
    };
    let weights = LossWeights::default();
    c.bench_function("full training iteration n=24 (CC)", |b| {
        b.iter(|| train(&pop, &config, &weights).unwrap())
    });
}

criterion_group!(
    benches,
    bench_centrality,
    bench_similarity,
    bench_gcn,
    bench_generator_step,
    bench_training_iteration
);
criterion_main!(benches);
