use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use idcl_bench::{clustered_embedding, epoch_state};
use idcl_core::assignment::{soft_assign_to_cores, target_distribution};
use idcl_core::autoencoder::{backward, forward, init_params};
use idcl_core::density::difficulty_measurer;
use idcl_core::kmeans::{lloyd, KMeansConfig};
use idcl_core::metrics::hungarian;
use idcl_core::numerics::pairwise_sq_dists;
use idcl_core::objective::{clu_grad_with_cores, reconstruction_grad};
use idcl_core::RngStream;
use ndarray::Array2;
use std::hint::black_box;

fn density(c: &mut Criterion) {
    let mut group = c.benchmark_group("density");
    for n in [500, 1797] {
        let z = clustered_embedding(n, 10, 10, 1);
        group.bench_with_input(BenchmarkId::new("pairwise", n), &z, |b, z| {
            b.iter(|| pairwise_sq_dists(black_box(z)))
        });
        group.bench_with_input(BenchmarkId::new("difficulty", n), &z, |b, z| {
            b.iter(|| difficulty_measurer(black_box(z), 0.02).unwrap())
        });
    }
    group.finish();
}

fn assignment(c: &mut Criterion) {
    let z = clustered_embedding(1797, 10, 10, 2);
    let (_, cores, p) = epoch_state(&z, 10);
    c.bench_function("soft_assign_and_target/1797", |b| {
        b.iter(|| {
            let q = soft_assign_to_cores(black_box(z.view()), &cores).unwrap();
            target_distribution(&q).unwrap()
        })
    });
    let rows: Vec<usize> = (0..256).collect();
    let zb = z.select_rows(&rows).unwrap();
    let pb = p.select(ndarray::Axis(0), &rows);
    c.bench_function("clu_grad/batch256", |b| {
        b.iter(|| clu_grad_with_cores(black_box(zb.view()), &pb, &cores).unwrap())
    });
}

fn clustering(c: &mut Criterion) {
    let z = clustered_embedding(1797, 10, 10, 3);
    c.bench_function("lloyd/1797x10/k10", |b| {
        b.iter(|| lloyd(black_box(z.view()), 10, &mut RngStream::new(5), &KMeansConfig::default()).unwrap())
    });
    let mut rng = RngStream::new(4);
    let cost = Array2::from_shape_fn((10, 10), |_| rng.uniform());
    c.bench_function("hungarian/10", |b| b.iter(|| hungarian(black_box(&cost)).unwrap()));
}

fn network(c: &mut Criterion) {
    let mut rng = RngStream::new(6);
    let net = init_params(64, &[512, 512, 3072], 10, &mut rng).unwrap();
    let x = Array2::from_shape_fn((256, 64), |_| rng.uniform());
    let mut group = c.benchmark_group("network");
    group.sample_size(10);
    group.bench_function("forward_backward/batch256", |b| {
        b.iter(|| {
            let cache = forward(&net, black_box(x.view())).unwrap();
            let g = reconstruction_grad(x.view(), cache.reconstruction());
            backward(&net, &cache, g.view(), None).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, density, assignment, clustering, network);
criterion_main!(benches);
