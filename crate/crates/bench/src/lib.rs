//! Fixtures shared by the benchmarks.

use idcl_core::assignment::{soft_assign_to_cores, target_distribution, ClusterState, CoreSet};
use idcl_core::density::difficulty_measurer;
use idcl_core::kmeans::{lloyd, KMeansConfig};
use idcl_core::{EmbeddedMatrix, RngStream};
use ndarray::Array2;

/// `n` points in `d` dimensions drawn around `k` well-spread centers.
pub fn clustered_embedding(n: usize, d: usize, k: usize, seed: u64) -> EmbeddedMatrix {
    let mut rng = RngStream::new(seed);
    let centers = Array2::from_shape_fn((k, d), |_| rng.uniform_in(-10.0, 10.0));
    let z = Array2::from_shape_fn((n, d), |(i, j)| centers[[i % k, j]] + rng.normal());
    EmbeddedMatrix::new(z).expect("finite draws")
}

/// Cluster state, cores and targets for `z`, as one training epoch builds them.
pub fn epoch_state(z: &EmbeddedMatrix, k: usize) -> (ClusterState, CoreSet, Array2<f64>) {
    let profile = difficulty_measurer(z, 0.02).expect("valid embedding");
    let km = lloyd(z.view(), k, &mut RngStream::new(0), &KMeansConfig::default()).expect("k <= n");
    let state = ClusterState::new(km.labels, k, &profile.rho, 0.05).expect("valid labels");
    let cores = CoreSet::gather(z, &state).expect("nonempty clusters");
    let q = soft_assign_to_cores(z.view(), &cores).expect("matching dims");
    let p = target_distribution(&q).expect("valid q");
    (state, cores, p)
}
