//! Density-core cluster assignment.
//!
//! Instead of a centroid, each cluster is represented by its density core:
//! the `max(1, ceil(lambda2 * |C_k|))` densest members. A sample's similarity
//! to cluster `k` is the sum of Student-t kernels `1 / (1 + |z_i - z_j|^2)` over
//! the core, and the soft assignment `q_ik` normalises those similarities over
//! clusters. The self-training target `p_ik` squares `q_ik`, divides by the
//! cluster's soft frequency `f_k = sum_i q_ik` and renormalises each row.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::numerics::{group_by_label, rank_position, sq_dist, EmbeddedMatrix};

/// Default core percentile.
pub const DEFAULT_LAMBDA2: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub k: usize,
    pub labels: Vec<usize>,
    /// Sample indices of each cluster's density core, densest first.
    pub cores: Vec<Vec<usize>>,
    pub lambda2: f64,
}

impl ClusterState {
    /// Derive density cores for a hard partition given per-sample densities.
    ///
    /// Empty clusters get an empty core; [`soft_assign`] rejects those.
    pub fn new(labels: Vec<usize>, k: usize, rho: &[f64], lambda2: f64) -> Result<Self> {
        if labels.len() != rho.len() {
            return Err(Error::ShapeMismatch {
                context: "labels vs densities",
                expected: (rho.len(), 1),
                actual: (labels.len(), 1),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::param("label", bad as f64, "a cluster id below k"));
        }
        let cores = group_by_label(&labels, k)
            .iter()
            .map(|members| {
                if members.is_empty() {
                    Ok(Vec::new())
                } else {
                    density_core(members, rho, lambda2)
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            k,
            labels,
            cores,
            lambda2,
        })
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        group_by_label(&self.labels, self.k)
    }
}

/// The `max(1, ceil(lambda2 * |C|))` members with the highest density; ties go
/// to the smaller sample index.
pub fn density_core(members: &[usize], rho: &[f64], lambda2: f64) -> Result<Vec<usize>> {
    if members.is_empty() {
        return Err(Error::Empty("cluster"));
    }
    if !(lambda2 > 0.0 && lambda2 <= 1.0) {
        return Err(Error::param("lambda2", lambda2, "a value in (0, 1]"));
    }
    let mut order = members.to_vec();
    order.sort_by(|&a, &b| rho[b].total_cmp(&rho[a]).then(a.cmp(&b)));
    order.truncate(rank_position(members.len(), lambda2));
    Ok(order)
}

/// Core coordinates captured at one point in time.
///
/// Training treats core embeddings as constants between re-selections, so the
/// soft assignment of a batch is computed against a snapshot rather than the
/// live encoder output.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreSet {
    points: Vec<Array2<f64>>,
}

impl CoreSet {
    pub fn gather(z: &EmbeddedMatrix, state: &ClusterState) -> Result<Self> {
        let points = state
            .cores
            .iter()
            .enumerate()
            .map(|(cluster, core)| {
                if core.is_empty() {
                    Err(Error::EmptyCore { cluster })
                } else {
                    Ok(z.view().select(Axis(0), core))
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { points })
    }

    pub fn from_points(points: Vec<Array2<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("core set"));
        }
        let d = points[0].ncols();
        for (cluster, p) in points.iter().enumerate() {
            if p.nrows() == 0 {
                return Err(Error::EmptyCore { cluster });
            }
            if p.ncols() != d {
                return Err(Error::ShapeMismatch {
                    context: "core dimension",
                    expected: (p.nrows(), d),
                    actual: p.dim(),
                });
            }
        }
        Ok(Self { points })
    }

    pub fn k(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.points[0].ncols()
    }

    pub fn cluster(&self, k: usize) -> ArrayView2<'_, f64> {
        self.points[k].view()
    }

    pub fn iter(&self) -> impl Iterator<Item = ArrayView2<'_, f64>> {
        self.points.iter().map(|p| p.view())
    }
}

/// `sum_j 1 / (1 + |z_i - z_j|^2)` over the core points.
pub fn core_similarity(zi: ArrayView1<'_, f64>, core: ArrayView2<'_, f64>) -> f64 {
    core.rows()
        .into_iter()
        .map(|zj| 1.0 / (1.0 + sq_dist(zi, zj)))
        .sum()
}

/// `n x K` matrix of core similarities `s_ik`.
pub fn core_similarities(z: ArrayView2<'_, f64>, cores: &CoreSet) -> Result<Array2<f64>> {
    if z.ncols() != cores.dim() {
        return Err(Error::ShapeMismatch {
            context: "embedding vs core dimension",
            expected: (z.nrows(), cores.dim()),
            actual: z.dim(),
        });
    }
    let mut s = Array2::zeros((z.nrows(), cores.k()));
    for (i, zi) in z.rows().into_iter().enumerate() {
        for (k, core) in cores.iter().enumerate() {
            s[[i, k]] = core_similarity(zi, core);
        }
    }
    Ok(s)
}

/// Soft assignment of `z` against a fixed core snapshot.
pub fn soft_assign_to_cores(z: ArrayView2<'_, f64>, cores: &CoreSet) -> Result<Array2<f64>> {
    let mut q = core_similarities(z, cores)?;
    for mut row in q.rows_mut() {
        let total: f64 = row.sum();
        row /= total;
    }
    Ok(q)
}

/// Soft assignment with cores taken from `z` itself.
pub fn soft_assign(z: &EmbeddedMatrix, state: &ClusterState) -> Result<Array2<f64>> {
    soft_assign_to_cores(z.view(), &CoreSet::gather(z, state)?)
}

/// Sharpened, frequency-corrected target `P` for a strictly positive `Q`.
pub fn target_distribution(q: &Array2<f64>) -> Result<Array2<f64>> {
    let freq = q.sum_axis(Axis(0));
    if let Some(cluster) = freq.iter().position(|f| !(*f > 0.0)) {
        return Err(Error::ZeroColumnMass { cluster });
    }
    let mut p = q.mapv(|v| v * v);
    for mut row in p.rows_mut() {
        row /= &freq;
        let total = row.sum();
        row /= total;
    }
    Ok(p)
}

/// Row-wise argmax; ties resolve to the lowest cluster id.
pub fn hard_labels(q: &Array2<f64>) -> Vec<usize> {
    q.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// `Q` together with the target `P` derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentPair {
    pub q: Array2<f64>,
    pub p: Array2<f64>,
}

impl AssignmentPair {
    pub fn from_q(q: Array2<f64>) -> Result<Self> {
        let p = target_distribution(&q)?;
        Ok(Self { q, p })
    }
}
