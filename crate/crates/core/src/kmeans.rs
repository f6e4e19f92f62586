//! k-means++ seeding and Lloyd iterations.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::numerics::{check_finite, sq_dist, RngStream};

pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centers: Array2<f64>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after each assignment step, starting with the seeded centers.
    pub inertia_history: Vec<f64>,
}

impl KMeansResult {
    pub fn k(&self) -> usize {
        self.centers.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
        }
    }
}

fn check_input(z: ArrayView2<'_, f64>, k: usize) -> Result<()> {
    let n = z.nrows();
    if n == 0 {
        return Err(Error::Empty("points"));
    }
    if k == 0 {
        return Err(Error::param("k", 0.0, "at least 1"));
    }
    if k > n {
        return Err(Error::TooManyClusters { k, n });
    }
    check_finite(z)
}

/// k-means++ seeding: first center uniform, later ones drawn with probability
/// proportional to the squared distance to the nearest chosen center.
///
/// When every remaining point coincides with a chosen center the draw falls
/// back to uniform over the points not yet chosen.
pub fn kmeanspp_seed(z: ArrayView2<'_, f64>, k: usize, rng: &mut RngStream) -> Result<Array2<f64>> {
    check_input(z, k)?;
    let n = z.nrows();
    let mut chosen = Vec::with_capacity(k);
    let mut taken = vec![false; n];
    let first = rng.below(n);
    chosen.push(first);
    taken[first] = true;
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(z.row(i), z.row(first))).collect();

    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    acc += w;
                    pick = Some(i);
                    if acc > target {
                        break;
                    }
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            let free: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
            free[rng.below(free.len())]
        };
        chosen.push(next);
        taken[next] = true;
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(z.row(i), z.row(next)));
        }
    }
    Ok(z.select(Axis(0), &chosen))
}

/// Nearest center per point (ties to the lower id) and the total squared distance.
fn assign(z: ArrayView2<'_, f64>, centers: &Array2<f64>) -> (Vec<usize>, Vec<f64>) {
    let mut labels = Vec::with_capacity(z.nrows());
    let mut dists = Vec::with_capacity(z.nrows());
    for row in z.rows() {
        let (best, d) = centers
            .rows()
            .into_iter()
            .map(|c| sq_dist(row, c))
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (c, d)| if d < acc.1 { (c, d) } else { acc });
        labels.push(best);
        dists.push(d);
    }
    (labels, dists)
}

/// Cluster means for `labels`. An empty cluster takes the point farthest from
/// its current center among clusters that can spare one.
fn update_centers(
    z: ArrayView2<'_, f64>,
    labels: &mut [usize],
    dists: &mut [f64],
    k: usize,
) -> Array2<f64> {
    let d = z.ncols();
    let mut counts = vec![0usize; k];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let donor = (0..labels.len())
            .filter(|&i| counts[labels[i]] > 1)
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if dists[b] >= dists[i] => Some(b),
                _ => Some(i),
            })
            .expect("k <= n leaves a cluster with two or more members");
        counts[labels[donor]] -= 1;
        labels[donor] = c;
        dists[donor] = 0.0;
        counts[c] = 1;
    }
    let mut centers = Array2::zeros((k, d));
    for (i, &l) in labels.iter().enumerate() {
        let mut row = centers.row_mut(l);
        row += &z.row(i);
    }
    for (c, mut row) in centers.rows_mut().into_iter().enumerate() {
        row /= counts[c] as f64;
    }
    centers
}

fn inertia_of(z: ArrayView2<'_, f64>, labels: &[usize], centers: &Array2<f64>) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(z.row(i), centers.row(l)))
        .sum()
}

/// Lloyd iterations from the given centers until the labels stop changing,
/// the largest center shift falls below `tol`, or `max_iter` updates.
pub fn lloyd_from(z: ArrayView2<'_, f64>, init: Array2<f64>, cfg: &KMeansConfig) -> Result<KMeansResult> {
    let k = init.nrows();
    check_input(z, k)?;
    if init.ncols() != z.ncols() {
        return Err(Error::ShapeMismatch {
            context: "initial centers",
            expected: (k, z.ncols()),
            actual: init.dim(),
        });
    }
    check_finite(init.view())?;
    if !(cfg.tol >= 0.0) {
        return Err(Error::param("tol", cfg.tol, "a non-negative tolerance"));
    }

    let mut centers = init;
    let (mut labels, mut dists) = assign(z, &centers);
    let mut history = vec![dists.iter().sum::<f64>()];
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let next = update_centers(z, &mut labels, &mut dists, k);
        let shift = centers
            .rows()
            .into_iter()
            .zip(next.rows())
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centers = next;
        let (new_labels, new_dists) = assign(z, &centers);
        let changed = new_labels != labels;
        labels = new_labels;
        dists = new_dists;
        history.push(dists.iter().sum());
        if !changed || shift < cfg.tol {
            break;
        }
    }
    // The final assignment may have emptied a cluster; repair once more so the
    // returned partition always has k members.
    let mut counts = vec![0usize; k];
    for &l in &labels {
        counts[l] += 1;
    }
    if counts.contains(&0) {
        centers = update_centers(z, &mut labels, &mut dists, k);
    }
    let inertia = inertia_of(z, &labels, &centers);
    Ok(KMeansResult {
        labels,
        centers,
        inertia,
        iterations,
        inertia_history: history,
    })
}

/// k-means++ seeding followed by Lloyd iterations.
pub fn lloyd(z: ArrayView2<'_, f64>, k: usize, rng: &mut RngStream, cfg: &KMeansConfig) -> Result<KMeansResult> {
    let init = kmeanspp_seed(z, k, rng)?;
    lloyd_from(z, init, cfg)
}

/// Independent restarts drawn from `rng`; keeps the lowest inertia (first wins ties).
pub fn lloyd_best_of(
    z: ArrayView2<'_, f64>,
    k: usize,
    restarts: usize,
    rng: &mut RngStream,
    cfg: &KMeansConfig,
) -> Result<KMeansResult> {
    if restarts == 0 {
        return Err(Error::param("restarts", 0.0, "at least 1"));
    }
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts {
        let r = lloyd(z, k, rng, cfg)?;
        if best.as_ref().map_or(true, |b| r.inertia < b.inertia) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one restart"))
}
