//! Losses and the analytic gradient of the clustering loss.
//!
//! The total objective over a training set `D` is
//! `L = (1/|D|) sum_i |x_i - g(f(x_i))|^2 + alpha * sum_i sum_k p_ik log(p_ik / q_ik)`:
//! reconstruction is averaged over samples, the KL term is a plain sum.
//!
//! With `d_ik = sum_{j in core_k} (1 + |z_i - z_j|^2)^-1` and `A_i = sum_k d_ik`
//! (so `q_ik = d_ik / A_i`) and `P` held fixed, `dL_clu/dd_ik = (q_ik - p_ik) / d_ik`,
//! which gives
//!
//! ```text
//! dL_clu/dz_i = 2 sum_k (p_ik - q_ik) / d_ik * sum_{j in core_k} (z_i - z_j) / (1 + |z_i - z_j|^2)^2
//! ```
//!
//! Core coordinates are constants here; they are refreshed when cores are re-selected.

use ndarray::{Array1, Array2, ArrayView2};

use crate::assignment::{core_similarities, ClusterState, CoreSet};
use crate::error::{Error, Result};
use crate::numerics::{sq_dist, EmbeddedMatrix};

/// Default weight of the clustering term.
pub const DEFAULT_ALPHA: f64 = 0.1;

/// Gradients whose magnitude falls below this are compared absolutely.
pub const GRAD_ABS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_rec: f64,
    pub l_clu: f64,
    pub alpha: f64,
    pub total: f64,
}

fn same_shape(context: &'static str, a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            context,
            expected: a,
            actual: b,
        })
    }
}

/// `KL(P || Q) = sum_ik p_ik log(p_ik / q_ik)`; zero-probability targets contribute nothing.
pub fn clustering_loss(p: &Array2<f64>, q: &Array2<f64>) -> Result<f64> {
    same_shape("KL(P || Q)", p.dim(), q.dim())?;
    let mut total = 0.0;
    for ((idx, &pv), &qv) in p.indexed_iter().zip(q.iter()) {
        if pv == 0.0 {
            continue;
        }
        if qv <= 0.0 {
            return Err(Error::InfiniteDivergence {
                row: idx.0,
                col: idx.1,
            });
        }
        total += pv * (pv / qv).ln();
    }
    Ok(total)
}

/// Mean over samples of the squared Euclidean residual norm.
pub fn reconstruction_loss(x: ArrayView2<'_, f64>, xhat: ArrayView2<'_, f64>) -> Result<f64> {
    same_shape("reconstruction", x.dim(), xhat.dim())?;
    if x.nrows() == 0 {
        return Err(Error::Empty("reconstruction batch"));
    }
    let sum: f64 = x.iter().zip(xhat.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / x.nrows() as f64)
}

/// Gradient of [`reconstruction_loss`] with respect to `xhat`.
pub fn reconstruction_grad(x: ArrayView2<'_, f64>, xhat: ArrayView2<'_, f64>) -> Array2<f64> {
    let scale = 2.0 / x.nrows() as f64;
    (&xhat - &x) * scale
}

pub fn total_loss(l_rec: f64, l_clu: f64, alpha: f64) -> LossBreakdown {
    LossBreakdown {
        l_rec,
        l_clu,
        alpha,
        total: l_rec + alpha * l_clu,
    }
}

/// Per-core kernel sums `d_ik` and their row totals `A_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CluGradIntermediates {
    pub d: Array2<f64>,
    pub a: Array1<f64>,
}

impl CluGradIntermediates {
    pub fn compute(z: ArrayView2<'_, f64>, cores: &CoreSet) -> Result<Self> {
        let d = core_similarities(z, cores)?;
        let a = d.sum_axis(ndarray::Axis(1));
        Ok(Self { d, a })
    }

    pub fn q(&self) -> Array2<f64> {
        let mut q = self.d.clone();
        for (mut row, a) in q.rows_mut().into_iter().zip(self.a.iter()) {
            row /= *a;
        }
        q
    }
}

/// `dL_clu / dd_ik = (q_ik - p_ik) / d_ik`.
pub fn loss_grad_wrt_kernel_sums(q: &Array2<f64>, p: &Array2<f64>, d: &Array2<f64>) -> Array2<f64> {
    let mut g = q - p;
    g /= d;
    g
}

/// Clustering-loss gradient with respect to every row of `z`, against frozen cores.
pub fn clu_grad_with_cores(
    z: ArrayView2<'_, f64>,
    p: &Array2<f64>,
    cores: &CoreSet,
) -> Result<Array2<f64>> {
    same_shape("target vs embeddings", (z.nrows(), cores.k()), p.dim())?;
    let inter = CluGradIntermediates::compute(z, cores)?;
    let mut grad = Array2::zeros(z.dim());
    for (i, zi) in z.rows().into_iter().enumerate() {
        let mut gi = grad.row_mut(i);
        for (k, core) in cores.iter().enumerate() {
            let d = inter.d[[i, k]];
            let coef = 2.0 * (p[[i, k]] - d / inter.a[i]) / d;
            if coef == 0.0 {
                continue;
            }
            for zj in core.rows() {
                let w = 1.0 + sq_dist(zi, zj);
                let s = coef / (w * w);
                for ((g, a), b) in gi.iter_mut().zip(zi.iter()).zip(zj.iter()) {
                    *g += s * (a - b);
                }
            }
        }
    }
    Ok(grad)
}

/// Clustering-loss gradient with cores read from `z` and then held fixed.
pub fn clu_grad(z: &EmbeddedMatrix, p: &Array2<f64>, state: &ClusterState) -> Result<Array2<f64>> {
    let cores = CoreSet::gather(z, state)?;
    clu_grad_with_cores(z.view(), p, &cores)
}

/// `|a - b| / max(|a|, |b|)`, or `|a - b|` when both are below [`GRAD_ABS_FLOOR`].
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    let diff = (analytic - numeric).abs();
    if scale < GRAD_ABS_FLOOR {
        diff
    } else {
        diff / scale
    }
}

/// Central-difference check of [`clu_grad`]; returns the worst relative error.
pub fn grad_check(
    z: &EmbeddedMatrix,
    p: &Array2<f64>,
    state: &ClusterState,
    step: f64,
) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::param("step", step, "a positive perturbation"));
    }
    let cores = CoreSet::gather(z, state)?;
    let analytic = clu_grad_with_cores(z.view(), p, &cores)?;
    let loss_at = |zz: &Array2<f64>| -> Result<f64> {
        let q = crate::assignment::soft_assign_to_cores(zz.view(), &cores)?;
        clustering_loss(p, &q)
    };
    let mut work = z.view().to_owned();
    let mut worst: f64 = 0.0;
    for idx in ndarray::indices(work.dim()) {
        let orig = work[idx];
        work[idx] = orig + step;
        let up = loss_at(&work)?;
        work[idx] = orig - step;
        let down = loss_at(&work)?;
        work[idx] = orig;
        let numeric = (up - down) / (2.0 * step);
        worst = worst.max(relative_error(analytic[idx], numeric));
    }
    Ok(worst)
}
