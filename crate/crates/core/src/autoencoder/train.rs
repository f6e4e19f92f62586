use ndarray::{Array2, ArrayView2, Axis};

use super::{backward, forward, update_step, Gradients, NetworkParams, OptimizerState};
use crate::assignment::{soft_assign_to_cores, CoreSet};
use crate::data::{augment_batch, Augmentation};
use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::objective::{
    clu_grad_with_cores, clustering_loss, reconstruction_grad, reconstruction_loss, relative_error,
    total_loss, LossBreakdown,
};

/// Clustering part of the objective for one batch: fixed targets for the
/// batch rows, frozen core coordinates and the weight `alpha`.
#[derive(Debug, Clone, Copy)]
pub struct ClusterTerm<'a> {
    pub p: &'a Array2<f64>,
    pub cores: &'a CoreSet,
    pub alpha: f64,
}

/// Loss and parameter gradients of one batch. Without a cluster term this is
/// the plain reconstruction objective.
pub fn batch_gradients(
    params: &NetworkParams,
    x: ArrayView2<'_, f64>,
    clu: Option<ClusterTerm<'_>>,
) -> Result<(LossBreakdown, Gradients)> {
    let cache = forward(params, x)?;
    let xhat = cache.reconstruction();
    let l_rec = reconstruction_loss(x, xhat)?;
    let grad_recon = reconstruction_grad(x, xhat);
    let (l_clu, alpha, grad_z) = match clu {
        Some(term) => {
            let z = cache.embedding();
            let q = soft_assign_to_cores(z, term.cores)?;
            let l = clustering_loss(term.p, &q)?;
            let g = clu_grad_with_cores(z, term.p, term.cores)? * term.alpha;
            (l, term.alpha, Some(g))
        }
        None => (0.0, 0.0, None),
    };
    let grads = backward(params, &cache, grad_recon.view(), grad_z.as_ref().map(|g| g.view()))?;
    Ok((total_loss(l_rec, l_clu, alpha), grads))
}

/// Forward-only loss, plus the ReLU activity pattern of the pass.
fn batch_loss(
    params: &NetworkParams,
    x: ArrayView2<'_, f64>,
    clu: Option<ClusterTerm<'_>>,
) -> Result<(f64, Vec<bool>)> {
    let cache = forward(params, x)?;
    let l_rec = reconstruction_loss(x, cache.reconstruction())?;
    let loss = match clu {
        Some(term) => {
            let q = soft_assign_to_cores(cache.embedding(), term.cores)?;
            l_rec + term.alpha * clustering_loss(term.p, &q)?
        }
        None => l_rec,
    };
    Ok((loss, cache.relu_pattern(params)))
}

#[derive(Clone, Copy)]
enum Coord {
    Weight(usize, (usize, usize)),
    Bias(usize, usize),
}

impl Coord {
    fn get(self, params: &mut NetworkParams) -> &mut f64 {
        match self {
            Coord::Weight(l, idx) => &mut params.layers_mut().nth(l).expect("layer index").weight[idx],
            Coord::Bias(l, j) => &mut params.layers_mut().nth(l).expect("layer index").bias[j],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Coordinates whose perturbation flipped a ReLU unit; the loss is not
    /// differentiable across the kink so they are left out.
    pub skipped: usize,
}

/// Central differences of the total batch loss against [`batch_gradients`]
/// for every weight and bias.
pub fn network_grad_check(
    params: &NetworkParams,
    x: ArrayView2<'_, f64>,
    clu: Option<ClusterTerm<'_>>,
    step: f64,
) -> Result<GradCheckReport> {
    if !(step > 0.0) {
        return Err(Error::param("step", step, "a positive perturbation"));
    }
    let (_, grads) = batch_gradients(params, x, clu)?;
    let (_, base_pattern) = batch_loss(params, x, clu)?;
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        skipped: 0,
    };

    let mut probe = |work: &mut NetworkParams, coord: Coord, analytic: f64| -> Result<()> {
        let orig = *coord.get(work);
        *coord.get(work) = orig + step;
        let (up, up_pattern) = batch_loss(work, x, clu)?;
        *coord.get(work) = orig - step;
        let (down, down_pattern) = batch_loss(work, x, clu)?;
        *coord.get(work) = orig;
        if up_pattern != base_pattern || down_pattern != base_pattern {
            report.skipped += 1;
            return Ok(());
        }
        let numeric = (up - down) / (2.0 * step);
        report.max_relative_error = report.max_relative_error.max(relative_error(analytic, numeric));
        report.checked += 1;
        Ok(())
    };

    for (l, (gw, gb)) in grads.layers.iter().enumerate() {
        for (idx, &g) in gw.indexed_iter() {
            probe(&mut work, Coord::Weight(l, idx), g)?;
        }
        for (j, &g) in gb.iter().enumerate() {
            probe(&mut work, Coord::Bias(l, j), g)?;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub augment: Option<Augmentation>,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 256,
            lr: 0.01,
            augment: None,
        }
    }
}

/// Reconstruction-only training over shuffled mini-batches.
///
/// Returns the sample-weighted mean reconstruction loss of each epoch and the
/// final optimizer state.
pub fn pretrain(
    params: &mut NetworkParams,
    x: ArrayView2<'_, f64>,
    cfg: &PretrainConfig,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, OptimizerState)> {
    if cfg.epochs == 0 {
        return Err(Error::param("epochs", 0.0, "at least 1"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::param("batch_size", 0.0, "at least 1"));
    }
    let n = x.nrows();
    let mut opt = OptimizerState::new(params, cfg.lr);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut acc = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut xb = x.select(Axis(0), chunk);
            if let Some(aug) = &cfg.augment {
                xb = augment_batch(xb.view(), aug, rng)?;
            }
            let (loss, grads) = batch_gradients(params, xb.view(), None)?;
            if !loss.total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch: epoch + 1 });
            }
            acc += loss.l_rec * chunk.len() as f64;
            update_step(params, &grads, &mut opt)?;
        }
        let mean = acc / n as f64;
        log::debug!("pretrain epoch {}: l_rec = {mean:.6}", epoch + 1);
        history.push(mean);
    }
    if let Some(last) = history.last() {
        log::info!("pretraining finished after {} epochs, l_rec = {last:.6}", cfg.epochs);
    }
    Ok((history, opt))
}
