//! The training driver: pretraining, then per-epoch embedding, density,
//! k-means, density-core assignment, convergence check, curriculum selection
//! and mini-batch updates.

mod config;

use ndarray::{Array2, ArrayView2, Axis};
use serde::Serialize;

use crate::assignment::{hard_labels, soft_assign_to_cores, target_distribution, ClusterState, CoreSet};
use crate::autoencoder::{
    batch_gradients, encode, init_params, network_grad_check, pretrain, update_step, ClusterTerm,
    GradCheckReport, NetworkParams, OptimizerState, PretrainConfig,
};
use crate::curriculum::generate_curriculum;
use crate::data::{augment_batch, Augmentation, Dataset};
use crate::density::difficulty_measurer;
use crate::error::{Error, Result};
use crate::kmeans::{lloyd_best_of, lloyd_from, KMeansResult};
use crate::metrics::{self, hungarian, EvalReport};
use crate::numerics::{EmbeddedMatrix, RngStream};
use crate::objective::grad_check;

pub use config::RunConfig;

/// Summary of one clustering epoch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    #[serde(rename = "zeta")]
    pub zeta_t: f64,
    #[serde(rename = "selected")]
    pub selected_count: usize,
    pub l_rec: f64,
    pub l_clu: f64,
    pub total: f64,
    pub acc: Option<f64>,
    pub nmi: Option<f64>,
    pub label_change_frac: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Hard labels of the last epoch.
    pub labels: Vec<usize>,
    pub history: Vec<EpochRecord>,
    pub params: NetworkParams,
    pub optimizer: OptimizerState,
    /// Embeddings the last labels were computed from.
    pub embeddings: EmbeddedMatrix,
    /// Whether the label-change threshold fired before `max_iter`.
    pub converged: bool,
}

/// Independent random streams of a run, all derived from the seed. Keeping
/// them apart lets a run resumed from a pretrained checkpoint draw exactly
/// what the uninterrupted run would have.
pub struct RunStreams {
    pub init: RngStream,
    pub pretrain: RngStream,
    pub kmeans: RngStream,
    pub batches: RngStream,
}

impl RunStreams {
    pub fn new(seed: u64) -> Self {
        let mut root = RngStream::new(seed);
        Self {
            init: root.fork(),
            pretrain: root.fork(),
            kmeans: root.fork(),
            batches: root.fork(),
        }
    }
}

/// Augmentation only applies to image data; flat feature vectors are left alone.
fn augmentation(enabled: bool, data: &Dataset) -> Option<Augmentation> {
    let shape = data.image_shape;
    (enabled && shape.height >= 2 && shape.width >= 2).then(|| Augmentation::new(shape))
}

/// Fresh network trained on reconstruction only. Returns the parameters, the
/// optimizer state and the per-epoch reconstruction loss.
pub fn pretrain_phase(
    cfg: &RunConfig,
    data: &Dataset,
    streams: &mut RunStreams,
) -> Result<(NetworkParams, OptimizerState, Vec<f64>)> {
    cfg.validate()?;
    let mut params = init_params(data.dim(), &cfg.widths, cfg.bottleneck, &mut streams.init)?;
    if cfg.pretrain_epochs == 0 {
        let opt = OptimizerState::new(&params, cfg.pretrain_lr);
        return Ok((params, opt, Vec::new()));
    }
    let pcfg = PretrainConfig {
        epochs: cfg.pretrain_epochs,
        batch_size: cfg.batch_size,
        lr: cfg.pretrain_lr,
        augment: augmentation(cfg.augment_pretrain, data),
    };
    let (losses, opt) = pretrain(&mut params, data.x.view(), &pcfg, &mut streams.pretrain)?;
    Ok((params, opt, losses))
}

/// Relabel `labels` so that cluster ids agree as much as possible with `reference`.
fn align_to(labels: &[usize], reference: &[usize], k: usize) -> Vec<usize> {
    let mut overlap = Array2::<f64>::zeros((k, k));
    for (&a, &b) in labels.iter().zip(reference) {
        overlap[[a, b]] += 1.0;
    }
    let peak = overlap.iter().copied().fold(0.0, f64::max);
    let (perm, _) = hungarian(&overlap.mapv(|c| peak - c)).expect("finite square cost");
    let perm: Vec<usize> = perm.into_iter().map(|p| p.expect("square matrix")).collect();
    labels.iter().map(|&l| perm[l]).collect()
}

fn change_fraction(old: &[usize], new: &[usize]) -> f64 {
    old.iter().zip(new).filter(|(a, b)| a != b).count() as f64 / new.len() as f64
}

/// Root mean over coordinates of the per-coordinate variance.
fn latent_spread(z: ArrayView2<'_, f64>) -> f64 {
    let var = z.var_axis(Axis(0), 0.0);
    var.mean().unwrap_or(0.0).sqrt()
}

/// Loss over the rows `rows` without changing parameters.
fn evaluate_loss(
    params: &NetworkParams,
    data: &Dataset,
    rows: &[usize],
    p: &Array2<f64>,
    cores: &CoreSet,
    alpha: f64,
) -> Result<(f64, f64)> {
    let xb = data.x.select(Axis(0), rows);
    let pb = p.select(Axis(0), rows);
    let term = ClusterTerm {
        p: &pb,
        cores,
        alpha,
    };
    let (loss, _) = batch_gradients(params, xb.view(), Some(term))?;
    Ok((loss.l_rec, loss.l_clu))
}

/// Clustering phase starting from `params`. `on_epoch` runs after each epoch
/// with the record and the current network; an error from it aborts the run.
pub fn train_from<F>(
    cfg: &RunConfig,
    data: &Dataset,
    mut params: NetworkParams,
    streams: &mut RunStreams,
    mut on_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&EpochRecord, &NetworkParams, &OptimizerState) -> Result<()>,
{
    cfg.validate()?;
    let n = data.n();
    if cfg.k > n {
        return Err(Error::TooManyClusters { k: cfg.k, n });
    }
    if params.input_dim() != data.dim() {
        return Err(Error::ShapeMismatch {
            context: "network input vs data",
            expected: (n, data.dim()),
            actual: (n, params.input_dim()),
        });
    }
    let sched = cfg.schedule()?;
    let km_cfg = cfg.kmeans();
    let augment = augmentation(cfg.augment_train, data);
    let truth = data.labels.as_deref();

    if let Some(target) = cfg.latent_std {
        let z = encode(&params, data.x.view())?;
        let spread = latent_spread(z.view());
        if spread > 0.0 {
            params.rescale_latent(target / spread)?;
        }
    }

    let mut opt = OptimizerState::new(&params, cfg.lr);
    let mut history = Vec::new();
    let mut prev_labels: Option<Vec<usize>> = None;
    let mut prev_centers: Option<Array2<f64>> = None;
    let mut converged = false;
    let mut last = None;

    for t in 0..cfg.max_iter {
        let epoch = t + 1;
        let z = encode(&params, data.x.view())?;
        let profile = difficulty_measurer(&z, cfg.lambda1)?;

        let km: KMeansResult = match (&prev_centers, cfg.warm_start) {
            (Some(c), true) => lloyd_from(z.view(), c.clone(), &km_cfg)?,
            _ => lloyd_best_of(z.view(), cfg.k, cfg.kmeans_restarts, &mut streams.kmeans, &km_cfg)?,
        };
        if km.inertia_history.windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-12)) {
            log::warn!("epoch {epoch}: k-means inertia increased: {:?}", km.inertia_history);
        }
        prev_centers = Some(km.centers.clone());
        let km_labels = match &prev_labels {
            Some(prev) => align_to(&km.labels, prev, cfg.k),
            None => km.labels,
        };

        let state = ClusterState::new(km_labels, cfg.k, &profile.rho, cfg.lambda2)?;
        let cores = CoreSet::gather(&z, &state)?;
        let q = soft_assign_to_cores(z.view(), &cores)?;
        let p = target_distribution(&q)?;
        let labels = hard_labels(&q);
        let change = prev_labels.as_ref().map_or(1.0, |prev| change_fraction(prev, &labels));
        let curriculum = generate_curriculum(&state.members(), &profile, t, &sched)?;
        let (acc, nmi) = match truth {
            Some(truth) => {
                let report = metrics::evaluate(truth, &labels)?;
                (Some(report.acc), Some(report.nmi))
            }
            None => (None, None),
        };

        let stop = t > 0 && change < cfg.mu;
        let (l_rec, l_clu) = if stop {
            evaluate_loss(&params, data, &curriculum.selected, &p, &cores, cfg.alpha)?
        } else {
            let mut order = curriculum.selected.clone();
            streams.batches.shuffle(&mut order);
            let mut rec_sum = 0.0;
            let mut clu_sum = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let mut xb = data.x.select(Axis(0), chunk);
                if let Some(aug) = &augment {
                    xb = augment_batch(xb.view(), aug, &mut streams.batches)?;
                }
                let pb = p.select(Axis(0), chunk);
                let term = ClusterTerm {
                    p: &pb,
                    cores: &cores,
                    alpha: cfg.alpha,
                };
                let (loss, grads) = batch_gradients(&params, xb.view(), Some(term))?;
                if !loss.total.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch });
                }
                rec_sum += loss.l_rec * chunk.len() as f64;
                clu_sum += loss.l_clu;
                update_step(&mut params, &grads, &mut opt)?;
            }
            (rec_sum / order.len() as f64, clu_sum)
        };
        if !(l_rec.is_finite() && l_clu.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch });
        }

        let record = EpochRecord {
            epoch,
            zeta_t: curriculum.zeta_t,
            selected_count: curriculum.len(),
            l_rec,
            l_clu,
            total: l_rec + cfg.alpha * l_clu,
            acc,
            nmi,
            label_change_frac: change,
        };
        log::info!(
            "epoch {epoch}: zeta {:.4} selected {} l_rec {l_rec:.6} l_clu {l_clu:.6} change {change:.4}{}",
            record.zeta_t,
            record.selected_count,
            acc.map_or(String::new(), |a| format!(" acc {a:.4}")),
        );
        on_epoch(&record, &params, &opt)?;
        history.push(record);
        prev_labels = Some(labels.clone());
        last = Some((labels, z));
        if stop {
            converged = true;
            break;
        }
    }

    let (labels, embeddings) = last.expect("max_iter >= 1");
    Ok(TrainOutcome {
        labels,
        history,
        params,
        optimizer: opt,
        embeddings,
        converged,
    })
}

/// Pretraining followed by the clustering phase, all driven by `cfg.seed`.
pub fn run_training(cfg: &RunConfig, data: &Dataset) -> Result<TrainOutcome> {
    run_training_with(cfg, data, |_, _, _| Ok(()))
}

pub fn run_training_with<F>(cfg: &RunConfig, data: &Dataset, on_epoch: F) -> Result<TrainOutcome>
where
    F: FnMut(&EpochRecord, &NetworkParams, &OptimizerState) -> Result<()>,
{
    let mut streams = RunStreams::new(cfg.seed);
    let (params, _, _) = pretrain_phase(cfg, data, &mut streams)?;
    train_from(cfg, data, params, &mut streams, on_epoch)
}

/// Outcome of [`gradient_self_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub n: usize,
    pub dim: usize,
    pub k: usize,
    /// Worst relative error of the clustering gradient with respect to the embeddings.
    pub embedding_error: f64,
    /// Finite-difference comparison over every network parameter.
    pub network: GradCheckReport,
}

impl GradientCheck {
    pub fn max_error(&self) -> f64 {
        self.embedding_error.max(self.network.max_relative_error)
    }
}

/// Random small instance (n <= 8, latent dim <= 16, K <= 3) checked against
/// central finite differences, both in embedding space and over the network.
pub fn gradient_self_check(seed: u64) -> Result<GradientCheck> {
    let mut rng = RngStream::new(seed);
    let n = 3 + rng.below(6);
    let k = 1 + rng.below(3);
    let dim = 1 + rng.below(16);
    let input = 2 + rng.below(15);
    let hidden = 3 + rng.below(8);
    let params = init_params(input, &[hidden], dim, &mut rng)?;
    let x = Array2::from_shape_fn((n, input), |_| rng.uniform());
    let z = encode(&params, x.view())?;
    let profile = difficulty_measurer(&z, crate::density::DEFAULT_LAMBDA1)?;
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let state = ClusterState::new(labels, k, &profile.rho, crate::assignment::DEFAULT_LAMBDA2)?;
    let cores = CoreSet::gather(&z, &state)?;
    let p = target_distribution(&soft_assign_to_cores(z.view(), &cores)?)?;
    let step = 1e-5;
    let embedding_error = grad_check(&z, &p, &state, step)?;
    let term = ClusterTerm {
        p: &p,
        cores: &cores,
        alpha: crate::objective::DEFAULT_ALPHA,
    };
    let network = network_grad_check(&params, x.view(), Some(term), step)?;
    Ok(GradientCheck {
        n,
        dim,
        k,
        embedding_error,
        network,
    })
}

/// ACC, NMI, mapping and confusion of `labels` against the data set's classes.
pub fn evaluate(labels: &[usize], data: &Dataset) -> Result<EvalReport> {
    metrics::evaluate(data.require_labels()?, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_blobs, ImageShape};

    fn small_config(k: usize) -> RunConfig {
        RunConfig {
            k,
            widths: vec![16],
            bottleneck: 3,
            pretrain_epochs: 20,
            max_iter: 15,
            batch_size: 32,
            pretrain_lr: 0.005,
            lr: 0.001,
            seed: 11,
            ..RunConfig::default()
        }
    }

    #[test]
    fn alignment_undoes_permutations() {
        let reference = vec![0, 0, 1, 1, 2, 2];
        let permuted = vec![2, 2, 0, 0, 1, 1];
        assert_eq!(align_to(&permuted, &reference, 3), reference);
        let noisy = vec![2, 2, 0, 1, 1, 1];
        assert_eq!(align_to(&noisy, &reference, 3), vec![0, 0, 1, 2, 2, 2]);
    }

    #[test]
    fn mu_of_one_stops_at_the_second_epoch() {
        let data = synth_blobs(60, 3, 6, 10.0, 1.0, &mut RngStream::new(2)).unwrap();
        let cfg = RunConfig {
            mu: 1.0,
            ..small_config(3)
        };
        let out = run_training(&cfg, &data).unwrap();
        assert_eq!(out.history.len(), 2);
        assert!(out.converged);
        assert_eq!(out.history[0].label_change_frac, 1.0);
    }

    #[test]
    fn runs_are_reproducible() {
        let data = synth_blobs(60, 3, 6, 10.0, 1.0, &mut RngStream::new(2)).unwrap();
        let cfg = small_config(3);
        let a = run_training(&cfg, &data).unwrap();
        let b = run_training(&cfg, &data).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn records_are_consistent() {
        let data = synth_blobs(90, 3, 6, 10.0, 1.0, &mut RngStream::new(4)).unwrap();
        let out = run_training(&small_config(3), &data).unwrap();
        for (i, r) in out.history.iter().enumerate() {
            assert_eq!(r.epoch, i + 1);
            assert!(r.selected_count <= data.n() && r.selected_count > 0);
            assert!((0.0..=1.0).contains(&r.label_change_frac));
            assert!(r.acc.is_some() && r.nmi.is_some());
            assert!((r.total - (r.l_rec + 0.1 * r.l_clu)).abs() < 1e-12);
        }
        assert_eq!(out.labels.len(), data.n());
        assert_eq!(out.embeddings.rows(), data.n());
    }

    #[test]
    fn too_many_clusters_and_wrong_network_are_rejected() {
        let data = synth_blobs(5, 2, 3, 10.0, 1.0, &mut RngStream::new(2)).unwrap();
        assert!(matches!(
            run_training(&small_config(6), &data),
            Err(Error::TooManyClusters { .. })
        ));
        let net = init_params(4, &[3], 2, &mut RngStream::new(0)).unwrap();
        let mut streams = RunStreams::new(0);
        assert!(train_from(&small_config(2), &data, net, &mut streams, |_, _, _| Ok(())).is_err());
    }

    #[test]
    fn hook_errors_abort_the_run() {
        let data = synth_blobs(30, 2, 3, 10.0, 1.0, &mut RngStream::new(2)).unwrap();
        let mut calls = 0;
        let err = run_training_with(&small_config(2), &data, |_, _, _| {
            calls += 1;
            Err(Error::Format("stop".into()))
        });
        assert!(err.is_err());
        assert_eq!(calls, 1);
    }

    #[test]
    fn gradient_self_check_passes() {
        for seed in 0..5 {
            let r = gradient_self_check(seed).unwrap();
            assert!(r.max_error() < 1e-4, "{r:?}");
        }
    }

    #[test]
    fn evaluation_needs_labels() {
        let x = Array2::from_elem((4, 2), 0.5);
        let unlabelled = Dataset::new(x, None, ImageShape::flat(2), "u").unwrap();
        assert!(matches!(evaluate(&[0, 0, 1, 1], &unlabelled), Err(Error::MissingLabels(_))));
        let data = synth_blobs(12, 3, 2, 5.0, 1.0, &mut RngStream::new(1)).unwrap();
        let truth = data.labels.clone().unwrap();
        let r = evaluate(&truth, &data).unwrap();
        assert_eq!((r.acc, r.nmi), (1.0, 1.0));
        let r = evaluate(&[0; 12], &data).unwrap();
        assert!((r.acc - 1.0 / 3.0).abs() < 1e-12);
    }
}
