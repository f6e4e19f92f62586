use serde::Deserialize;

use crate::assignment::DEFAULT_LAMBDA2;
use crate::autoencoder::{DEFAULT_BOTTLENECK, DEFAULT_WIDTHS};
use crate::curriculum::PaceSchedule;
use crate::density::DEFAULT_LAMBDA1;
use crate::error::{Error, Result};
use crate::kmeans::{KMeansConfig, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::objective::DEFAULT_ALPHA;

/// Every knob of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub k: usize,
    pub alpha: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub zeta0: f64,
    pub zeta_max: f64,
    pub t_grow: usize,
    /// Stop once fewer than this fraction of hard labels change between epochs.
    pub mu: f64,
    pub max_iter: usize,
    pub pretrain_epochs: usize,
    pub batch_size: usize,
    /// Adam step size of reconstruction-only pretraining.
    pub pretrain_lr: f64,
    /// Adam step size of the clustering phase.
    pub lr: f64,
    pub seed: u64,
    pub widths: Vec<usize>,
    pub bottleneck: usize,
    /// Rescale the embedding to this per-coordinate standard deviation before
    /// the clustering phase. `None` keeps the scale pretraining produced.
    pub latent_std: Option<f64>,
    pub augment_pretrain: bool,
    pub augment_train: bool,
    /// Start each epoch's k-means from the previous centers instead of k-means++.
    pub warm_start: bool,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    /// k-means++ restarts of every cold start; the lowest inertia is kept.
    pub kmeans_restarts: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sched = PaceSchedule::default();
        Self {
            k: 10,
            alpha: DEFAULT_ALPHA,
            lambda1: DEFAULT_LAMBDA1,
            lambda2: DEFAULT_LAMBDA2,
            zeta0: sched.zeta0,
            zeta_max: sched.zeta_max,
            t_grow: sched.t_grow,
            mu: 0.001,
            max_iter: 200,
            pretrain_epochs: 100,
            batch_size: 256,
            pretrain_lr: 1e-3,
            lr: 1e-4,
            seed: 0,
            widths: DEFAULT_WIDTHS.to_vec(),
            bottleneck: DEFAULT_BOTTLENECK,
            latent_std: Some(10.0),
            augment_pretrain: true,
            augment_train: false,
            warm_start: true,
            kmeans_max_iter: DEFAULT_MAX_ITER,
            kmeans_tol: DEFAULT_TOL,
            kmeans_restarts: 10,
        }
    }
}

fn proportion(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::param(name, v, "a value in (0, 1]"))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::param("k", 0.0, "at least 1"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha", self.alpha, "a non-negative finite weight"));
        }
        proportion("lambda1", self.lambda1)?;
        proportion("lambda2", self.lambda2)?;
        proportion("mu", self.mu)?;
        self.schedule()?;
        if self.max_iter == 0 {
            return Err(Error::param("max_iter", 0.0, "at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", 0.0, "at least 1"));
        }
        for (name, lr) in [("pretrain_lr", self.pretrain_lr), ("lr", self.lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::param(name, lr, "a positive finite rate"));
            }
        }
        if self.widths.contains(&0) {
            return Err(Error::param("widths", 0.0, "positive layer widths"));
        }
        if self.bottleneck == 0 {
            return Err(Error::param("bottleneck", 0.0, "at least 1"));
        }
        if let Some(v) = self.latent_std {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param("latent_std", v, "a positive finite deviation"));
            }
        }
        if self.kmeans_max_iter == 0 {
            return Err(Error::param("kmeans.max_iter", 0.0, "at least 1"));
        }
        if self.kmeans_restarts == 0 {
            return Err(Error::param("kmeans.restarts", 0.0, "at least 1"));
        }
        if !(self.kmeans_tol >= 0.0) {
            return Err(Error::param("kmeans.tol", self.kmeans_tol, "a non-negative tolerance"));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<PaceSchedule> {
        PaceSchedule::new(self.zeta0, self.zeta_max, self.t_grow)
    }

    pub fn kmeans(&self) -> KMeansConfig {
        KMeansConfig {
            max_iter: self.kmeans_max_iter,
            tol: self.kmeans_tol,
        }
    }

    /// Overlay the settings of a config file on `self`.
    ///
    /// The file is TOML restricted to `key = value` lines under the sections
    /// `[run]`, `[curriculum]`, `[assignment]`, `[model]`, `[optim]`,
    /// `[augment]` and `[kmeans]`. Unknown sections or keys are errors.
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))?;
        fn set<T>(dst: &mut T, src: Option<T>) {
            if let Some(v) = src {
                *dst = v;
            }
        }
        if let Some(s) = file.run {
            set(&mut self.k, s.k);
            set(&mut self.seed, s.seed);
            set(&mut self.mu, s.mu);
            set(&mut self.max_iter, s.max_iter);
        }
        if let Some(s) = file.curriculum {
            set(&mut self.lambda1, s.lambda1);
            set(&mut self.zeta0, s.zeta0);
            set(&mut self.zeta_max, s.zeta_max);
            set(&mut self.t_grow, s.t_grow);
        }
        if let Some(s) = file.assignment {
            set(&mut self.lambda2, s.lambda2);
            set(&mut self.alpha, s.alpha);
        }
        if let Some(s) = file.model {
            set(&mut self.widths, s.widths);
            set(&mut self.bottleneck, s.bottleneck);
            if s.latent_std.is_some() {
                self.latent_std = s.latent_std;
            }
        }
        if let Some(s) = file.optim {
            set(&mut self.pretrain_epochs, s.pretrain_epochs);
            set(&mut self.batch_size, s.batch_size);
            set(&mut self.pretrain_lr, s.pretrain_lr);
            set(&mut self.lr, s.lr);
        }
        if let Some(s) = file.augment {
            set(&mut self.augment_pretrain, s.pretrain);
            set(&mut self.augment_train, s.train);
        }
        if let Some(s) = file.kmeans {
            set(&mut self.kmeans_max_iter, s.max_iter);
            set(&mut self.kmeans_tol, s.tol);
            set(&mut self.warm_start, s.warm_start);
            set(&mut self.kmeans_restarts, s.restarts);
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    run: Option<RunSection>,
    curriculum: Option<CurriculumSection>,
    assignment: Option<AssignmentSection>,
    model: Option<ModelSection>,
    optim: Option<OptimSection>,
    augment: Option<AugmentSection>,
    kmeans: Option<KMeansSection>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    k: Option<usize>,
    seed: Option<u64>,
    mu: Option<f64>,
    max_iter: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CurriculumSection {
    lambda1: Option<f64>,
    zeta0: Option<f64>,
    zeta_max: Option<f64>,
    t_grow: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AssignmentSection {
    lambda2: Option<f64>,
    alpha: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    widths: Option<Vec<usize>>,
    bottleneck: Option<usize>,
    latent_std: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimSection {
    pretrain_epochs: Option<usize>,
    batch_size: Option<usize>,
    pretrain_lr: Option<f64>,
    lr: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AugmentSection {
    pretrain: Option<bool>,
    train: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KMeansSection {
    max_iter: Option<usize>,
    tol: Option<f64>,
    warm_start: Option<bool>,
    restarts: Option<usize>,
}
