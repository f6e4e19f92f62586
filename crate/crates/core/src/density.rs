//! Difficulty measurer: cutoff radius, Gaussian-kernel local density and
//! max-min normalised difficulty scores.
//!
//! A sample's density is `rho_i = sum_j exp(-|z_i - z_j|^2 / dc^2)` over all
//! `n` samples, the self term included, so `rho_i` lies in `[1, n]`. Higher
//! normalised density means an easier sample that enters training earlier.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::numerics::{max_min_normalize, pairwise_sq_dists, rank_position, EmbeddedMatrix};

/// Default cutoff percentile.
pub const DEFAULT_LAMBDA1: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    /// Local densities, each `>= 1`.
    pub rho: Vec<f64>,
    /// Kernel bandwidth, in embedding distance units.
    pub dc: f64,
    /// Difficulty scores in `[0, 1]`; higher is easier.
    pub delta: Vec<f64>,
    pub lambda1: f64,
}

impl DensityProfile {
    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }
}

fn check_lambda(lambda1: f64) -> Result<()> {
    if lambda1 > 0.0 && lambda1 <= 1.0 {
        Ok(())
    } else {
        Err(Error::param("lambda1", lambda1, "a value in (0, 1]"))
    }
}

/// Cutoff radius: the Euclidean distance ranked `ceil(lambda1 * n^2)` among
/// all `n^2` ordered pairs (self pairs included).
///
/// A zero pick falls back to the smallest positive distance, and an all-zero
/// pool yields 1.
pub fn select_dc(z: &EmbeddedMatrix, lambda1: f64) -> Result<f64> {
    select_dc_from_sq(&pairwise_sq_dists(z), lambda1)
}

/// [`select_dc`] over a precomputed squared-distance matrix.
pub fn select_dc_from_sq(sq: &Array2<f64>, lambda1: f64) -> Result<f64> {
    let n = sq.nrows();
    if n < 2 {
        return Err(Error::param("n", n as f64, "at least 2 samples"));
    }
    check_lambda(lambda1)?;

    // The n^2 pool is n self zeros followed by every unordered pair twice, so
    // rank r > n maps to pair rank ceil((r - n) / 2) among the unordered pairs.
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push(sq[[i, j]].sqrt());
        }
    }
    let r = rank_position(n * n, lambda1);
    let picked = if r <= n {
        0.0
    } else {
        let m = (r - n).div_ceil(2);
        let (_, v, _) = pairs.select_nth_unstable_by(m - 1, f64::total_cmp);
        *v
    };
    if picked > 0.0 {
        return Ok(picked);
    }
    let smallest_positive = pairs
        .iter()
        .copied()
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    Ok(if smallest_positive.is_finite() {
        smallest_positive
    } else {
        1.0
    })
}

/// Gaussian-kernel local density of every sample.
pub fn local_density(z: &EmbeddedMatrix, dc: f64) -> Result<Vec<f64>> {
    local_density_from_sq(&pairwise_sq_dists(z), dc)
}

pub fn local_density_from_sq(sq: &Array2<f64>, dc: f64) -> Result<Vec<f64>> {
    if !(dc > 0.0 && dc.is_finite()) {
        return Err(Error::param("dc", dc, "a positive finite radius"));
    }
    let inv = 1.0 / (dc * dc);
    Ok(sq
        .rows()
        .into_iter()
        .map(|row| row.iter().map(|d| (-d * inv).exp()).sum())
        .collect())
}

/// Cutoff, densities and difficulty scores in one pass over the distances.
pub fn difficulty_measurer(z: &EmbeddedMatrix, lambda1: f64) -> Result<DensityProfile> {
    let sq = pairwise_sq_dists(z);
    let dc = select_dc_from_sq(&sq, lambda1)?;
    let rho = local_density_from_sq(&sq, dc)?;
    let delta = max_min_normalize(&rho)?;
    Ok(DensityProfile {
        rho,
        dc,
        delta,
        lambda1,
    })
}
