//! Pacing schedule and per-cluster curriculum generation.
//!
//! The admitted proportion at epoch `t` is
//! `min(zeta_max, 2^(-(log2 zeta0 / t_grow) * t + log2 zeta0))`, an exponential
//! that starts at `zeta0`, grows slowly then quickly, and would reach 1 at
//! `t_grow` if it were not capped. Within each cluster the samples whose
//! difficulty score is at least the `ceil(zeta * |C|)`-th largest are admitted.

use crate::density::DensityProfile;
use crate::error::{Error, Result};
use crate::numerics::rank_position;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaceSchedule {
    pub zeta0: f64,
    pub zeta_max: f64,
    pub t_grow: usize,
}

impl Default for PaceSchedule {
    fn default() -> Self {
        Self {
            zeta0: 0.6,
            zeta_max: 0.95,
            t_grow: 50,
        }
    }
}

impl PaceSchedule {
    pub fn new(zeta0: f64, zeta_max: f64, t_grow: usize) -> Result<Self> {
        let s = Self {
            zeta0,
            zeta_max,
            t_grow,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.zeta0 > 0.0 && self.zeta0 < 1.0) {
            return Err(Error::param("zeta0", self.zeta0, "a value in (0, 1)"));
        }
        if !(self.zeta_max > self.zeta0 && self.zeta_max <= 1.0) {
            return Err(Error::param("zeta_max", self.zeta_max, "a value in (zeta0, 1]"));
        }
        if self.t_grow == 0 {
            return Err(Error::param("t_grow", 0.0, "at least 1 epoch"));
        }
        Ok(())
    }

    /// The exponential curve without the cap.
    pub fn uncapped(&self, t: usize) -> f64 {
        // 2^(log2(z0) * (1 - t/T)) == z0^(1 - t/T); the power form is exact at t = 0.
        self.zeta0.powf(1.0 - t as f64 / self.t_grow as f64)
    }
}

/// Proportion of each cluster admitted at epoch `t`.
pub fn pace(t: usize, sched: &PaceSchedule) -> f64 {
    sched.uncapped(t).min(sched.zeta_max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curriculum {
    pub epoch: usize,
    pub zeta_t: f64,
    pub indicator: Vec<bool>,
    /// Admitted sample indices, ascending.
    pub selected: Vec<usize>,
}

impl Curriculum {
    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }
}

/// Indicator over `members`: true iff the member's score reaches the
/// `ceil(zeta * |members|)`-th largest score. Ties at the threshold are admitted.
pub fn select_easy(members: &[usize], delta: &[f64], zeta: f64) -> Result<Vec<bool>> {
    if members.is_empty() {
        return Err(Error::Empty("cluster"));
    }
    if !(zeta > 0.0 && zeta <= 1.0) {
        return Err(Error::param("zeta", zeta, "a value in (0, 1]"));
    }
    let mut scores: Vec<f64> = members.iter().map(|&i| delta[i]).collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    let threshold = scores[rank_position(members.len(), zeta) - 1];
    Ok(members.iter().map(|&i| delta[i] >= threshold).collect())
}

/// Union over clusters of each cluster's easy samples at epoch `t`.
///
/// `clusters` must partition `0..profile.len()`; empty clusters contribute nothing.
pub fn generate_curriculum(
    clusters: &[Vec<usize>],
    profile: &DensityProfile,
    t: usize,
    sched: &PaceSchedule,
) -> Result<Curriculum> {
    let n = profile.len();
    check_partition(clusters, n)?;
    let zeta_t = pace(t, sched);
    let mut indicator = vec![false; n];
    for members in clusters.iter().filter(|c| !c.is_empty()) {
        let easy = select_easy(members, &profile.delta, zeta_t)?;
        for (&i, keep) in members.iter().zip(easy) {
            indicator[i] = keep;
        }
    }
    let selected = (0..n).filter(|&i| indicator[i]).collect();
    Ok(Curriculum {
        epoch: t,
        zeta_t,
        indicator,
        selected,
    })
}

pub(crate) fn check_partition(clusters: &[Vec<usize>], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for (c, members) in clusters.iter().enumerate() {
        for &i in members {
            if i >= n {
                return Err(Error::NotAPartition {
                    n,
                    reason: format!("cluster {c} contains out-of-range index {i}"),
                });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::NotAPartition {
                    n,
                    reason: format!("index {i} appears more than once"),
                });
            }
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::NotAPartition {
            n,
            reason: format!("index {missing} is not covered"),
        });
    }
    Ok(())
}
