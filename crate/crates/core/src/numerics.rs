//! Dense primitives shared across the crate and the deterministic RNG.

use std::cmp::Ordering;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// `n x d` latent representations, row-major, every entry finite.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedMatrix(Array2<f64>);

impl EmbeddedMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::Empty("embedding rows"));
        }
        if data.ncols() == 0 {
            return Err(Error::Empty("embedding columns"));
        }
        check_finite(data.view())?;
        Ok(Self(data))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::ShapeMismatch {
                context: "embedding rows",
                expected: (n, d),
                actual: (bad, rows[bad].len()),
            });
        }
        let flat = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((n, d), flat).map_err(|e| Error::Format(e.to_string()))?;
        Self::new(data)
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    /// Copy of the rows at `indices`, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        Self::new(self.0.select(Axis(0), indices))
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

impl AsRef<Array2<f64>> for EmbeddedMatrix {
    fn as_ref(&self) -> &Array2<f64> {
        &self.0
    }
}

/// Rejects NaN/Inf, naming the first offending cell.
pub fn check_finite(data: ArrayView2<'_, f64>) -> Result<()> {
    for ((row, col), v) in data.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { row, col });
        }
    }
    Ok(())
}

/// Seeded random stream.
///
/// The generator is ChaCha with 8 rounds (`rand_chacha::ChaCha8Rng`), keyed by
/// `seed_from_u64(seed)`. Its output is specified bit-for-bit independent of
/// platform, so a seed fully determines every draw made through this type.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int_in(&mut self, lo: i64, hi: i64) -> i64 {
        self.inner.random_range(lo..=hi)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    /// Independent child stream keyed by the next draw of this one.
    pub fn fork(&mut self) -> RngStream {
        RngStream::new(self.inner.next_u64())
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Squared Euclidean distance between two rows.
#[inline]
pub fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Symmetric `n x n` matrix of squared Euclidean distances with a zero diagonal.
///
/// Each pair is evaluated once and mirrored, so the result is exactly
/// symmetric and bitwise reproducible.
pub fn pairwise_sq_dists(z: &EmbeddedMatrix) -> Array2<f64> {
    let n = z.rows();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        let zi = z.row(i);
        for j in (i + 1)..n {
            let d = sq_dist(zi, z.row(j));
            out[[i, j]] = d;
            out[[j, i]] = d;
        }
    }
    out
}

/// 1-based position `ceil(fraction * len)`, clamped to `[1, len]`.
///
/// Products such as `0.07 * 100` land a few ulps above an integer; those are
/// snapped to the integer before taking the ceiling.
pub fn rank_position(len: usize, fraction: f64) -> usize {
    let x = fraction * len as f64;
    let nearest = x.round();
    let pos = if (x - nearest).abs() <= 1e-9 * x.abs().max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    (pos.max(1.0) as usize).min(len.max(1))
}

fn check_fraction(fraction: f64) -> Result<()> {
    if fraction > 0.0 && fraction <= 1.0 {
        Ok(())
    } else {
        Err(Error::param("fraction", fraction, "a value in (0, 1]"))
    }
}

/// Value at 1-based position `ceil(fraction * len)` of `values` ordered by `cmp`.
pub fn rank_select_by<F>(values: &[f64], fraction: f64, mut cmp: F) -> Result<f64>
where
    F: FnMut(&f64, &f64) -> Ordering,
{
    if values.is_empty() {
        return Err(Error::Empty("values"));
    }
    check_fraction(fraction)?;
    let pos = rank_position(values.len(), fraction);
    let mut buf = values.to_vec();
    let (_, v, _) = buf.select_nth_unstable_by(pos - 1, &mut cmp);
    Ok(*v)
}

/// Ascending rank selection; see [`rank_select_by`].
pub fn rank_select(values: &[f64], fraction: f64) -> Result<f64> {
    rank_select_by(values, fraction, f64::total_cmp)
}

/// `(v - min) / (max - min)`; a constant input maps to all ones.
pub fn max_min_normalize(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Empty("values"));
    }
    if let Some(col) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: 0, col });
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi == lo {
        return Ok(vec![1.0; values.len()]);
    }
    let span = hi - lo;
    Ok(values.iter().map(|&v| (v - lo) / span).collect())
}

/// Group sample indices by label; cluster `c` lists its members in ascending order.
pub fn group_by_label(labels: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        groups[l].push(i);
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::RngCore;

    fn emb(rows: &[&[f64]]) -> EmbeddedMatrix {
        EmbeddedMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn pairwise_examples() {
        let d = pairwise_sq_dists(&emb(&[&[0.0], &[0.0]]));
        assert_eq!(d, Array2::<f64>::zeros((2, 2)));

        let d = pairwise_sq_dists(&emb(&[&[0.0, 0.0], &[3.0, 4.0]]));
        assert_eq!(d[[0, 1]], 25.0);
        assert_eq!(d[[1, 0]], 25.0);

        let d = pairwise_sq_dists(&emb(&[&[0.0], &[1.0], &[3.0]]));
        assert_eq!((d[[0, 1]], d[[0, 2]], d[[1, 2]]), (1.0, 9.0, 4.0));
    }

    #[test]
    fn non_finite_rows_are_rejected() {
        let err = EmbeddedMatrix::from_rows(&[vec![0.0, 1.0], vec![f64::NAN, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 1, col: 0 }), "{err}");
        let err = EmbeddedMatrix::from_rows(&[vec![f64::INFINITY]]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 0, .. }));
        assert!(EmbeddedMatrix::from_rows(&[]).is_err());
        assert!(EmbeddedMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn rank_select_examples() {
        assert_eq!(rank_select(&[5.0], 0.5).unwrap(), 5.0);
        assert_eq!(rank_select(&[1.0, 2.0, 3.0, 4.0], 0.5).unwrap(), 2.0);
        let v = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0];
        assert_eq!(rank_select(&v, 0.5).unwrap(), 1.0);
        assert!(rank_select(&[], 0.5).is_err());
        assert!(rank_select(&[1.0], 0.0).is_err());
        assert!(rank_select(&[1.0], 1.5).is_err());
    }

    #[test]
    fn rank_position_absorbs_representation_error() {
        assert_eq!(rank_position(100, 0.07), 7);
        assert_eq!(rank_position(100, 0.05), 5);
        assert_eq!(rank_position(3, 0.05), 1);
        assert_eq!(rank_position(9, 0.5), 5);
        assert_eq!(rank_position(4, 1.0), 4);
    }

    #[test]
    fn descending_selection_via_comparator() {
        let v = [0.9, 0.7, 0.4, 0.1];
        let t = rank_select_by(&v, 0.5, |a, b| b.total_cmp(a)).unwrap();
        assert_eq!(t, 0.7);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(max_min_normalize(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(max_min_normalize(&[7.0, 7.0, 7.0]).unwrap(), vec![1.0; 3]);
        assert_eq!(max_min_normalize(&[2.0, 10.0]).unwrap(), vec![0.0, 1.0]);
        assert!(max_min_normalize(&[]).is_err());
        assert!(max_min_normalize(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn rng_is_reproducible() {
        let mut a = RngStream::new(42);
        let mut b = RngStream::new(42);
        let xs: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);
        let mut c = RngStream::new(43);
        assert_ne!(xs[0], c.next_u64());
    }

    fn matrix_strategy() -> impl Strategy<Value = Array2<f64>> {
        (1usize..12, 1usize..5).prop_flat_map(|(n, d)| {
            proptest::collection::vec(-50.0f64..50.0, n * d)
                .prop_map(move |v| Array2::from_shape_vec((n, d), v).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn pairwise_symmetric_zero_diagonal(m in matrix_strategy()) {
            let z = EmbeddedMatrix::new(m).unwrap();
            let d = pairwise_sq_dists(&z);
            for i in 0..z.rows() {
                prop_assert_eq!(d[[i, i]], 0.0);
                for j in 0..z.rows() {
                    prop_assert_eq!(d[[i, j]], d[[j, i]]);
                    prop_assert!(d[[i, j]] >= 0.0);
                }
            }
        }

        #[test]
        fn rank_select_extremes(v in proptest::collection::vec(-1e3f64..1e3, 1..40)) {
            let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert_eq!(rank_select(&v, 1.0).unwrap(), max);
            prop_assert_eq!(rank_select(&v, 1e-12).unwrap(), min);
        }

        #[test]
        fn normalize_in_unit_interval(v in proptest::collection::vec(-1e3f64..1e3, 2..40)) {
            let out = max_min_normalize(&v).unwrap();
            prop_assert!(out.iter().all(|x| (0.0..=1.0).contains(x)));
            let constant = v.iter().all(|x| *x == v[0]);
            if !constant {
                prop_assert!(out.contains(&0.0));
                prop_assert!(out.contains(&1.0));
            }
        }
    }
}
