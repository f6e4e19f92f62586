//! Hungarian matching, clustering accuracy and normalized mutual information.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Minimum-cost assignment of rows to columns, O(N^3) with N = max(rows, cols).
///
/// Rectangular inputs are padded with zero-cost dummy rows/columns. Returns the
/// column matched to each row (`None` when the row was matched to padding) and
/// the total cost of the real matches.
pub fn hungarian(cost: &Array2<f64>) -> Result<(Vec<Option<usize>>, f64)> {
    let (rows, cols) = cost.dim();
    if rows == 0 || cols == 0 {
        return Err(Error::Empty("cost matrix"));
    }
    if let Some(((row, col), _)) = cost.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { row, col });
    }
    let n = rows.max(cols);
    let c = |i: usize, j: usize| if i < rows && j < cols { cost[[i, j]] } else { 0.0 };

    // Potentials and matching are 1-based; index 0 is the virtual start column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![None; rows];
    let mut total = 0.0;
    for j in 1..=n {
        let i = p[j] - 1;
        if i < rows && j - 1 < cols {
            assignment[i] = Some(j - 1);
            total += cost[[i, j - 1]];
        }
    }
    Ok((assignment, total))
}

fn check_pair(truth: &[usize], pred: &[usize]) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(Error::ShapeMismatch {
            context: "label vectors",
            expected: (truth.len(), 1),
            actual: (pred.len(), 1),
        });
    }
    if truth.is_empty() {
        return Err(Error::Empty("labels"));
    }
    Ok(())
}

/// Counts with predicted clusters as rows and true classes as columns.
pub fn confusion_matrix(truth: &[usize], pred: &[usize]) -> Result<Array2<usize>> {
    check_pair(truth, pred)?;
    let kp = pred.iter().max().map_or(0, |m| m + 1);
    let kt = truth.iter().max().map_or(0, |m| m + 1);
    let mut m = Array2::zeros((kp, kt));
    for (&t, &c) in truth.iter().zip(pred) {
        m[[c, t]] += 1;
    }
    Ok(m)
}

/// Cluster-to-class mapping maximizing matched samples, and the matched count.
fn best_mapping(confusion: &Array2<usize>) -> Result<(Vec<Option<usize>>, usize)> {
    let peak = confusion.iter().copied().max().unwrap_or(0) as f64;
    let cost = confusion.mapv(|c| peak - c as f64);
    let (mapping, _) = hungarian(&cost)?;
    let matched = mapping
        .iter()
        .enumerate()
        .filter_map(|(c, t)| t.map(|t| confusion[[c, t]]))
        .sum();
    Ok((mapping, matched))
}

/// Fraction of samples whose cluster maps to their class under the best
/// one-to-one mapping.
pub fn clustering_accuracy(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let confusion = confusion_matrix(truth, pred)?;
    let (_, matched) = best_mapping(&confusion)?;
    Ok(matched as f64 / truth.len() as f64)
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalized by the larger of the two entropies.
///
/// Two single-cluster partitions score 1; otherwise a zero-entropy side gives 0.
pub fn nmi(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let confusion = confusion_matrix(truth, pred)?;
    let n = truth.len() as f64;
    let row_sums: Vec<usize> = confusion.rows().into_iter().map(|r| r.sum()).collect();
    let col_sums: Vec<usize> = confusion.columns().into_iter().map(|c| c.sum()).collect();
    let h_pred = entropy(row_sums.iter().copied(), n);
    let h_true = entropy(col_sums.iter().copied(), n);
    let denom = h_pred.max(h_true);
    if denom == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for ((c, t), &count) in confusion.indexed_iter() {
        if count == 0 {
            continue;
        }
        let joint = count as f64 / n;
        mi += joint * (joint * n * n / (row_sums[c] as f64 * col_sums[t] as f64)).ln();
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub acc: f64,
    pub nmi: f64,
    /// `mapping[c]` is the class matched to predicted cluster `c`, if any.
    pub mapping: Vec<Option<usize>>,
    /// Predicted clusters as rows, true classes as columns.
    pub confusion: Array2<usize>,
}

pub fn evaluate(truth: &[usize], pred: &[usize]) -> Result<EvalReport> {
    let confusion = confusion_matrix(truth, pred)?;
    let (mapping, matched) = best_mapping(&confusion)?;
    Ok(EvalReport {
        acc: matched as f64 / truth.len() as f64,
        nmi: nmi(truth, pred)?,
        mapping,
        confusion,
    })
}
