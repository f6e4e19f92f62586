//! Data sets: loaders, synthetic blobs, augmentation and run export.

mod augment;
mod export;
mod idx;
mod optdigits;
mod table;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::numerics::{check_finite, RngStream};

pub use augment::{augment_batch, rotate_shift, Augmentation};
pub use export::{export_run, metrics_jsonl, write_embeddings_csv, ExportPaths};
pub use idx::{load_idx, read_idx_images, read_idx_labels, write_idx_images, write_idx_labels};
pub use optdigits::{load_optdigits, read_optdigits, write_optdigits};
pub use table::{load_table, read_table, write_table};

/// Channel-major image layout of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ImageShape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    /// Feature vectors without spatial structure.
    pub fn flat(dim: usize) -> Self {
        Self::new(1, 1, dim)
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `n x M` samples with values in `[0, 1]`, optional class ids and the image
/// layout of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub labels: Option<Vec<usize>>,
    pub image_shape: ImageShape,
    pub name: String,
}

impl Dataset {
    pub fn new(
        x: Array2<f64>,
        labels: Option<Vec<usize>>,
        image_shape: ImageShape,
        name: impl Into<String>,
    ) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::Empty("data set"));
        }
        if image_shape.len() != x.ncols() {
            return Err(Error::ShapeMismatch {
                context: "image shape vs feature count",
                expected: (x.nrows(), image_shape.len()),
                actual: x.dim(),
            });
        }
        check_finite(x.view())?;
        if let Some(((row, col), &v)) = x.indexed_iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Format(format!(
                "value {v} at row {row}, column {col} is outside [0, 1]"
            )));
        }
        if let Some(l) = &labels {
            if l.len() != x.nrows() {
                return Err(Error::ShapeMismatch {
                    context: "labels vs samples",
                    expected: (x.nrows(), 1),
                    actual: (l.len(), 1),
                });
            }
        }
        Ok(Self {
            x,
            labels,
            image_shape,
            name: name.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Number of distinct class ids, if labelled.
    pub fn class_count(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| {
            let mut ids = l.clone();
            ids.sort_unstable();
            ids.dedup();
            ids.len()
        })
    }

    pub fn require_labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::MissingLabels(self.name.clone()))
    }
}

/// `K` isotropic Gaussian clusters whose centers are at least `separation`
/// apart, with labels `i % K`, rescaled jointly into `[0, 1]`.
pub fn synth_blobs(
    n: usize,
    k: usize,
    dim: usize,
    separation: f64,
    sigma: f64,
    rng: &mut RngStream,
) -> Result<Dataset> {
    if k == 0 {
        return Err(Error::param("k", 0.0, "at least 1"));
    }
    if n < k {
        return Err(Error::TooManyClusters { k, n });
    }
    if dim == 0 {
        return Err(Error::param("dim", 0.0, "at least 1"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::param("sigma", sigma, "a positive finite value"));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::param("separation", separation, "a non-negative finite value"));
    }

    // Rejection sampling in a box that widens whenever it gets crowded.
    let mut side = separation.max(sigma) * 2.0 * (k as f64).powf(1.0 / dim as f64);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut misses = 0;
    while centers.len() < k {
        let c: Vec<f64> = (0..dim).map(|_| rng.uniform_in(0.0, side)).collect();
        let ok = centers.iter().all(|o| {
            let d2: f64 = o.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            d2.sqrt() >= separation
        });
        if ok {
            centers.push(c);
        } else {
            misses += 1;
            if misses % 100 == 0 {
                side *= 1.5;
            }
        }
    }

    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let mut x = Array2::from_shape_fn((n, dim), |(i, j)| centers[labels[i]][j]);
    x.mapv_inplace(|v| v + sigma * rng.normal());
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span > 0.0 {
        x.mapv_inplace(|v| ((v - lo) / span).clamp(0.0, 1.0));
    } else {
        x.fill(0.5);
    }
    Dataset::new(x, Some(labels), ImageShape::flat(dim), format!("blobs-{n}x{dim}-k{k}"))
}

/// Hidden temporary path next to `path`, for write-then-rename.
pub(crate) fn temp_sibling(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    path.with_file_name(format!(".{name}.{}.tmp", std::process::id()))
}

/// Write through a temporary sibling and rename over `path`.
pub(crate) fn write_atomic(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let tmp = temp_sibling(path);
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        body(&mut w)?;
        w.flush()?;
        Ok(())
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(e);
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Parse error helper carrying the 1-based line number.
pub(crate) fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}
