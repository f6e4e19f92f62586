//! Per-epoch metrics as JSON lines and final embeddings as CSV.

use std::io::Write;
use std::path::{Path, PathBuf};

use super::write_atomic;
use crate::error::{Error, Result};
use crate::numerics::EmbeddedMatrix;
use crate::pipeline::EpochRecord;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportPaths {
    pub metrics: PathBuf,
    pub embeddings: PathBuf,
}

impl ExportPaths {
    pub fn for_prefix(prefix: &Path) -> Self {
        let with = |suffix: &str| {
            let mut s = prefix.as_os_str().to_owned();
            s.push(suffix);
            PathBuf::from(s)
        };
        Self {
            metrics: with(".metrics.jsonl"),
            embeddings: with(".embeddings.csv"),
        }
    }
}

/// One JSON object per epoch, newline terminated.
pub fn metrics_jsonl(history: &[EpochRecord]) -> Result<String> {
    let mut out = String::new();
    for rec in history {
        out.push_str(&serde_json::to_string(rec).map_err(|e| Error::Format(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

/// Rows of `coords..., predicted[, truth]`, no header.
pub fn write_embeddings_csv(
    w: &mut impl Write,
    z: &EmbeddedMatrix,
    pred: &[usize],
    truth: Option<&[usize]>,
) -> Result<()> {
    let n = z.rows();
    if pred.len() != n || truth.is_some_and(|t| t.len() != n) {
        return Err(Error::ShapeMismatch {
            context: "labels vs embeddings",
            expected: (n, 1),
            actual: (pred.len(), truth.map_or(0, <[usize]>::len)),
        });
    }
    for i in 0..n {
        for v in z.row(i) {
            write!(w, "{v},")?;
        }
        write!(w, "{}", pred[i])?;
        if let Some(t) = truth {
            write!(w, ",{}", t[i])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Write `<prefix>.metrics.jsonl` and `<prefix>.embeddings.csv`, each
/// replacing any previous file atomically.
pub fn export_run(
    history: &[EpochRecord],
    z: &EmbeddedMatrix,
    pred: &[usize],
    truth: Option<&[usize]>,
    prefix: &Path,
) -> Result<ExportPaths> {
    if history.is_empty() {
        return Err(Error::Empty("training history"));
    }
    let paths = ExportPaths::for_prefix(prefix);
    let jsonl = metrics_jsonl(history)?;
    write_atomic(&paths.metrics, |w| Ok(w.write_all(jsonl.as_bytes())?))?;
    write_atomic(&paths.embeddings, |w| write_embeddings_csv(w, z, pred, truth))?;
    Ok(paths)
}
