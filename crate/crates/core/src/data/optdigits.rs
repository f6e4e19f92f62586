//! UCI optdigits text format: 64 integer pixels in `0..=16` and a class id per line.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::Array2;

use super::{parse_error, Dataset, ImageShape};
use crate::error::{Error, Result};

const PIXELS: usize = 64;
const MAX_PIXEL: u32 = 16;

pub fn load_optdigits(path: &Path) -> Result<Dataset> {
    let file = File::open(path)?;
    read_optdigits(BufReader::new(file), path)
}

/// Parse from any reader; `path` is only used in error messages. Blank lines
/// are skipped.
pub fn read_optdigits(reader: impl BufRead, path: &Path) -> Result<Dataset> {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != PIXELS + 1 {
            return Err(parse_error(
                path,
                lineno,
                format!("expected {} fields, found {}", PIXELS + 1, fields.len()),
            ));
        }
        for (col, f) in fields[..PIXELS].iter().enumerate() {
            let v: u32 = f
                .parse()
                .map_err(|_| parse_error(path, lineno, format!("pixel {col}: `{f}` is not an integer")))?;
            if v > MAX_PIXEL {
                return Err(parse_error(path, lineno, format!("pixel {col}: {v} exceeds {MAX_PIXEL}")));
            }
            pixels.push(v as f64 / MAX_PIXEL as f64);
        }
        let label: usize = fields[PIXELS]
            .parse()
            .map_err(|_| parse_error(path, lineno, format!("class `{}` is not an integer", fields[PIXELS])))?;
        if label > 9 {
            return Err(parse_error(path, lineno, format!("class {label} is not a digit")));
        }
        labels.push(label);
    }
    let n = labels.len();
    let x = Array2::from_shape_vec((n, PIXELS), pixels).expect("row length checked");
    let name = path
        .file_stem()
        .map_or_else(|| "optdigits".into(), |s| s.to_string_lossy().into_owned());
    Dataset::new(x, Some(labels), ImageShape::new(1, 8, 8), name)
}

/// Inverse of [`read_optdigits`]; every value must be a multiple of 1/16.
pub fn write_optdigits(w: &mut impl Write, data: &Dataset) -> Result<()> {
    if data.dim() != PIXELS {
        return Err(Error::ShapeMismatch {
            context: "optdigits rows",
            expected: (data.n(), PIXELS),
            actual: data.x.dim(),
        });
    }
    let labels = data.require_labels()?;
    for (row, &label) in data.x.rows().into_iter().zip(labels) {
        for v in row {
            let level = v * MAX_PIXEL as f64;
            if (level - level.round()).abs() > 1e-9 {
                return Err(Error::Format(format!("value {v} is not a multiple of 1/16")));
            }
            write!(w, "{},", level.round() as u32)?;
        }
        writeln!(w, "{label}")?;
    }
    Ok(())
}
