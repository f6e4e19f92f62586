//! Plain comma-separated feature tables.
//!
//! Each row holds the feature values in `[0, 1]` followed by an integer class
//! id. The class column may be left empty on every row for unlabelled data.
//! Lines starting with `#` are comments.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::Array2;

use super::{parse_error, Dataset, ImageShape};
use crate::error::Result;

pub fn load_table(path: &Path) -> Result<Dataset> {
    read_table(BufReader::new(File::open(path)?), path)
}

pub fn read_table(reader: impl BufRead, path: &Path) -> Result<Dataset> {
    let mut values = Vec::new();
    let mut labels: Vec<Option<usize>> = Vec::new();
    let mut width = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 {
            return Err(parse_error(path, lineno, "expected at least one feature and a class column"));
        }
        let d = fields.len() - 1;
        match width {
            None => width = Some(d),
            Some(w) if w != d => {
                return Err(parse_error(path, lineno, format!("expected {w} features, found {d}")))
            }
            Some(_) => {}
        }
        for (col, f) in fields[..d].iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|_| parse_error(path, lineno, format!("column {col}: `{f}` is not a number")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(parse_error(path, lineno, format!("column {col}: {v} is outside [0, 1]")));
            }
            values.push(v);
        }
        let label = match fields[d] {
            "" => None,
            f => Some(
                f.parse::<usize>()
                    .map_err(|_| parse_error(path, lineno, format!("class `{f}` is not an integer")))?,
            ),
        };
        if labels.first().is_some_and(|first| first.is_some() != label.is_some()) {
            return Err(parse_error(path, lineno, "class column must be filled on all rows or none"));
        }
        labels.push(label);
    }
    let d = width.unwrap_or(0);
    let n = labels.len();
    let x = Array2::from_shape_vec((n, d), values).expect("row widths checked");
    let labels: Option<Vec<usize>> = labels.into_iter().collect();
    let name = path
        .file_stem()
        .map_or_else(|| "table".into(), |s| s.to_string_lossy().into_owned());
    Dataset::new(x, labels, ImageShape::flat(d), name)
}

/// Values are written in shortest round-trip form, so reading back is exact.
pub fn write_table(w: &mut impl Write, data: &Dataset) -> Result<()> {
    for (i, row) in data.x.rows().into_iter().enumerate() {
        for v in row {
            write!(w, "{v},")?;
        }
        match &data.labels {
            Some(l) => writeln!(w, "{}", l[i])?,
            None => writeln!(w)?,
        }
    }
    Ok(())
}
