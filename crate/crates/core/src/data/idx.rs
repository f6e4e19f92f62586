//! IDX binary files as used for MNIST/USPS-style image sets.
//!
//! Images: big-endian magic `0x00000803`, then u32 count, rows, cols and
//! `count * rows * cols` unsigned bytes. Labels: magic `0x00000801`, u32 count,
//! `count` bytes.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{Dataset, ImageShape};
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, what)?;
    Ok(u32::from_be_bytes(buf))
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("{what} is truncated")),
        _ => Error::Io(e),
    })
}

fn check_magic(found: u32, expected: u32, what: &'static str) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::BadMagic {
            what,
            expected,
            found,
        })
    }
}

/// Pixel matrix scaled by 1/255 and the `(rows, cols)` of each image.
pub fn read_idx_images(r: &mut impl Read) -> Result<(Array2<f64>, usize, usize)> {
    check_magic(read_u32(r, "image file")?, IMAGES_MAGIC, "IDX image file")?;
    let n = read_u32(r, "image file")? as usize;
    let rows = read_u32(r, "image file")? as usize;
    let cols = read_u32(r, "image file")? as usize;
    let m = rows * cols;
    let mut bytes = vec![0u8; n * m];
    read_exact(r, &mut bytes, "image file")?;
    let x = Array2::from_shape_vec((n, m), bytes.into_iter().map(|b| b as f64 / 255.0).collect())
        .expect("length matches header");
    Ok((x, rows, cols))
}

pub fn read_idx_labels(r: &mut impl Read) -> Result<Vec<usize>> {
    check_magic(read_u32(r, "label file")?, LABELS_MAGIC, "IDX label file")?;
    let n = read_u32(r, "label file")? as usize;
    let mut bytes = vec![0u8; n];
    read_exact(r, &mut bytes, "label file")?;
    Ok(bytes.into_iter().map(usize::from).collect())
}

pub fn load_idx(images: &Path, labels: Option<&Path>) -> Result<Dataset> {
    let (x, rows, cols) = read_idx_images(&mut BufReader::new(File::open(images)?))?;
    let labels = match labels {
        Some(p) => {
            let l = read_idx_labels(&mut BufReader::new(File::open(p)?))?;
            if l.len() != x.nrows() {
                return Err(Error::Format(format!(
                    "{} images but {} labels",
                    x.nrows(),
                    l.len()
                )));
            }
            Some(l)
        }
        None => None,
    };
    let name = images
        .file_stem()
        .map_or_else(|| "idx".into(), |s| s.to_string_lossy().into_owned());
    Dataset::new(x, labels, ImageShape::new(1, rows, cols), name)
}

/// Values are mapped back to bytes by rounding `v * 255`.
pub fn write_idx_images(w: &mut impl Write, data: &Dataset) -> Result<()> {
    let shape = data.image_shape;
    if shape.channels != 1 {
        return Err(Error::Format("IDX images are single-channel".into()));
    }
    w.write_all(&IMAGES_MAGIC.to_be_bytes())?;
    for v in [data.n(), shape.height, shape.width] {
        w.write_all(&(v as u32).to_be_bytes())?;
    }
    let bytes: Vec<u8> = data.x.iter().map(|v| (v * 255.0).round() as u8).collect();
    w.write_all(&bytes)?;
    Ok(())
}

pub fn write_idx_labels(w: &mut impl Write, labels: &[usize]) -> Result<()> {
    w.write_all(&LABELS_MAGIC.to_be_bytes())?;
    w.write_all(&(labels.len() as u32).to_be_bytes())?;
    for &l in labels {
        let b = u8::try_from(l).map_err(|_| Error::Format(format!("label {l} does not fit in a byte")))?;
        w.write_all(&[b])?;
    }
    Ok(())
}
