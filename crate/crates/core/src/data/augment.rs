//! Random small rotations and translations of image batches.

use ndarray::{Array2, ArrayView2};

use super::ImageShape;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Augmentation {
    pub shape: ImageShape,
    pub max_rot_deg: f64,
    /// Largest shift as a fraction of the image side. Shifts are continuous;
    /// nearest-neighbour sampling decides which pixels actually move.
    pub max_shift_frac: f64,
}

impl Augmentation {
    pub fn new(shape: ImageShape) -> Self {
        Self {
            shape,
            max_rot_deg: 10.0,
            max_shift_frac: 0.1,
        }
    }

    fn validate(&self, cols: usize) -> Result<()> {
        let s = self.shape;
        if s.height < 2 || s.width < 2 {
            return Err(Error::Format(format!(
                "augmentation needs image data, got {}x{}x{}",
                s.channels, s.height, s.width
            )));
        }
        if s.len() != cols {
            return Err(Error::ShapeMismatch {
                context: "augmentation image shape",
                expected: (1, s.len()),
                actual: (1, cols),
            });
        }
        if !(self.max_rot_deg >= 0.0 && self.max_rot_deg.is_finite()) {
            return Err(Error::param("max_rot_deg", self.max_rot_deg, "a non-negative angle"));
        }
        if !(0.0..=1.0).contains(&self.max_shift_frac) {
            return Err(Error::param("max_shift_frac", self.max_shift_frac, "a value in [0, 1]"));
        }
        Ok(())
    }
}

/// Rotate each channel by `angle` radians about the image center, then shift
/// by `(dy, dx)` pixels. Nearest-neighbour sampling, zero outside the source.
pub fn rotate_shift(image: &[f64], shape: ImageShape, angle: f64, dy: f64, dx: f64) -> Vec<f64> {
    let (h, w) = (shape.height, shape.width);
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let (sin, cos) = angle.sin_cos();
    let mut out = vec![0.0; image.len()];
    for r in 0..h {
        for c in 0..w {
            let y = r as f64 - dy - cy;
            let x = c as f64 - dx - cx;
            let sy = (-sin * x + cos * y + cy).round();
            let sx = (cos * x + sin * y + cx).round();
            if sy < 0.0 || sx < 0.0 || sy >= h as f64 || sx >= w as f64 {
                continue;
            }
            let (sy, sx) = (sy as usize, sx as usize);
            for ch in 0..shape.channels {
                let plane = ch * h * w;
                out[plane + r * w + c] = image[plane + sy * w + sx];
            }
        }
    }
    out
}

/// Independently perturbed copy of every row of `batch`.
pub fn augment_batch(batch: ArrayView2<'_, f64>, aug: &Augmentation, rng: &mut RngStream) -> Result<Array2<f64>> {
    aug.validate(batch.ncols())?;
    let max_dy = aug.shape.height as f64 * aug.max_shift_frac;
    let max_dx = aug.shape.width as f64 * aug.max_shift_frac;
    let mut out = Array2::zeros(batch.dim());
    for (src, mut dst) in batch.rows().into_iter().zip(out.rows_mut()) {
        let angle = if aug.max_rot_deg > 0.0 {
            rng.uniform_in(-aug.max_rot_deg, aug.max_rot_deg).to_radians()
        } else {
            0.0
        };
        let dy = if max_dy > 0.0 { rng.uniform_in(-max_dy, max_dy) } else { 0.0 };
        let dx = if max_dx > 0.0 { rng.uniform_in(-max_dx, max_dx) } else { 0.0 };
        let image = src.to_vec();
        let moved = rotate_shift(&image, aug.shape, angle, dy, dx);
        dst.assign(&ndarray::ArrayView1::from(&moved));
    }
    Ok(out)
}
