//! Binary checkpoint of network parameters and optimizer state.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic        4 bytes   "IDCL"
//! version      u32       1
//! layer_count  u32       L (even: first L/2 layers are the encoder)
//! L times:
//!   rows       u32       fan_in
//!   cols       u32       fan_out
//!   weight     rows*cols f64, row-major
//!   bias       cols f64
//! step_count   u64
//! lr, beta1, beta2, eps  f64 each
//! L times:     first moment  (rows*cols + cols f64, same order as the layer)
//! L times:     second moment (rows*cols + cols f64)
//! ```
//!
//! Hidden layers are ReLU; the last layer of each half is linear.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Activation, Dense, NetworkParams, OptimizerState};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"IDCL";
pub const FORMAT_VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64s<'a>(w: &mut impl Write, vs: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn get<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("checkpoint is truncated".into()),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(get::<4>(r)?))
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(get::<8>(r)?))
}

fn get_matrix(r: &mut impl Read, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let data = (0..rows * cols).map(|_| get_f64(r)).collect::<Result<Vec<_>>>()?;
    Ok(Array2::from_shape_vec((rows, cols), data).expect("length matches shape"))
}

fn get_vector(r: &mut impl Read, len: usize) -> Result<Array1<f64>> {
    Ok(Array1::from((0..len).map(|_| get_f64(r)).collect::<Result<Vec<_>>>()?))
}

pub fn write_checkpoint(w: &mut impl Write, params: &NetworkParams, opt: &OptimizerState) -> Result<()> {
    if params.encoder.len() != params.decoder.len() {
        return Err(Error::Format("checkpoint requires a mirrored encoder/decoder".into()));
    }
    w.write_all(MAGIC)?;
    put_u32(w, FORMAT_VERSION)?;
    put_u32(w, params.layer_count() as u32)?;
    for layer in params.layers() {
        put_u32(w, layer.fan_in() as u32)?;
        put_u32(w, layer.fan_out() as u32)?;
        put_f64s(w, layer.weight.iter())?;
        put_f64s(w, layer.bias.iter())?;
    }
    w.write_all(&opt.step_count.to_le_bytes())?;
    put_f64s(w, [opt.lr, opt.beta1, opt.beta2, opt.eps].iter())?;
    for moments in [&opt.first_moment, &opt.second_moment] {
        for (mw, mb) in moments {
            put_f64s(w, mw.iter())?;
            put_f64s(w, mb.iter())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<(NetworkParams, OptimizerState)> {
    let magic = get::<4>(r)?;
    if &magic != MAGIC {
        return Err(Error::BadMagic {
            what: "checkpoint",
            expected: u32::from_be_bytes(*MAGIC),
            found: u32::from_be_bytes(magic),
        });
    }
    let version = get_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let count = get_u32(r)? as usize;
    if count == 0 || count % 2 != 0 {
        return Err(Error::Format(format!("layer count {count} is not a positive even number")));
    }
    let half = count / 2;
    let mut layers = Vec::with_capacity(count);
    for l in 0..count {
        let rows = get_u32(r)? as usize;
        let cols = get_u32(r)? as usize;
        let weight = get_matrix(r, rows, cols)?;
        let bias = get_vector(r, cols)?;
        let activation = if l + 1 == half || l + 1 == count {
            Activation::Identity
        } else {
            Activation::Relu
        };
        layers.push(Dense {
            weight,
            bias,
            activation,
        });
    }
    let decoder = layers.split_off(half);
    let params = NetworkParams::from_layers(layers, decoder)?;

    let step_count = u64::from_le_bytes(get::<8>(r)?);
    let lr = get_f64(r)?;
    let beta1 = get_f64(r)?;
    let beta2 = get_f64(r)?;
    let eps = get_f64(r)?;
    let mut read_moments = || -> Result<Vec<(Array2<f64>, Array1<f64>)>> {
        params
            .layers()
            .map(|l| {
                let (rows, cols) = l.weight.dim();
                Ok((get_matrix(r, rows, cols)?, get_vector(r, cols)?))
            })
            .collect()
    };
    let first_moment = read_moments()?;
    let second_moment = read_moments()?;
    Ok((
        params,
        OptimizerState {
            first_moment,
            second_moment,
            step_count,
            lr,
            beta1,
            beta2,
            eps,
        },
    ))
}

/// Write to `path` through a sibling temporary file and rename it into place.
pub fn save(path: &Path, params: &NetworkParams, opt: &OptimizerState) -> Result<()> {
    crate::data::write_atomic(path, |w| write_checkpoint(w, params, opt))
}

pub fn load(path: &Path) -> Result<(NetworkParams, OptimizerState)> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}
