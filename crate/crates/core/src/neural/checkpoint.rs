//! Binary parameter checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! b"ISACAE01"
//! per network:
//!   u32      layer count L
//!   u32×L+1  layer dims (input first)
//!   per layer: f64×(d_out·d_in) weights, row-major (d_out, d_in); f64×d_out biases
//! ```

use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use crate::error::{IsacError, Result};

use super::mlp::{Activation, Dense, Mlp};

pub const MAGIC: &[u8; 8] = b"ISACAE01";

pub fn write_networks<W: Write>(mut w: W, nets: &[&Mlp]) -> Result<()> {
    w.write_all(MAGIC)?;
    for net in nets {
        let layers = net.layers();
        w.write_all(&(layers.len() as u32).to_le_bytes())?;
        for d in net.dims() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for layer in layers {
            for v in layer.weights.iter().chain(layer.biases.iter()) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads one network per entry of `activations`, in order.
pub fn read_networks<R: Read>(mut r: R, activations: &[Activation]) -> Result<Vec<Mlp>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(IsacError::Checkpoint("bad magic, not an ISACAE01 checkpoint".into()));
    }
    let mut nets = Vec::with_capacity(activations.len());
    for &act in activations {
        let count = read_u32(&mut r)? as usize;
        if count == 0 || count > 64 {
            return Err(IsacError::Checkpoint(format!("implausible layer count {count}")));
        }
        let dims = (0..=count)
            .map(|_| read_u32(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        if dims.iter().any(|d| *d == 0 || *d > 1 << 16) {
            return Err(IsacError::Checkpoint(format!("implausible dims {dims:?}")));
        }
        let mut layers = Vec::with_capacity(count);
        for w in dims.windows(2) {
            let (d_in, d_out) = (w[0], w[1]);
            let weights = read_f64s(&mut r, d_in * d_out)?;
            let biases = read_f64s(&mut r, d_out)?;
            layers.push(Dense {
                weights: Array2::from_shape_vec((d_out, d_in), weights).expect("sized read"),
                biases: Array1::from(biases),
            });
        }
        nets.push(Mlp::from_layers(layers, act)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(IsacError::Checkpoint("trailing bytes after last network".into()));
    }
    Ok(nets)
}

fn truncated(e: std::io::Error) -> IsacError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        IsacError::Checkpoint("truncated checkpoint".into())
    } else {
        IsacError::Io(e)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}
