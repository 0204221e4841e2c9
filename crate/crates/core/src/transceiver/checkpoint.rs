//! Binary checkpoint format, all integers `u32` and floats `f64`, little-endian:
//!
//! ```text
//! magic "SEMCKPT1"
//! variant tag
//! K, N_t, N_r, N_B, h, n
//! tensor count
//! per tensor: rank, dims[rank], values[Π dims]
//! ```
//!
//! Tensors follow [`TransceiverParams::tensors`] order.

use std::io::{Read, Write};

use super::{ModelDims, TransceiverParams, Variant};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SEMCKPT1";

fn put(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn write_checkpoint<W: Write>(mut w: W, params: &TransceiverParams) -> Result<()> {
    let d = &params.dims;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&params.variant.tag().to_le_bytes())?;
    for v in [d.users, d.tx, d.rx, d.block_len, d.hidden, d.image_len] {
        put(&mut w, v)?;
    }
    let tensors = params.tensors();
    put(&mut w, tensors.len())?;
    for t in tensors {
        put(&mut w, t.shape().len())?;
        for &s in t.shape() {
            put(&mut w, s)?;
        }
        let mut buf = Vec::with_capacity(8 * t.numel());
        for x in t.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn get(r: &mut impl Read, what: &str) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|e| Error::Checkpoint(format!("reading {what}: {e}")))?;
    Ok(u32::from_le_bytes(b) as usize)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<TransceiverParams> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|e| Error::Checkpoint(format!("reading magic: {e}")))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let tag = get(&mut r, "variant")? as u32;
    let variant = Variant::from_tag(tag).ok_or_else(|| Error::Checkpoint(format!("unknown variant tag {tag}")))?;
    let mut h = [0usize; 6];
    for (v, name) in h.iter_mut().zip(["K", "N_t", "N_r", "N_B", "h", "n"]) {
        *v = get(&mut r, name)?;
    }
    let dims = ModelDims {
        users: h[0],
        tx: h[1],
        rx: h[2],
        block_len: h[3],
        hidden: h[4],
        image_len: h[5],
    };
    dims.validate(variant).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let count = get(&mut r, "tensor count")?;
    if count > 1 << 20 {
        return Err(Error::Checkpoint(format!("implausible tensor count {count}")));
    }
    let mut tensors = Vec::with_capacity(count);
    for i in 0..count {
        let rank = get(&mut r, "rank")?;
        if rank > 8 {
            return Err(Error::Checkpoint(format!("tensor {i}: implausible rank {rank}")));
        }
        let shape = (0..rank).map(|_| get(&mut r, "dimension")).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        if n > 1 << 28 {
            return Err(Error::Checkpoint(format!("tensor {i}: implausible size {n}")));
        }
        let mut bytes = vec![0u8; 8 * n];
        r.read_exact(&mut bytes)
            .map_err(|e| Error::Checkpoint(format!("tensor {i}: {e}")))?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor::new(shape, data)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
    }
    TransceiverParams::from_tensors(variant, dims, tensors)
}
