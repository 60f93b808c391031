//! `LFSLAB1` binary container for a [`LightFieldSlab`].
//!
//! ```text
//! b"LFSLAB1\0"
//! u32 width, u32 height, u32 u_samples, u32 channels      (little endian)
//! f32 samples, y-major then u, x, channel                (little endian)
//! u32 trailer length, trailer bytes (UTF-8 JSON of SlabMeta)
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::tomography::{LightFieldSlab, SlabMeta};

pub const MAGIC: &[u8; 8] = b"LFSLAB1\0";

pub fn write_slab<W: Write>(slab: &LightFieldSlab, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    for dim in [slab.width(), slab.height(), slab.u_samples(), slab.channels()] {
        let dim = u32::try_from(dim).map_err(|_| Error::Format(format!("dimension {dim} exceeds u32")))?;
        out.write_all(&dim.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(slab.data().len() * 4);
    for v in slab.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    let trailer = serde_json::to_vec(slab.meta()).map_err(|e| Error::Format(e.to_string()))?;
    out.write_all(&(trailer.len() as u32).to_le_bytes())?;
    out.write_all(&trailer)?;
    Ok(())
}

pub fn encode_slab(slab: &LightFieldSlab) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + slab.data().len() * 4 + 512);
    write_slab(slab, &mut out).expect("writing to memory cannot fail");
    out
}

fn read_u32<R: Read>(input: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b).map_err(|_| Error::Format(format!("truncated before {what}")))?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_slab<R: Read>(mut input: R) -> Result<LightFieldSlab> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(|_| Error::Format("file shorter than the magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let width = read_u32(&mut input, "width")? as usize;
    let height = read_u32(&mut input, "height")? as usize;
    let u_samples = read_u32(&mut input, "u count")? as usize;
    let channels = read_u32(&mut input, "channels")? as usize;
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(u_samples))
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::Format("dimensions overflow".into()))?;
    let mut raw = Vec::new();
    let want = count as u64 * 4;
    (&mut input).take(want).read_to_end(&mut raw)?;
    if raw.len() as u64 != want {
        return Err(Error::Format(format!("expected {want} sample bytes, found {}", raw.len())));
    }
    let data: Vec<f32> = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
    let len = read_u32(&mut input, "trailer length")? as usize;
    let mut trailer = Vec::new();
    (&mut input).take(len as u64).read_to_end(&mut trailer)?;
    if trailer.len() != len {
        return Err(Error::Format("truncated trailer".into()));
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after the trailer".into()));
    }
    let meta: SlabMeta = serde_json::from_slice(&trailer).map_err(|e| Error::Format(format!("trailer: {e}")))?;
    LightFieldSlab::new(width, height, u_samples, channels, data, meta).map_err(|e| Error::Format(e.to_string()))
}

pub fn decode_slab(bytes: &[u8]) -> Result<LightFieldSlab> {
    read_slab(bytes)
}
