//! Binary tensor container.
//!
//! Layout, all little-endian: magic `TASS`, format version `u32`, rank `u32`,
//! `rank` extents as `u32`, then the payload as IEEE-754 `f32` in row-major
//! order. Values are promoted to `f64` on read.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Result, TassError};
use crate::numcore::Tensor;

pub const MAGIC: &[u8; 4] = b"TASS";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode_tensor(t: &Tensor) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(12 + 4 * t.rank() + 4 * t.numel());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &e in t.shape() {
        let e = u32::try_from(e)
            .map_err(|_| TassError::Contract(format!("extent {e} does not fit in u32")))?;
        buf.extend_from_slice(&e.to_le_bytes());
    }
    for (i, &v) in t.data().iter().enumerate() {
        let s = v as f32;
        if !s.is_finite() {
            return Err(TassError::Domain(format!(
                "entry {i} = {v} is not representable as a finite f32"
            )));
        }
        buf.extend_from_slice(&s.to_le_bytes());
    }
    Ok(buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(TassError::Format {
                offset: self.pos as u64,
                message: format!("truncated while reading {what}"),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }
}

fn decode_header(reader: &mut Reader<'_>) -> Result<Vec<usize>> {
    if reader.take(4, "magic")? != MAGIC {
        return Err(TassError::Format {
            offset: 0,
            message: "bad magic, expected \"TASS\"".into(),
        });
    }
    let version = reader.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(TassError::Format {
            offset: 4,
            message: format!("unsupported format version {version}"),
        });
    }
    let rank = reader.u32("rank")? as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let at = reader.pos as u64;
        let e = reader.u32("extent")? as usize;
        if e == 0 {
            return Err(TassError::Format {
                offset: at,
                message: "zero extent".into(),
            });
        }
        shape.push(e);
    }
    Ok(shape)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    let mut reader = Reader { bytes, pos: 0 };
    let shape = decode_header(&mut reader)?;
    let numel = shape.iter().try_fold(1usize, |acc, &e| acc.checked_mul(e)).ok_or(
        TassError::Format {
            offset: 12,
            message: "extent product overflows".into(),
        },
    )?;
    let payload = reader.take(numel.saturating_mul(4), "payload")?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    if reader.pos != bytes.len() {
        return Err(TassError::Format {
            offset: reader.pos as u64,
            message: format!("{} trailing bytes", bytes.len() - reader.pos),
        });
    }
    Tensor::new(&shape, data)
}

pub fn write_tensor_file(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_tensor(t)?;
    let mut file = fs::File::create(path).map_err(|e| TassError::io(path, e))?;
    file.write_all(&bytes).map_err(|e| TassError::io(path, e))
}

pub fn read_tensor_file(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| TassError::io(path, e))?;
    decode_tensor(&bytes)
}

/// Reads only the shape header of a tensor file.
pub fn read_tensor_shape(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let mut file = fs::File::open(path).map_err(|e| TassError::io(path, e))?;
    let mut head = [0u8; 12];
    let n = read_up_to(&mut file, &mut head).map_err(|e| TassError::io(path, e))?;
    let rank = if n == 12 {
        u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize
    } else {
        0
    };
    let mut bytes = head[..n].to_vec();
    if n == 12 {
        let mut extents = vec![0u8; rank.min(64) * 4];
        let m = read_up_to(&mut file, &mut extents).map_err(|e| TassError::io(path, e))?;
        bytes.extend_from_slice(&extents[..m]);
    }
    decode_header(&mut Reader { bytes: &bytes, pos: 0 })
}

fn read_up_to(r: &mut impl std::io::Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}
