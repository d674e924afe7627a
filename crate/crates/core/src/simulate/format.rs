//! CSV and binary encodings of [`FieldSample`].
//!
//! Binary layout, all little-endian:
//!
//! | offset | size  | field                                  |
//! |--------|-------|----------------------------------------|
//! | 0      | 4     | magic `GRFS`                           |
//! | 4      | 2     | format version (`1`)                   |
//! | 6      | 1     | method (`0` spectral, `1` cholesky)    |
//! | 7      | 1     | reserved, `0`                          |
//! | 8      | 4     | `d`                                    |
//! | 12     | 8     | seed                                   |
//! | 20     | 8     | `T` as f64                             |
//! | 28     | 4·d   | points per axis, one u32 per axis      |
//! | 28+4d  | 8·N   | values as f64, row-major, last axis fastest |

use std::io::Write;

use super::{FieldSample, GridSpec, Method};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GRFS";
pub const VERSION: u16 = 1;
const HEADER: usize = 28;
/// Dimensions beyond this are rejected by the decoder.
const MAX_DIM: u32 = 64;

pub fn encode_binary(sample: &FieldSample) -> Vec<u8> {
    let d = sample.grid.d;
    let mut out = Vec::with_capacity(HEADER + 4 * d + 8 * sample.values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match sample.method {
        Method::Spectral => 0,
        Method::Cholesky => 1,
    });
    out.push(0);
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&sample.seed.to_le_bytes());
    out.extend_from_slice(&sample.grid.t_half.to_le_bytes());
    for _ in 0..d {
        out.extend_from_slice(&(sample.grid.points_per_axis as u32).to_le_bytes());
    }
    for v in &sample.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated input while reading {what}")))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_binary(bytes: &[u8]) -> Result<FieldSample> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic, expected GRFS".into()));
    }
    let version = u16::from_le_bytes(r.take(2, "version")?.try_into().expect("2 bytes"));
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let method = match r.take(1, "method")?[0] {
        0 => Method::Spectral,
        1 => Method::Cholesky,
        m => return Err(Error::Format(format!("unknown method code {m}"))),
    };
    if r.take(1, "reserved byte")?[0] != 0 {
        return Err(Error::Format("reserved byte must be 0".into()));
    }
    let d = r.u32("dimension")?;
    if d == 0 || d > MAX_DIM {
        return Err(Error::Format(format!("dimension {d} outside 1..={MAX_DIM}")));
    }
    let seed = r.u64("seed")?;
    let t_half = f64::from_bits(r.u64("T")?);
    let mut dims = Vec::with_capacity(d as usize);
    for _ in 0..d {
        dims.push(r.u32("axis size")?);
    }
    let p = dims[0];
    if dims.iter().any(|x| *x != p) {
        return Err(Error::Format(format!("axis sizes {dims:?} differ; only cubic grids are supported")));
    }
    let grid = GridSpec {
        t_half,
        points_per_axis: p as usize,
        d: d as usize,
    };
    grid.check().map_err(|e| Error::Format(e.to_string()))?;
    let n = grid.len();
    let payload_len = n
        .checked_mul(8)
        .ok_or_else(|| Error::Format("payload size overflows".into()))?;
    let remaining = bytes.len() - r.pos;
    if remaining != payload_len {
        return Err(Error::Format(format!(
            "payload has {remaining} bytes, header implies {payload_len}"
        )));
    }
    let values = r
        .take(payload_len, "values")?
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(FieldSample {
        grid,
        values,
        method,
        seed,
        meta: None,
    })
}

/// Columns `x0,…,x{d-1},value`, one row per grid point.
pub fn write_csv<W: Write>(sample: &FieldSample, mut w: W) -> Result<()> {
    let d = sample.grid.d;
    let header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    writeln!(w, "{},value", header.join(","))?;
    for (p, v) in sample.grid.points().iter().zip(&sample.values) {
        for x in p {
            write!(w, "{x},")?;
        }
        writeln!(w, "{v}")?;
    }
    Ok(())
}
