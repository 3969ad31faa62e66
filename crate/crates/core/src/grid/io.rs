//! Little-endian binary field files.
//!
//! Layout: 4-byte magic, `u32` dim, `dim x u32` shape, `f64` spacing,
//! `dim x f64` origin, `u32` time count, `count x f64` times, then the payload
//! of `f64` samples in row-major order, slice by slice. Vector files carry
//! `dim` interleaved components per cell.

use std::path::Path;

use super::{check_times, Grid, SpaceTimeField};
use crate::error::{Error, Result};

pub const FIELD_MAGIC: &[u8; 4] = b"TVF1";

/// Serialises a grid, its time stamps and a payload under `magic`.
pub fn encode(magic: &[u8; 4], grid: &Grid, times: &[f64], payload: &[f64]) -> Vec<u8> {
    let dim = grid.dim();
    let mut out = Vec::with_capacity(4 + 4 + dim * 12 + 8 + 4 + times.len() * 8 + payload.len() * 8);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for &n in grid.shape() {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    out.extend_from_slice(&grid.spacing().to_le_bytes());
    for &o in grid.origin() {
        out.extend_from_slice(&o.to_le_bytes());
    }
    out.extend_from_slice(&(times.len() as u32).to_le_bytes());
    for &t in times {
        out.extend_from_slice(&t.to_le_bytes());
    }
    for &v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    expected: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        self.expected = self.expected.max(self.pos + n);
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated {
                expected: self.expected,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses a file written by [`encode`]. `components` maps the spatial
/// dimension to the number of values stored per cell and time.
pub fn decode(
    magic: &[u8; 4],
    bytes: &[u8],
    components: impl Fn(usize) -> usize,
) -> Result<(Grid, Vec<f64>, Vec<f64>)> {
    let mut c = Cursor {
        bytes,
        pos: 0,
        expected: 0,
    };
    let found = c.take(4).map_err(|_| Error::BadMagic {
        expected: String::from_utf8_lossy(magic).into_owned(),
        found: String::from_utf8_lossy(bytes).into_owned(),
    })?;
    if found != magic {
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(found).into_owned(),
        });
    }
    let dim = c.u32()? as usize;
    if !(1..=3).contains(&dim) {
        return Err(Error::InvalidInput(format!("file declares dimension {dim}")));
    }
    let mut shape = Vec::with_capacity(dim);
    for _ in 0..dim {
        shape.push(c.u32()? as usize);
    }
    let spacing = c.f64()?;
    let mut origin = Vec::with_capacity(dim);
    for _ in 0..dim {
        origin.push(c.f64()?);
    }
    let nt = c.u32()? as usize;
    let mut times = Vec::with_capacity(nt);
    for _ in 0..nt {
        times.push(c.f64()?);
    }
    check_times(&times)?;
    let grid = Grid::new(shape, spacing, origin)?;
    let count = grid.cells() * nt * components(dim);
    let expected = c.pos + count * 8;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::InvalidInput(format!(
            "{} trailing bytes after payload",
            bytes.len() - expected
        )));
    }
    let payload = bytes[c.pos..]
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok((grid, times, payload))
}

impl SpaceTimeField {
    pub fn to_bytes(&self) -> Vec<u8> {
        encode(FIELD_MAGIC, self.grid(), self.times(), self.data())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (grid, times, data) = decode(FIELD_MAGIC, bytes, |_| 1)?;
        Self::new(grid, times, data)
    }
}

pub fn write_field(field: &SpaceTimeField, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, field.to_bytes())?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<SpaceTimeField> {
    SpaceTimeField::from_bytes(&std::fs::read(path)?)
}
