//! `FBFLOW01` snapshot files: a fixed little-endian header followed by the grid
//! values in row-major order.
//!
//! ```text
//! magic "FBFLOW01" | version u32 | mode u8 | nx u32 | ny u32 | origin 2 x f64 | h f64 | t f64
//! nx * ny f64 values, row j = 0 first
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{FlowError, Result};
use crate::geometry::{Mode, Vec2};
use crate::grid::{Grid2, GridField};

pub const MAGIC: &[u8; 8] = b"FBFLOW01";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 1 + 4 + 4 + 8 * 4;

pub fn encode_snapshot(field: &GridField, t: f64) -> Vec<u8> {
    let g = &field.grid;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * field.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match g.mode {
        Mode::Planar => 0,
        Mode::Axisym => 1,
    });
    out.extend_from_slice(&(g.nx as u32).to_le_bytes());
    out.extend_from_slice(&(g.ny as u32).to_le_bytes());
    for v in [g.origin.x, g.origin.y, g.h, t] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in &field.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(FlowError::Parse("snapshot truncated".into()));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

fn u32_at(bytes: &mut &[u8]) -> Result<u32> {
    Ok(u32::from_le_bytes(take(bytes, 4)?.try_into().unwrap()))
}

fn f64_at(bytes: &mut &[u8]) -> Result<f64> {
    Ok(f64::from_le_bytes(take(bytes, 8)?.try_into().unwrap()))
}

/// Decodes a snapshot into its field and time.
pub fn decode_snapshot(mut bytes: &[u8]) -> Result<(GridField, f64)> {
    let b = &mut bytes;
    if take(b, 8)? != MAGIC {
        return Err(FlowError::Parse("not an FBFLOW01 snapshot".into()));
    }
    let version = u32_at(b)?;
    if version != VERSION {
        return Err(FlowError::Parse(format!("unsupported snapshot version {version}")));
    }
    let mode = match take(b, 1)?[0] {
        0 => Mode::Planar,
        1 => Mode::Axisym,
        m => return Err(FlowError::Parse(format!("unknown mode byte {m}"))),
    };
    let nx = u32_at(b)? as usize;
    let ny = u32_at(b)? as usize;
    let origin = Vec2::new(f64_at(b)?, f64_at(b)?);
    let h = f64_at(b)?;
    let t = f64_at(b)?;
    let n = nx.checked_mul(ny).ok_or_else(|| FlowError::Parse("grid size overflows".into()))?;
    if b.len() != 8 * n {
        return Err(FlowError::Parse(format!("payload has {} bytes, expected {}", b.len(), 8 * n)));
    }
    let data = b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let grid = Grid2::new(nx, ny, origin, h, mode)?;
    Ok((GridField { grid, data }, t))
}

pub fn write_snapshot(path: impl AsRef<Path>, field: &GridField, t: f64) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_snapshot(field, t))?;
    Ok(())
}

pub fn read_snapshot(path: impl AsRef<Path>) -> Result<(GridField, f64)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_snapshot(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let g = Grid2::new(5, 4, Vec2::new(0.0, 0.5), 0.25, Mode::Axisym).unwrap();
        let f = GridField::from_fn(&g, |x| x.x * x.y);
        let bytes = encode_snapshot(&f, 0.125);
        assert_eq!(bytes.len(), 53 + 8 * 20);
        assert_eq!(&bytes[..8], b"FBFLOW01");
        assert_eq!(bytes[12], 1);
        assert_eq!(u32::from_le_bytes(bytes[13..17].try_into().unwrap()), 5);
        assert_eq!(f64::from_le_bytes(bytes[29..37].try_into().unwrap()), 0.5);
        assert_eq!(f64::from_le_bytes(bytes[45..53].try_into().unwrap()), 0.125);
    }

    #[test]
    fn rejects_truncated() {
        let g = Grid2::new(4, 4, Vec2::zeros(), 1.0, Mode::Planar).unwrap();
        let bytes = encode_snapshot(&GridField::zeros(&g), 0.0);
        assert!(decode_snapshot(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_snapshot(&bytes[..20]).is_err());
    }
}
