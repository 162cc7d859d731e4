//! Flat binary dump for dense maps: an ASCII header line `H W C f32`
//! followed by `H*W*C` little-endian float32 values in row-major
//! (row, column, channel) order.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::geom::Grid2D;

pub fn write_grid<W: Write>(grid: &Grid2D, mut out: W) -> Result<()> {
    writeln!(out, "{} {} {} f32", grid.height, grid.width, grid.channels)?;
    let mut buf = Vec::with_capacity(grid.data.len() * 4);
    for &v in &grid.data {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn grid_to_bytes(grid: &Grid2D) -> Vec<u8> {
    let mut out = Vec::new();
    write_grid(grid, &mut out).expect("writing to a Vec cannot fail");
    out
}

pub fn read_grid<R: Read>(mut input: R) -> Result<Grid2D> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    grid_from_bytes(&bytes)
}

pub fn grid_from_bytes(bytes: &[u8]) -> Result<Grid2D> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| header_err("missing header line"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| header_err("header is not ASCII"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[3] != "f32" {
        return Err(header_err("expected `H W C f32`"));
    }
    let dim = |s: &str| s.parse::<usize>().map_err(|_| header_err("bad dimension"));
    let (h, w, c) = (dim(fields[0])?, dim(fields[1])?, dim(fields[2])?);
    let payload = &bytes[nl + 1..];
    if payload.len() != h * w * c * 4 {
        return Err(Error::Shape(format!(
            "payload holds {} bytes, header promises {}",
            payload.len(),
            h * w * c * 4
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    Grid2D::from_vec(h, w, c, data)
}

fn header_err(msg: &str) -> Error {
    Error::Parse {
        line: 1,
        msg: msg.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_payload_layout() {
        let g = Grid2D::from_vec(1, 2, 1, vec![1.0, -2.5]).unwrap();
        let bytes = grid_to_bytes(&g);
        assert!(bytes.starts_with(b"1 2 1 f32\n"));
        assert_eq!(&bytes[10..14], &1.0f32.to_le_bytes());
        assert_eq!(grid_from_bytes(&bytes).unwrap(), g);
    }

    #[test]
    fn rejects_short_payload() {
        let mut bytes = grid_to_bytes(&Grid2D::zeros(2, 2, 1));
        bytes.pop();
        assert!(grid_from_bytes(&bytes).is_err());
        assert!(grid_from_bytes(b"2 2 f32\n").is_err());
    }
}
