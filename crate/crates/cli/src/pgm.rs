//! Binary (P5) PGM output for sample grids.

use std::path::Path;

use anyhow::{bail, Context, Result};

/// Grey level of the 1-pixel separators between tiles.
pub const SEPARATOR: u8 = 128;

/// Tiles `h × w` images row-major into a grid `cols` wide with 1-pixel
/// separators. Unused trailing cells are left at the separator level.
pub fn grid(tiles: &[Vec<u8>], h: usize, w: usize, cols: usize) -> Result<(usize, usize, Vec<u8>)> {
    if tiles.is_empty() || cols == 0 {
        bail!("empty image grid");
    }
    if let Some(t) = tiles.iter().find(|t| t.len() != h * w) {
        bail!("tile has {} pixels, expected {}", t.len(), h * w);
    }
    let cols = cols.min(tiles.len());
    let rows = tiles.len().div_ceil(cols);
    let width = cols * w + cols - 1;
    let height = rows * h + rows - 1;
    let mut px = vec![SEPARATOR; width * height];
    for (k, tile) in tiles.iter().enumerate() {
        let (r, c) = (k / cols, k % cols);
        for y in 0..h {
            let start = (r * (h + 1) + y) * width + c * (w + 1);
            px[start..start + w].copy_from_slice(&tile[y * w..(y + 1) * w]);
        }
    }
    Ok((width, height, px))
}

pub fn encode(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

pub fn write_grid(path: &Path, tiles: &[Vec<u8>], h: usize, w: usize, cols: usize) -> Result<()> {
    let (width, height, px) = grid(tiles, h, w, cols)?;
    std::fs::write(path, encode(width, height, &px)).with_context(|| format!("writing {}", path.display()))
}

/// Parses a P5 file written by [`encode`].
pub fn decode(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            bail!("truncated PGM header");
        }
        fields.push(std::str::from_utf8(&bytes[start..pos])?.to_string());
    }
    if fields[0] != "P5" || fields[3] != "255" {
        bail!("not an 8-bit P5 image");
    }
    let (w, h): (usize, usize) = (fields[1].parse()?, fields[2].parse()?);
    let data = &bytes[pos + 1..];
    if data.len() != w * h {
        bail!("PGM payload has {} bytes, expected {}", data.len(), w * h);
    }
    Ok((w, h, data.to_vec()))
}
