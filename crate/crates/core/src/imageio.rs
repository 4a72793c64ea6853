//! Grayscale image and raw grid files.
//!
//! A `.grid` file is one ASCII header line `grid <rows> <cols>` followed by
//! `rows*cols` little-endian f64 values in row-major order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use image::{ImageBuffer, Luma};

use crate::error::{Error, Result};
use crate::grid::Image2D;

/// Read an 8- or 16-bit grayscale (or colour, converted to luma) raster into `[0, 1]`.
pub fn load_image(path: &Path) -> Result<Image2D> {
    let img = image::open(path)?.into_luma16();
    let (w, h) = img.dimensions();
    Image2D::from_vec(h as usize, w as usize, img.into_raw().into_iter().map(|v| f64::from(v) / 65535.0).collect())
}

/// Write a 16-bit grayscale image, min-max scaled to the full range (constant images map to 0).
/// The format follows the extension (`.png`, `.pgm`).
pub fn save_gray16(path: &Path, img: &Image2D) -> Result<()> {
    let (lo, hi) = (img.min(), img.max());
    let scale = if hi > lo { 65535.0 / (hi - lo) } else { 0.0 };
    let raw: Vec<u16> = img.data().iter().map(|v| ((v - lo) * scale).round().clamp(0.0, 65535.0) as u16).collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(img.cols() as u32, img.rows() as u32, raw).expect("buffer matches dimensions");
    buf.save(path)?;
    Ok(())
}

pub fn write_grid<W: Write>(mut w: W, img: &Image2D) -> Result<()> {
    writeln!(w, "grid {} {}", img.rows(), img.cols())?;
    for v in img.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_grid<R: BufRead>(mut r: R) -> Result<Image2D> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let parts: Vec<&str> = line.split_whitespace().collect();
    let bad = || Error::Input(format!("bad grid header '{}'", line.trim_end()));
    if parts.len() != 3 || parts[0] != "grid" {
        return Err(bad());
    }
    let rows: usize = parts[1].parse().map_err(|_| bad())?;
    let cols: usize = parts[2].parse().map_err(|_| bad())?;
    let mut buf = vec![0u8; rows * cols * 8];
    r.read_exact(&mut buf).map_err(|_| Error::Input(format!("grid body shorter than {rows}x{cols} values")))?;
    Image2D::from_vec(rows, cols, buf.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect())
}

pub fn save_grid(path: &Path, img: &Image2D) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_grid(&mut w, img)?;
    w.flush()?;
    Ok(())
}

pub fn load_grid(path: &Path) -> Result<Image2D> {
    read_grid(BufReader::new(File::open(path)?))
}

/// `.grid` files keep their values; raster images come back in `[0, 1]`.
pub fn load_any(path: &Path) -> Result<Image2D> {
    if !path.exists() {
        return Err(Error::Input(format!("input file {} does not exist", path.display())));
    }
    if is_grid(path) {
        load_grid(path)
    } else {
        load_image(path)
    }
}

pub fn is_grid(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("grid"))
}
